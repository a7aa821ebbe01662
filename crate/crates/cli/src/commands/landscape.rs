//! Critical points of the population loss and the coarse-gradient residuals there.

use anyhow::Result;
use serde_json::json;
use stelab_core::landscape::{
    critical_points, params_at_angle, reduced_hessian_eigenvalues, spurious_correlation,
};
use stelab_core::ste::identity_norm_at_spurious;
use stelab_core::{stationarity_residual, SteKind};

use crate::output::{fmt_f64, fmt_vec, CheckRecord, CsvTable, Report};
use crate::spec::ExperimentSpec;

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let t = spec.teacher()?;
    let report = critical_points(&t);

    let mut points = vec![
        ("global", report.global_v.clone(), report.global_theta),
        ("spurious", report.spurious_v.clone(), report.spurious_theta),
    ];
    if let (Some(v), Some(th)) = (&report.saddle_v, report.saddle_theta) {
        points.push(("saddle", v.clone(), th));
    }

    let mut warnings = Vec::new();
    if !report.spurious_is_minimizer {
        warnings.push(format!(
            "(spurious_v, π) is stationary but not a local minimizer: spurious_vᵀv* = {} ≥ 0",
            spurious_correlation(t.v_star())
        ));
    }

    let mut checks = Vec::new();
    let mut table = CsvTable::new(vec!["point", "theta", "v", "ste", "residual"]);
    let mut residuals = Vec::new();
    for (name, v, th) in &points {
        let p = params_at_angle(&t, v.clone(), *th, spec.w_norm)?;
        for kind in SteKind::ALL {
            let r = stationarity_residual(&p, &t, kind)?;
            table.push(vec![
                name.to_string(),
                fmt_f64(*th),
                fmt_vec(v),
                kind.to_string(),
                fmt_f64(r),
            ]);
            residuals.push(json!({"point": name, "ste": kind, "residual": r}));
            if kind != SteKind::Identity {
                checks.push(CheckRecord::at_most(format!("{name}/{kind} residual"), r, spec.tol));
            } else if *name == "spurious" {
                let expected = identity_norm_at_spurious(t.v_star());
                let gap = (r - expected).abs();
                checks.push(
                    CheckRecord::at_most("spurious/identity residual matches nonvanishing norm", gap, 1e-10)
                        .with_note(format!("expected norm {expected}")),
                );
            }
        }
    }
    let hessian = match report.saddle_theta {
        Some(_) => {
            let (lo, hi) = reduced_hessian_eigenvalues(t.v_star())?;
            checks.push(CheckRecord::new("saddle Hessian indefinite", lo < 0.0 && hi > 0.0));
            Some([lo, hi])
        }
        None => None,
    };
    let data = json!({
        "v_star": t.v_star(),
        "w_star": t.w_star(),
        "w_norm": spec.w_norm,
        "critical_points": report,
        "reduced_hessian_eigenvalues": hessian,
        "residuals": residuals,
    });
    Ok(Report::new(spec, warnings, checks, data, table))
}
