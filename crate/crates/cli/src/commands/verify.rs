//! Closed forms against Monte Carlo means.

use anyhow::Result;
use serde_json::json;
use stelab_core::gaussian::{gauss_capped_moments, gauss_indicator_moments};
use stelab_core::landscape::{critical_points, params_at_angle};
use stelab_core::linalg::{dot, norm};
use stelab_core::monte_carlo::SampleEvaluator;
use stelab_core::{
    estimate_expectation, expected_coarse_grad, population_grad_v, population_loss, McEstimate,
    ModelParams, SampleBatch, SteKind, TeacherParams,
};

use crate::output::{fmt_f64, CheckRecord, CsvTable, Report};
use crate::spec::{child_rng, child_seed, gaussian_vec, seed_offset, ExperimentSpec};

/// Below this many samples the 4σ checks have little power.
pub const LOW_POWER_SAMPLES: usize = 1_000;

fn mc_record(name: &str, est: McEstimate, exact: Vec<f64>, k: f64) -> CheckRecord {
    let z = est.z_scores(&exact);
    let max_z = z.iter().cloned().fold(0.0, f64::max);
    CheckRecord {
        mean: Some(est.mean),
        closed_form: Some(exact),
        std_error: Some(est.std_error),
        max_abs_z: Some(max_z),
        bound: Some(k),
        ..CheckRecord::new(name, max_z <= k)
    }
}

fn batch(spec: &ExperimentSpec, index: u64, rows: usize, cols: usize) -> Result<SampleBatch> {
    Ok(SampleBatch::new(
        child_seed(spec.seed, seed_offset::VERIFY + index),
        spec.samples,
        rows,
        cols,
    )?)
}

fn model_checks(
    spec: &ExperimentSpec,
    p: &ModelParams,
    t: &TeacherParams,
    first_index: u64,
    label: &str,
    kinds: &[SteKind],
) -> Result<Vec<CheckRecord>> {
    let (m, n) = (p.m(), p.n());
    let ev = SampleEvaluator::new(p, t)?;
    let mut out = Vec::new();
    let mut idx = first_index;

    let est = estimate_expectation(&batch(spec, idx, m, n)?, 1, |z, o| o[0] = ev.loss(z))?;
    out.push(mc_record(&format!("{label}loss"), est, vec![population_loss(p, t)?], spec.tol));
    idx += 1;

    let est = estimate_expectation(&batch(spec, idx, m, n)?, m, |z, o| ev.grad_v_into(z, o))?;
    out.push(mc_record(&format!("{label}grad_v"), est, population_grad_v(p, t)?, spec.tol));
    idx += 1;

    for &kind in kinds {
        let est =
            estimate_expectation(&batch(spec, idx, m, n)?, n, |z, o| ev.coarse_grad_into(kind, z, o))?;
        let exact = expected_coarse_grad(kind, p, t)?.grad_w;
        out.push(mc_record(&format!("{label}coarse_grad_w/{kind}"), est, exact, spec.tol));
        idx += 1;
    }
    Ok(out)
}

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let t = spec.teacher()?;
    let (m, n) = (spec.m, spec.n);
    let mut rng = child_rng(spec.seed, seed_offset::START);
    let p = ModelParams::new(gaussian_vec(&mut rng, m), gaussian_vec(&mut rng, n))?;

    let mut warnings = Vec::new();
    if spec.samples < LOW_POWER_SAMPLES {
        warnings.push(format!(
            "low power: {} samples give standard errors too wide for the checks to be informative",
            spec.samples
        ));
    }

    let mut checks = model_checks(spec, &p, &t, 0, "", &SteKind::ALL)?;

    let (w, ws) = (p.w().to_vec(), t.w_star().to_vec());
    let exact = gauss_indicator_moments(&w, &ws)?;
    let est = estimate_expectation(&batch(spec, 10, 1, n)?, 2 + 2 * n, |z, o| {
        let z = z.row(0);
        let a = dot(z, &w) > 0.0;
        let b = dot(z, &ws) > 0.0;
        o[0] = f64::from(a as u8);
        o[1] = f64::from((a && b) as u8);
        for j in 0..n {
            o[2 + j] = if a { z[j] } else { 0.0 };
            o[2 + n + j] = if a && b { z[j] } else { 0.0 };
        }
    })?;
    let mut expected = vec![exact.prob_single, exact.prob_joint];
    expected.extend(&exact.vec_single);
    expected.extend(&exact.vec_joint);
    checks.push(mc_record("indicator_moments", est, expected, spec.tol));

    let exact = gauss_capped_moments(&w, &ws)?;
    let est = estimate_expectation(&batch(spec, 11, 1, n)?, 2 * n, |z, o| {
        let z = z.row(0);
        let zw = dot(z, &w);
        let band = zw > 0.0 && zw < 1.0;
        let joint = band && dot(z, &ws) > 0.0;
        for j in 0..n {
            o[j] = if band { z[j] } else { 0.0 };
            o[n + j] = if joint { z[j] } else { 0.0 };
        }
    })?;
    let mut expected = exact.vec_band.clone();
    expected.extend(&exact.vec_band_joint);
    checks.push(mc_record("capped_moments", est, expected, spec.tol));

    // the identity STE at the spurious point, where its expectation does not vanish
    let report = critical_points(&t);
    let ps = params_at_angle(&t, report.spurious_v, std::f64::consts::PI, norm(p.w()))?;
    checks.extend(model_checks(spec, &ps, &t, 20, "spurious/", &[SteKind::Identity])?);

    let mut table = CsvTable::new(vec![
        "check", "component", "mean", "closed_form", "std_error", "z", "passed",
    ]);
    for c in &checks {
        let (Some(mean), Some(cf), Some(se)) = (&c.mean, &c.closed_form, &c.std_error) else {
            continue;
        };
        for (i, ((a, b), s)) in mean.iter().zip(cf).zip(se).enumerate() {
            let z = if *s > 0.0 { (a - b).abs() / s } else if a == b { 0.0 } else { f64::INFINITY };
            table.push(vec![
                c.name.clone(),
                i.to_string(),
                fmt_f64(*a),
                fmt_f64(*b),
                fmt_f64(*s),
                fmt_f64(z),
                c.passed.to_string(),
            ]);
        }
    }
    let data = json!({
        "v": p.v(), "w": p.w(), "v_star": t.v_star(), "w_star": t.w_star(),
        "samples": spec.samples,
    });
    Ok(Report::new(spec, warnings, checks, data, table))
}
