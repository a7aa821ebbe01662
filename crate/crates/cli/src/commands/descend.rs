//! A single coarse-gradient-descent run from a seeded start.

use anyhow::Result;
use serde_json::json;
use stelab_core::optimizer::TrajectoryRecord;
use stelab_core::{run as descend_run, DescentConfig, EtaMode, ModelParams, RunOutcome, SteKind};

use crate::output::{fmt_f64, CheckRecord, CsvTable, Report};
use crate::spec::{child_rng, gaussian_vec, seed_offset, ExperimentSpec};

pub const MAX_HALVINGS: u32 = 60;

pub fn config(spec: &ExperimentSpec, kind: SteKind) -> DescentConfig {
    let mut cfg = DescentConfig::new(kind, spec.eta);
    cfg.max_iters = spec.iters;
    cfg.classify_tol = spec.tol;
    if spec.halve {
        cfg.eta_mode = EtaMode::HalveUntilMonotone {
            max_halvings: MAX_HALVINGS,
        };
    }
    cfg
}

pub fn trajectory_table(rows: &[(SteKind, &TrajectoryRecord)]) -> CsvTable {
    let mut table = CsvTable::new(vec![
        "ste",
        "iter",
        "loss",
        "grad_v_norm",
        "coarse_grad_w_norm",
        "theta",
        "w_norm",
    ]);
    for (kind, r) in rows {
        table.push(vec![
            kind.to_string(),
            r.iter.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.grad_v_norm),
            fmt_f64(r.coarse_grad_w_norm),
            fmt_f64(r.theta),
            fmt_f64(r.w_norm),
        ]);
    }
    table
}

/// Assertions for runs of the STEs with a descent guarantee.
pub fn outcome_checks(label: &str, kind: SteKind, out: &RunOutcome, halving: bool) -> Vec<CheckRecord> {
    if kind == SteKind::Identity {
        return Vec::new();
    }
    let mut checks = Vec::new();
    if halving {
        checks.push(CheckRecord::at_most(
            format!("{label}monotone loss"),
            out.max_loss_increase,
            stelab_core::optimizer::MONOTONE_SLACK,
        ));
    }
    if out.converged {
        checks.push(
            CheckRecord::new(format!("{label}limit point"), out.classification.is_limit_point())
                .with_note(format!("{:?}", out.classification)),
        );
    }
    checks
}

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let kind = spec.ste.unwrap_or(SteKind::Relu);
    let t = spec.teacher()?;
    let mut rng = child_rng(spec.seed, seed_offset::START);
    let p0 = ModelParams::new(gaussian_vec(&mut rng, spec.m), gaussian_vec(&mut rng, spec.n))?;
    let out = descend_run(&p0, &t, &config(spec, kind))?;

    let checks = outcome_checks("", kind, &out, spec.halve);
    let mut warnings = Vec::new();
    if out.w_floor_violated {
        warnings.push(format!("‖w‖ fell to {:e} during the run", out.min_w_norm));
    }
    let rows: Vec<_> = out.trajectory.iter().map(|r| (kind, r)).collect();
    let table = trajectory_table(&rows);
    let data = json!({
        "ste": kind,
        "v_star": t.v_star(),
        "w_star": t.w_star(),
        "start": p0,
        "outcome": out,
    });
    Ok(Report::new(spec, warnings, checks, data, table))
}
