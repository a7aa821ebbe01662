//! Descent started at the spurious stationary point: the identity STE against
//! the two STEs whose coarse gradient vanishes there.

use std::f64::consts::PI;

use anyhow::Result;
use serde_json::json;
use stelab_core::landscape::{critical_points, params_at_angle, spurious_correlation};
use stelab_core::linalg::sum;
use stelab_core::ste::identity_norm_at_spurious;
use stelab_core::{run as descend_run, DescentConfig, ModelParams, RunOutcome, SteKind, TeacherParams};

use crate::commands::descend::trajectory_table;
use crate::output::{CheckRecord, Report};
use crate::spec::{child_rng, seed_offset, unit_gaussian_vec, ExperimentSpec};

/// `(spurious_v, −‖w‖w*)`, moved by `epsilon` along a seeded random direction
/// of `(v, w/‖w‖)`.
pub fn start_point(spec: &ExperimentSpec, t: &TeacherParams) -> Result<ModelParams> {
    let report = critical_points(t);
    let base = params_at_angle(t, report.spurious_v, PI, spec.w_norm)?;
    if spec.epsilon == 0.0 {
        return Ok(base);
    }
    let (m, n) = (t.m(), t.n());
    let d = unit_gaussian_vec(&mut child_rng(spec.seed, seed_offset::PERTURB), m + n);
    let v = base.v().iter().zip(&d[..m]).map(|(a, b)| a + spec.epsilon * b).collect();
    let w = base
        .w()
        .iter()
        .zip(&d[m..])
        .map(|(a, b)| a + spec.epsilon * spec.w_norm * b)
        .collect();
    Ok(ModelParams::new(v, w)?)
}

pub fn premise_warnings(t: &TeacherParams) -> Vec<String> {
    let vs = t.v_star();
    let mut warnings = Vec::new();
    if vs.len() == 1 {
        warnings.push("m = 1: the identity coarse gradient vanishes at the spurious point".into());
    }
    if sum(vs) == 0.0 {
        warnings.push("1ᵀv* = 0: the identity coarse gradient vanishes at the spurious point".into());
    }
    if !critical_points(t).spurious_is_minimizer {
        warnings.push(format!(
            "(1ᵀv*)² ≥ ((m+1)/2)‖v*‖²: the spurious point is not a local minimizer \
             (spurious_vᵀv* = {}), so leaving it need not raise the loss",
            spurious_correlation(vs)
        ));
    }
    warnings
}

pub fn run_kind(spec: &ExperimentSpec, kind: SteKind, p0: &ModelParams, t: &TeacherParams) -> Result<RunOutcome> {
    let mut cfg = DescentConfig::new(kind, spec.eta);
    cfg.max_iters = spec.iters;
    // every step is taken; the run never stops on a small residual
    cfg.grad_tol = f64::MIN_POSITIVE;
    cfg.w_norm_floor = 0.0;
    Ok(descend_run(p0, t, &cfg)?)
}

pub fn max_residual(out: &RunOutcome) -> f64 {
    out.trajectory
        .iter()
        .map(|r| r.grad_v_norm.max(r.coarse_grad_w_norm))
        .fold(0.0, f64::max)
}

/// Highest recorded loss minus the starting loss.
pub fn peak_over_start(out: &RunOutcome) -> f64 {
    out.trajectory
        .iter()
        .map(|r| r.loss)
        .fold(f64::NEG_INFINITY, f64::max)
        - out.initial_loss
}

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let t = spec.teacher()?;
    let p0 = start_point(spec, &t)?;
    let warnings = premise_warnings(&t);

    let mut checks = Vec::new();
    let mut outcomes = Vec::new();
    for kind in SteKind::ALL {
        let out = run_kind(spec, kind, &p0, &t)?;
        match kind {
            SteKind::Identity => checks.push(
                CheckRecord {
                    value: Some(peak_over_start(&out)),
                    bound: Some(stelab_core::optimizer::MONOTONE_SLACK),
                    ..CheckRecord::new(
                        "identity loss rises above its start",
                        out.first_rise_above_start.is_some(),
                    )
                }
                .with_note(match out.first_rise_above_start {
                    Some(i) => format!("first rise at iteration {i}"),
                    None => format!("no rise within {} iterations", out.iterations),
                }),
            ),
            _ => checks.push(CheckRecord::at_most(
                format!("{kind} stays stationary"),
                max_residual(&out),
                spec.tol,
            )),
        }
        outcomes.push((kind, out));
    }
    let rows: Vec<_> = outcomes
        .iter()
        .flat_map(|(k, o)| o.trajectory.iter().map(move |r| (*k, r)))
        .collect();
    let table = trajectory_table(&rows);
    let data = json!({
        "v_star": t.v_star(),
        "w_star": t.w_star(),
        "start": p0,
        "identity_norm_at_spurious": identity_norm_at_spurious(t.v_star()),
        "runs": outcomes.iter().map(|(k, o)| json!({
            "ste": k,
            "initial_loss": o.initial_loss,
            "final_loss": o.final_loss,
            "max_loss_over_start": peak_over_start(o),
            "first_rise_above_start": o.first_rise_above_start,
            "max_residual": max_residual(o),
            "min_w_norm": o.min_w_norm,
            "iterations": o.iterations,
        })).collect::<Vec<_>>(),
    });
    Ok(Report::new(spec, warnings, checks, data, table))
}
