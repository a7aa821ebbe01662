//! Ensembles of seeded runs on random teachers.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use anyhow::{bail, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use stelab_core::linalg::{distance, dot, norm, sum};
use stelab_core::{
    angle, check_global_region, run as descend_run, ModelParams, PointClass, SteKind,
    TeacherParams,
};

use crate::commands::descend::config;
use crate::output::{fmt_f64, CheckRecord, CsvTable, Report};
use crate::spec::{child_rng, gaussian_vec, seed_offset, unit_gaussian_vec, ExperimentSpec};

/// Final-point radius for "reached the global minimizer".
pub const GLOBAL_RADIUS: f64 = 1e-3;
/// Relative slack on `(1ᵀv*)(1ᵀv) ≤ (1ᵀv*)²`, which holds with equality at `v = v*`.
pub const REGION_SLACK: f64 = 1e-12;
const MAX_REGION_DRAWS: usize = 100_000;
/// Trajectory thinning when only the endpoints matter.
const SPARSE_RECORD: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub ste: SteKind,
    pub attempt: u64,
    pub m: usize,
    pub n: usize,
    pub classification: PointClass,
    pub converged: bool,
    pub monotone: bool,
    pub iterations: usize,
    pub eta: f64,
    pub halvings: u32,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_theta: f64,
    pub dist_v_star: f64,
    pub min_w_norm: f64,
    /// In-region runs whose `‖w‖` dipped below the floor fall outside the
    /// convergence hypothesis and are not counted.
    pub excluded: bool,
    /// Every recorded iterate satisfied the region conditions (in-region sweeps only).
    pub region_held: Option<bool>,
}

impl RunRecord {
    pub fn reached_global(&self) -> bool {
        self.converged && self.final_theta <= GLOBAL_RADIUS && self.dist_v_star <= GLOBAL_RADIUS
    }
}

/// The three region conditions with [`REGION_SLACK`] on the third.
pub fn in_region_with_slack(v: &[f64], theta: f64, v_star: &[f64]) -> bool {
    let s = sum(v_star);
    dot(v, v_star) > 0.0 && theta < FRAC_PI_2 && s * sum(v) <= s * s * (1.0 + REGION_SLACK)
}

fn random_problem(spec: &ExperimentSpec, rng: &mut rand_chacha::ChaCha8Rng) -> Result<(ModelParams, TeacherParams)> {
    let m = rng.random_range(1..=spec.m);
    let n = rng.random_range(2..=spec.n);
    let t = TeacherParams::new(unit_gaussian_vec(rng, m), unit_gaussian_vec(rng, n))?;
    for _ in 0..MAX_REGION_DRAWS {
        let p = ModelParams::new(gaussian_vec(rng, m), gaussian_vec(rng, n))?;
        if !spec.in_region || check_global_region(&p, &t)? {
            return Ok((p, t));
        }
    }
    bail!("no start in the global region after {MAX_REGION_DRAWS} draws")
}

fn one_run(spec: &ExperimentSpec, kind: SteKind, kind_index: u64, attempt: u64) -> Result<RunRecord> {
    let offset = seed_offset::SWEEP + kind_index * seed_offset::SWEEP_STRIDE + attempt;
    let mut rng = child_rng(spec.seed, offset);
    let (p0, t) = random_problem(spec, &mut rng)?;
    let mut cfg = config(spec, kind);
    if spec.in_region {
        cfg.snapshot_v = true;
    } else {
        cfg.record_every = SPARSE_RECORD;
    }
    let out = descend_run(&p0, &t, &cfg)?;
    let fp = &out.final_params;
    let final_theta = if norm(fp.w()) > 0.0 {
        angle(fp.w(), t.w_star())?.radians()
    } else {
        f64::NAN
    };
    let region_held = spec.in_region.then(|| {
        out.trajectory.iter().all(|r| {
            r.v.as_deref()
                .is_some_and(|v| in_region_with_slack(v, r.theta, t.v_star()))
        })
    });
    Ok(RunRecord {
        ste: kind,
        attempt,
        m: t.m(),
        n: t.n(),
        classification: out.classification,
        converged: out.converged,
        monotone: out.monotone,
        iterations: out.iterations,
        eta: out.eta,
        halvings: out.halvings,
        initial_loss: out.initial_loss,
        final_loss: out.final_loss,
        final_theta,
        dist_v_star: distance(fp.v(), t.v_star()),
        min_w_norm: out.min_w_norm,
        excluded: spec.in_region && out.w_floor_violated,
        region_held,
    })
}

/// `spec.runs` counted runs of `kind`, in attempt order.
pub fn runs_for(spec: &ExperimentSpec, kind: SteKind, kind_index: u64) -> Result<Vec<RunRecord>> {
    let k = spec.runs as u64;
    let mut records = Vec::new();
    let mut counted = 0u64;
    let mut next = 0u64;
    while counted < k {
        let batch: Vec<RunRecord> = (next..next + k - counted)
            .into_par_iter()
            .map(|a| one_run(spec, kind, kind_index, a))
            .collect::<Result<_>>()?;
        next += batch.len() as u64;
        counted += batch.iter().filter(|r| !r.excluded).count() as u64;
        records.extend(batch);
        if next > 100 * k.max(1) {
            bail!("{kind}: too many excluded runs ({next} attempts for {k})");
        }
    }
    Ok(records)
}

pub fn kinds(spec: &ExperimentSpec) -> Vec<SteKind> {
    match spec.ste {
        Some(k) => vec![k],
        None => SteKind::ALL.to_vec(),
    }
}

fn kind_checks(spec: &ExperimentSpec, kind: SteKind, recs: &[RunRecord]) -> Vec<CheckRecord> {
    let counted: Vec<&RunRecord> = recs.iter().filter(|r| !r.excluded).collect();
    if kind == SteKind::Identity || counted.is_empty() {
        return Vec::new();
    }
    let frac = |ok: usize, of: usize| format!("{ok}/{of}");
    let mut checks = Vec::new();
    if spec.halve {
        let ok = counted.iter().filter(|r| r.monotone).count();
        checks.push(
            CheckRecord::new(format!("{kind}: monotone loss"), ok == counted.len())
                .with_note(frac(ok, counted.len())),
        );
    }
    let conv: Vec<_> = counted.iter().filter(|r| r.converged).collect();
    let ok = conv.iter().filter(|r| r.classification.is_limit_point()).count();
    checks.push(
        CheckRecord::new(format!("{kind}: converged runs end at limit points"), ok == conv.len())
            .with_note(frac(ok, conv.len())),
    );
    if spec.in_region {
        let ok = counted.iter().filter(|r| r.reached_global()).count();
        checks.push(
            CheckRecord::new(format!("{kind}: region starts reach the global minimizer"), ok == counted.len())
                .with_note(format!(
                    "{} ({} excluded for ‖w‖ below the floor)",
                    frac(ok, counted.len()),
                    recs.len() - counted.len()
                )),
        );
        let ok = counted.iter().filter(|r| r.region_held == Some(true)).count();
        checks.push(
            CheckRecord::new(format!("{kind}: region conditions hold along the run"), ok == counted.len())
                .with_note(frac(ok, counted.len())),
        );
    }
    checks
}

fn kind_summary(recs: &[RunRecord]) -> serde_json::Value {
    let counted: Vec<&RunRecord> = recs.iter().filter(|r| !r.excluded).collect();
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    for r in &counted {
        *classes.entry(format!("{:?}", r.classification)).or_default() += 1;
    }
    let iters: Vec<f64> = counted.iter().map(|r| r.iterations as f64).collect();
    json!({
        "runs": counted.len(),
        "excluded": recs.len() - counted.len(),
        "converged": counted.iter().filter(|r| r.converged).count(),
        "monotone": counted.iter().filter(|r| r.monotone).count(),
        "classifications": classes,
        "mean_iterations": if iters.is_empty() { 0.0 } else { sum(&iters) / iters.len() as f64 },
    })
}

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let mut checks = Vec::new();
    let mut summary = serde_json::Map::new();
    let mut all = Vec::new();
    for (i, kind) in kinds(spec).into_iter().enumerate() {
        let recs = runs_for(spec, kind, i as u64)?;
        checks.extend(kind_checks(spec, kind, &recs));
        summary.insert(kind.to_string(), kind_summary(&recs));
        all.extend(recs);
    }
    let mut table = CsvTable::new(vec![
        "ste", "attempt", "m", "n", "classification", "converged", "monotone", "iterations",
        "eta", "halvings", "final_loss", "final_theta", "dist_v_star", "min_w_norm", "excluded",
        "region_held",
    ]);
    for r in &all {
        table.push(vec![
            r.ste.to_string(),
            r.attempt.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            format!("{:?}", r.classification),
            r.converged.to_string(),
            r.monotone.to_string(),
            r.iterations.to_string(),
            fmt_f64(r.eta),
            r.halvings.to_string(),
            fmt_f64(r.final_loss),
            fmt_f64(r.final_theta),
            fmt_f64(r.dist_v_star),
            fmt_f64(r.min_w_norm),
            r.excluded.to_string(),
            r.region_held.map(|b| b.to_string()).unwrap_or_default(),
        ]);
    }
    let data = json!({ "summary": summary, "runs": all });
    Ok(Report::new(spec, Vec::new(), checks, data, table))
}

