//! Empirical loss after one coarse-gradient step, as a function of the step size.

use anyhow::Result;
use serde::Serialize;
use serde_json::json;
use stelab_core::linalg::norm;
use stelab_core::monte_carlo::{empirical_coarse_grad, empirical_loss};
use stelab_core::{ModelParams, SampleBatch, SteKind, TeacherParams};

use crate::output::{fmt_f64, CheckRecord, CsvTable, Report};
use crate::spec::{child_rng, child_seed, gaussian_vec, seed_offset, ExperimentSpec};

pub const GRID_POINTS: usize = 60;
/// Log-spaced positive steps cover this many decades below `η_max`.
pub const GRID_DECADES: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Curve {
    pub sample_size: usize,
    pub etas: Vec<f64>,
    pub losses: Vec<f64>,
}

impl Figure1Curve {
    pub fn min_loss(&self) -> f64 {
        self.losses.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `Σ |L(η_{i+1}) − L(η_i)|`.
    pub fn total_variation(&self) -> f64 {
        self.losses.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Total variation beyond the single descent-then-rise shape through the
    /// minimum; zero for a unimodal curve.
    pub fn excess_variation(&self) -> f64 {
        let lo = self.min_loss();
        let first = self.losses[0];
        let last = self.losses[self.losses.len() - 1];
        self.total_variation() - (first - lo) - (last - lo)
    }

    pub fn descends(&self) -> bool {
        self.min_loss() < self.losses[0]
    }
}

/// `0` followed by `GRID_POINTS − 1` log-spaced steps ending at `eta_max`.
pub fn eta_grid(eta_max: f64) -> Vec<f64> {
    let k = GRID_POINTS - 1;
    std::iter::once(0.0)
        .chain((0..k).map(|i| {
            let frac = i as f64 / (k - 1) as f64;
            eta_max * 10f64.powf(-GRID_DECADES * (1.0 - frac))
        }))
        .collect()
}

/// One curve on a fresh batch of `n_samples`; the direction is the batch's own
/// coarse gradient and `η_max` makes the largest displacement `2‖w‖`.
pub fn curve(
    kind: SteKind,
    p: &ModelParams,
    t: &TeacherParams,
    n_samples: usize,
    seed: u64,
) -> Result<Figure1Curve> {
    let zs = SampleBatch::new(seed, n_samples, p.m(), p.n())?.materialize();
    let g = empirical_coarse_grad(kind, p, t, &zs)?;
    let g_norm = g.norm();
    let eta_max = if g_norm > 0.0 { 2.0 * norm(p.w()) / g_norm } else { 1.0 };
    let etas = eta_grid(eta_max);
    let losses = etas
        .iter()
        .map(|&eta| {
            let v = p.v().iter().zip(&g.grad_v).map(|(a, b)| a - eta * b).collect();
            let w = p.w().iter().zip(&g.grad_w).map(|(a, b)| a - eta * b).collect();
            empirical_loss(&ModelParams::new(v, w)?, t, &zs)
        })
        .collect::<stelab_core::Result<Vec<f64>>>()?;
    Ok(Figure1Curve {
        sample_size: n_samples,
        etas,
        losses,
    })
}

pub fn curves(spec: &ExperimentSpec) -> Result<(ModelParams, TeacherParams, Vec<Figure1Curve>)> {
    spec.validate()?;
    let kind = spec.ste.unwrap_or(SteKind::Relu);
    let t = spec.teacher()?;
    let mut rng = child_rng(spec.seed, seed_offset::START);
    let p = ModelParams::new(gaussian_vec(&mut rng, spec.m), gaussian_vec(&mut rng, spec.n))?;
    let curves = spec
        .sample_sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| curve(kind, &p, &t, n, child_seed(spec.seed, seed_offset::FIGURE1 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((p, t, curves))
}

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    let (p, t, curves) = curves(spec)?;
    let checks: Vec<CheckRecord> = curves
        .iter()
        .map(|c| {
            CheckRecord {
                value: Some(c.min_loss()),
                bound: Some(c.losses[0]),
                ..CheckRecord::new(format!("N={} min over η below loss at η=0", c.sample_size), c.descends())
            }
        })
        .collect();
    let mut table = CsvTable::new(vec!["sample_size", "eta", "loss"]);
    for c in &curves {
        for (e, l) in c.etas.iter().zip(&c.losses) {
            table.push(vec![c.sample_size.to_string(), fmt_f64(*e), fmt_f64(*l)]);
        }
    }
    let data = json!({
        "start": p,
        "v_star": t.v_star(),
        "w_star": t.w_star(),
        "curves": curves,
        "total_variation": curves.iter().map(|c| c.total_variation()).collect::<Vec<_>>(),
        "excess_variation": curves.iter().map(|c| c.excess_variation()).collect::<Vec<_>>(),
    });
    Ok(Report::new(spec, Vec::new(), checks, data, table))
}
