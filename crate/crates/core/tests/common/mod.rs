#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stelab_core::linalg::{norm, scale};
use stelab_core::monte_carlo::SampleEvaluator;
use stelab_core::{
    estimate_expectation, McEstimate, ModelParams, SampleBatch, SteKind, TeacherParams,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| r.sample(StandardNormal)).collect()
}

/// Uniform direction scaled to a norm drawn uniformly from `[lo, hi]`.
pub fn with_norm_in(r: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    let d = gauss(r, k);
    let target = r.random_range(lo..=hi);
    scale(&d, target / norm(&d))
}

pub fn random_teacher(r: &mut ChaCha8Rng, m: usize, n: usize) -> TeacherParams {
    TeacherParams::normalized(with_norm_in(r, m, 0.5, 2.0), gauss(r, n)).unwrap()
}

/// `‖v‖ ≤ 3`, `0.3 ≤ ‖w‖ ≤ 3`, `m, n ≤ 8`.
pub fn random_config(r: &mut ChaCha8Rng) -> (ModelParams, TeacherParams) {
    let m = r.random_range(1..=8);
    let n = r.random_range(2..=8);
    let t = random_teacher(r, m, n);
    let p = ModelParams::new(with_norm_in(r, m, 0.0, 3.0), with_norm_in(r, n, 0.3, 3.0)).unwrap();
    (p, t)
}

/// Monte Carlo mean of `(∂ℓ/∂v, g_kind)` stacked into one vector.
pub fn mc_coarse(
    kind: SteKind,
    p: &ModelParams,
    t: &TeacherParams,
    seed: u64,
    n_samples: usize,
) -> McEstimate {
    let (m, n) = (p.m(), p.n());
    let batch = SampleBatch::new(seed, n_samples, m, n).unwrap();
    let ev = SampleEvaluator::new(p, t).unwrap();
    estimate_expectation(&batch, m + n, |z, out| {
        let (a, b) = out.split_at_mut(m);
        ev.grad_v_into(z, a);
        ev.coarse_grad_into(kind, z, b);
    })
    .unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
