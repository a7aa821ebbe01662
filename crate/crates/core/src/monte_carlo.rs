//! Sampling oracle for the per-sample quantities of the model.
//!
//! Every sample matrix `Z ∈ R^{m×n}` is drawn from its own ChaCha8 stream
//! (stream id = sample index) under a single 64-bit seed, so sample `i` is the
//! same no matter how the index range is split across threads. Estimates are
//! reduced chunk by chunk in index order, which makes them bit-reproducible
//! for a fixed seed regardless of the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::linalg::dot;
use crate::model::{check_dims, ModelParams, TeacherParams};
use crate::ste::SteKind;

/// Name and version of the sample generator; bump when the stream layout changes.
pub const GENERATOR_VERSION: &str = "chacha8-per-sample-stream/standard-normal/v1";

/// Samples per reduction chunk.
const CHUNK: usize = 4096;

/// A dense row-major `rows × cols` matrix of i.i.d. N(0, 1) entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GaussianMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(LabError::InvalidParameter(
                "matrix rows must be nonempty and of equal length".into(),
            ));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// `N` Gaussian sample matrices defined by a seed; generated on demand.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    seed: u64,
    n_samples: usize,
    rows: usize,
    cols: usize,
    base: ChaCha8Rng,
}

impl SampleBatch {
    pub fn new(seed: u64, n_samples: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LabError::InvalidParameter(
                "sample matrices need at least one row and column".into(),
            ));
        }
        Ok(Self {
            seed,
            n_samples,
            rows,
            cols,
            base: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Overwrites `z` with sample `index`.
    pub fn fill(&self, index: usize, z: &mut GaussianMatrix) {
        debug_assert_eq!((z.rows, z.cols), (self.rows, self.cols));
        let mut rng = self.base.clone();
        rng.set_stream(index as u64);
        for x in z.data.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
    }

    pub fn sample(&self, index: usize) -> GaussianMatrix {
        let mut z = GaussianMatrix::zeros(self.rows, self.cols);
        self.fill(index, &mut z);
        z
    }

    /// All `N` matrices in memory; meant for small batches.
    pub fn materialize(&self) -> Vec<GaussianMatrix> {
        (0..self.n_samples).map(|i| self.sample(i)).collect()
    }
}

/// Componentwise sample mean and standard error of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_samples: usize,
}

impl McEstimate {
    /// `|mean − expected| / std_error` per component; `0` when both the error
    /// and the standard error vanish, `∞` when only the standard error does.
    pub fn z_scores(&self, expected: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std_error)
            .zip(expected)
            .map(|((m, se), e)| {
                let d = (m - e).abs();
                if *se > 0.0 {
                    d / se
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    /// True when every component lies within `k` standard errors of `expected`.
    pub fn agrees_within(&self, expected: &[f64], k: f64) -> bool {
        self.z_scores(expected).iter().all(|z| *z <= k)
    }
}

#[derive(Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = xi - *m;
            *m += d / n;
            *s += d * (xi - *m);
        }
    }

    /// Chan et al. pairwise combination.
    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }
}

/// Monte Carlo mean and standard error of a vector-valued per-sample function.
///
/// `f(z, out)` writes `dim` values for sample `z`. Work is split into fixed
/// chunks of the index range and reduced in index order.
pub fn estimate_expectation<F>(batch: &SampleBatch, dim: usize, f: F) -> Result<McEstimate>
where
    F: Fn(&GaussianMatrix, &mut [f64]) + Sync,
{
    let n = batch.n_samples();
    if n < 2 {
        return Err(LabError::InvalidParameter(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let (rows, cols) = batch.shape();
            let mut z = GaussianMatrix::zeros(rows, cols);
            let mut out = vec![0.0; dim];
            let mut acc = Moments::new(dim);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                batch.fill(i, &mut z);
                out.iter_mut().for_each(|o| *o = 0.0);
                f(&z, &mut out);
                acc.push(&out);
            }
            acc
        })
        .collect();
    let mut total = Moments::new(dim);
    for part in &partials {
        total.merge(part);
    }
    let nf = n as f64;
    let std_error = total
        .m2
        .iter()
        .map(|s| (s.max(0.0) / (nf - 1.0)).sqrt() / nf.sqrt())
        .collect();
    Ok(McEstimate {
        mean: total.mean,
        std_error,
        n_samples: n,
    })
}

/// Per-sample quantities for fixed `(v, w)` and teacher; dimensions checked once.
#[derive(Debug, Clone, Copy)]
pub struct SampleEvaluator<'a> {
    p: &'a ModelParams,
    t: &'a TeacherParams,
}

impl<'a> SampleEvaluator<'a> {
    pub fn new(p: &'a ModelParams, t: &'a TeacherParams) -> Result<Self> {
        check_dims(p, t)?;
        Ok(Self { p, t })
    }

    fn check(&self, z: &GaussianMatrix) -> Result<()> {
        if z.rows != self.p.m() || z.cols != self.p.n() {
            return Err(LabError::DimensionMismatch {
                what: "sample matrix shape",
                expected: self.p.m() * self.p.n(),
                got: z.rows * z.cols,
            });
        }
        Ok(())
    }

    /// `vᵀσ(Zw) − v*ᵀσ(Zw*)`
    pub fn residual(&self, z: &GaussianMatrix) -> f64 {
        let (v, w) = (self.p.v(), self.p.w());
        let (vs, ws) = (self.t.v_star(), self.t.w_star());
        (0..z.rows)
            .map(|i| {
                let zi = z.row(i);
                let mut r = 0.0;
                if dot(zi, w) > 0.0 {
                    r += v[i];
                }
                if dot(zi, ws) > 0.0 {
                    r -= vs[i];
                }
                r
            })
            .sum()
    }

    /// `ℓ = ½ (vᵀσ(Zw) − v*ᵀσ(Zw*))²`
    pub fn loss(&self, z: &GaussianMatrix) -> f64 {
        let r = self.residual(z);
        0.5 * r * r
    }

    /// `∂ℓ/∂v = σ(Zw) (vᵀσ(Zw) − y*)`, written into `out` (length m).
    pub fn grad_v_into(&self, z: &GaussianMatrix, out: &mut [f64]) {
        let r = self.residual(z);
        let w = self.p.w();
        for (i, o) in out.iter_mut().enumerate() {
            *o = if dot(z.row(i), w) > 0.0 { r } else { 0.0 };
        }
    }

    /// `g_μ = Zᵀ(μ'(Zw) ⊙ v)(vᵀσ(Zw) − y*)`, written into `out` (length n).
    pub fn coarse_grad_into(&self, kind: SteKind, z: &GaussianMatrix, out: &mut [f64]) {
        let r = self.residual(z);
        let (v, w) = (self.p.v(), self.p.w());
        out.iter_mut().for_each(|o| *o = 0.0);
        if r == 0.0 {
            return;
        }
        for (i, vi) in v.iter().enumerate() {
            let zi = z.row(i);
            let d = kind.derivative(dot(zi, w));
            if d != 0.0 {
                let c = d * vi * r;
                for (o, zij) in out.iter_mut().zip(zi) {
                    *o += c * zij;
                }
            }
        }
    }
}

/// Squared sample loss `½(vᵀσ(Zw) − v*ᵀσ(Zw*))²`.
pub fn sample_loss(p: &ModelParams, t: &TeacherParams, z: &GaussianMatrix) -> Result<f64> {
    let e = SampleEvaluator::new(p, t)?;
    e.check(z)?;
    Ok(e.loss(z))
}

/// Back-propagated sample gradient with respect to `v`.
pub fn sample_grad_v(p: &ModelParams, t: &TeacherParams, z: &GaussianMatrix) -> Result<Vec<f64>> {
    let e = SampleEvaluator::new(p, t)?;
    e.check(z)?;
    let mut out = vec![0.0; p.m()];
    e.grad_v_into(z, &mut out);
    Ok(out)
}

/// STE coarse sample gradient with respect to `w`.
pub fn sample_coarse_grad(
    kind: SteKind,
    p: &ModelParams,
    t: &TeacherParams,
    z: &GaussianMatrix,
) -> Result<Vec<f64>> {
    let e = SampleEvaluator::new(p, t)?;
    e.check(z)?;
    let mut out = vec![0.0; p.n()];
    e.coarse_grad_into(kind, z, &mut out);
    Ok(out)
}

/// Mean sample loss over an in-memory batch.
pub fn empirical_loss(p: &ModelParams, t: &TeacherParams, zs: &[GaussianMatrix]) -> Result<f64> {
    let e = SampleEvaluator::new(p, t)?;
    let mut acc = 0.0;
    for z in zs {
        e.check(z)?;
        acc += e.loss(z);
    }
    Ok(acc / zs.len().max(1) as f64)
}

/// Batch means of `∂ℓ/∂v` and of the coarse gradient `g_μ`.
pub fn empirical_coarse_grad(
    kind: SteKind,
    p: &ModelParams,
    t: &TeacherParams,
    zs: &[GaussianMatrix],
) -> Result<crate::model::GradientPair> {
    let e = SampleEvaluator::new(p, t)?;
    let mut gv = vec![0.0; p.m()];
    let mut gw = vec![0.0; p.n()];
    let mut bv = vec![0.0; p.m()];
    let mut bw = vec![0.0; p.n()];
    for z in zs {
        e.check(z)?;
        e.grad_v_into(z, &mut bv);
        e.coarse_grad_into(kind, z, &mut bw);
        gv.iter_mut().zip(&bv).for_each(|(a, b)| *a += b);
        gw.iter_mut().zip(&bw).for_each(|(a, b)| *a += b);
    }
    let k = 1.0 / zs.len().max(1) as f64;
    gv.iter_mut().for_each(|x| *x *= k);
    gw.iter_mut().for_each(|x| *x *= k);
    Ok(crate::model::GradientPair {
        grad_v: gv,
        grad_w: gw,
    })
}
