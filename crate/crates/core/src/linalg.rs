//! Dense vector helpers on `f64` slices.
//!
//! Problems here are desk scale (m, n at most a few dozen), so plain slices
//! and `Vec<f64>` are enough. `(I + 11ᵀ)` is never materialized.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sum(a: &[f64]) -> f64 {
    a.iter().sum()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Unit vector in the direction of `a`, or `None` when `‖a‖` is zero.
pub fn unit(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

pub(crate) fn check_norm_nonzero(a: &[f64], what: &'static str) -> crate::Result<f64> {
    let n = norm(a);
    if n == 0.0 {
        Err(crate::LabError::ZeroVector(what))
    } else {
        Ok(n)
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `(I + 11ᵀ) x`
pub fn apply_i_plus_ones(x: &[f64]) -> Vec<f64> {
    let s = sum(x);
    x.iter().map(|xi| xi + s).collect()
}

/// `(c I + 11ᵀ) x`
pub fn apply_scaled_i_plus_ones(c: f64, x: &[f64]) -> Vec<f64> {
    let s = sum(x);
    x.iter().map(|xi| c * xi + s).collect()
}

/// `(I + 11ᵀ)⁻¹ x = x − 1 (1ᵀx) / (m + 1)` (Sherman–Morrison).
pub fn sherman_morrison_inverse_apply(x: &[f64]) -> Vec<f64> {
    let shift = sum(x) / (x.len() as f64 + 1.0);
    x.iter().map(|xi| xi - shift).collect()
}

/// Component of `x` orthogonal to `dir` (which need not be normalized).
pub fn reject(x: &[f64], dir: &[f64]) -> Vec<f64> {
    let dd = dot(dir, dir);
    if dd == 0.0 {
        return x.to_vec();
    }
    let c = dot(x, dir) / dd;
    x.iter().zip(dir).map(|(xi, di)| xi - c * di).collect()
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn sym2_eigenvalues(m: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = m[0][0] + m[1][1];
    let half_gap = (((m[0][0] - m[1][1]) / 2.0).powi(2) + m[0][1] * m[1][0]).sqrt();
    (tr / 2.0 - half_gap, tr / 2.0 + half_gap)
}
