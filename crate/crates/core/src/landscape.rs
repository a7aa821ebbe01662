//! Critical points of the population loss and their classification.
//!
//! Away from `w = 0` the loss depends on `w` only through θ, so it is a
//! function `f̃(v, θ)` on `R^m × [0, π]`. Setting `∂f̃/∂v = 0` gives
//! `v(θ) = (I+11ᵀ)⁻¹((1 − 2θ/π)I + 11ᵀ)v*`; interior stationarity further
//! needs `∂f̃/∂θ = vᵀv*/(2π) = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{
    apply_i_plus_ones, apply_scaled_i_plus_ones, distance, dot, norm, reject,
    sherman_morrison_inverse_apply, sum, sym2_eigenvalues, unit,
};
use crate::model::{check_dims, population_grad_v, teacher_angle, ModelParams, TeacherParams};
use crate::ste::{expected_coarse_grad, SteKind};

/// Default proximity tolerance for [`classify_point`].
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-5;

/// Closed-form critical points for a teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub has_saddle: bool,
    pub saddle_v: Option<Vec<f64>>,
    pub saddle_theta: Option<f64>,
    pub spurious_v: Vec<f64>,
    pub spurious_theta: f64,
    /// Whether `(spurious_v, π)` is a local minimizer; holds iff `spurious_vᵀv* < 0`,
    /// which is the same strict inequality that makes the saddle exist.
    pub spurious_is_minimizer: bool,
    pub global_v: Vec<f64>,
    pub global_theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointClass {
    GlobalMin,
    SpuriousLocalMin,
    Saddle,
    NonCritical,
    Undefined,
}

impl PointClass {
    /// The stationary set a converged ReLU or clipped-ReLU run may land in.
    pub fn is_limit_point(self) -> bool {
        matches!(
            self,
            PointClass::GlobalMin | PointClass::SpuriousLocalMin | PointClass::Saddle
        )
    }
}

/// `v(θ)`, the minimizer of `f̃(·, θ)`.
pub fn v_stationary_at(v_star: &[f64], theta: f64) -> Vec<f64> {
    sherman_morrison_inverse_apply(&apply_scaled_i_plus_ones(1.0 - 2.0 * theta / PI, v_star))
}

/// `(1ᵀv*)² < ((m+1)/2)‖v*‖²`, strict.
pub fn saddle_condition(v_star: &[f64]) -> bool {
    let m = v_star.len() as f64;
    sum(v_star).powi(2) < 0.5 * (m + 1.0) * dot(v_star, v_star)
}

pub fn critical_points(t: &TeacherParams) -> CriticalPointReport {
    let vs = t.v_star();
    let m = vs.len() as f64;
    let s2 = sum(vs).powi(2);
    let nv2 = dot(vs, vs);
    let has_saddle = saddle_condition(vs);
    let (saddle_v, saddle_theta) = if has_saddle {
        let denom = (m + 1.0) * nv2 - s2;
        let theta = 0.5 * PI * (m + 1.0) * nv2 / denom;
        let v = sherman_morrison_inverse_apply(&apply_scaled_i_plus_ones(-s2 / denom, vs));
        (Some(v), Some(theta))
    } else {
        (None, None)
    };
    let spurious_v = v_stationary_at(vs, PI);
    CriticalPointReport {
        has_saddle,
        saddle_v,
        saddle_theta,
        spurious_is_minimizer: dot(&spurious_v, vs) < 0.0,
        spurious_v,
        spurious_theta: PI,
        global_v: vs.to_vec(),
        global_theta: 0.0,
    }
}

/// A unit vector orthogonal to `w*`, fixed per teacher.
fn orthogonal_direction(w_star: &[f64]) -> Vec<f64> {
    // the basis vector least aligned with w* has the largest rejection
    let k = (0..w_star.len())
        .min_by(|&i, &j| w_star[i].abs().total_cmp(&w_star[j].abs()))
        .unwrap_or(0);
    let mut e = vec![0.0; w_star.len()];
    e[k] = 1.0;
    unit(&reject(&e, w_star)).expect("n ≥ 2 leaves an orthogonal direction")
}

/// Parameters `(v, w)` with `w = r(cos θ w* + sin θ e)` for a fixed unit `e ⊥ w*`.
pub fn params_at_angle(
    t: &TeacherParams,
    v: Vec<f64>,
    theta: f64,
    w_norm: f64,
) -> Result<ModelParams> {
    if !(0.0..=PI).contains(&theta) {
        return Err(LabError::Domain(format!("angle {theta} outside [0, π]")));
    }
    if !(w_norm > 0.0 && w_norm.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "w norm must be positive, got {w_norm}"
        )));
    }
    let e = orthogonal_direction(t.w_star());
    let (c, s) = (theta.cos(), theta.sin());
    let w = t
        .w_star()
        .iter()
        .zip(&e)
        .map(|(a, b)| w_norm * (c * a + s * b))
        .collect();
    ModelParams::new(v, w)
}

/// Proximity classification; `tol` applies to both `‖v − v_c‖` and the angle.
pub fn classify_point(p: &ModelParams, t: &TeacherParams, tol: f64) -> Result<PointClass> {
    if !(tol > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let Some(theta) = teacher_angle(p, t)? else {
        return Ok(PointClass::Undefined);
    };
    let theta = theta.radians();
    let report = critical_points(t);
    if distance(p.v(), &report.global_v) <= tol && theta <= tol {
        return Ok(PointClass::GlobalMin);
    }
    if distance(p.v(), &report.spurious_v) <= tol && theta >= PI - tol {
        return Ok(PointClass::SpuriousLocalMin);
    }
    if let (Some(sv), Some(st)) = (&report.saddle_v, report.saddle_theta) {
        if distance(p.v(), sv) <= tol && (theta - st).abs() <= tol {
            return Ok(PointClass::Saddle);
        }
    }
    Ok(PointClass::NonCritical)
}

/// `max(‖∂f/∂v‖, ‖E[g_kind]‖)`: zero exactly at the stationary points of the
/// coarse dynamics.
pub fn stationarity_residual(p: &ModelParams, t: &TeacherParams, kind: SteKind) -> Result<f64> {
    check_dims(p, t)?;
    let gv = population_grad_v(p, t)?;
    let gw = expected_coarse_grad(kind, p, t)?.grad_w;
    Ok(norm(&gv).max(norm(&gw)))
}

/// `(‖∂f̃/∂v‖, |∂f̃/∂θ|)` at `(v, θ)`; both vanish at interior critical points.
pub fn reduced_gradient(v: &[f64], v_star: &[f64], theta: f64) -> (f64, f64) {
    let av = apply_i_plus_ones(v);
    let rhs = apply_scaled_i_plus_ones(1.0 - 2.0 * theta / PI, v_star);
    let gv: Vec<f64> = av.iter().zip(&rhs).map(|(a, b)| 0.25 * (a - b)).collect();
    (norm(&gv), dot(v, v_star).abs() / (2.0 * PI))
}

/// Eigenvalues `(min, max)` of the Hessian of `f̃` restricted to the plane
/// spanned by `(v*/‖v*‖, 0)` and `(0, 1)`.
///
/// `f̃` is quadratic in `v` and affine in θ, so its Hessian is the constant
/// `[[A/4, v*/(2π)], [v*ᵀ/(2π), 0]]` with `A = I + 11ᵀ`. A negative
/// determinant on this plane makes the full Hessian indefinite by interlacing.
pub fn reduced_hessian_eigenvalues(v_star: &[f64]) -> Result<(f64, f64)> {
    let u = unit(v_star).ok_or(LabError::ZeroVector("v*"))?;
    let uau = dot(&u, &apply_i_plus_ones(&u));
    let off = norm(v_star) / (2.0 * PI);
    Ok(sym2_eigenvalues([[0.25 * uau, off], [off, 0.0]]))
}

/// Interior stationary points of `f̃` located by scanning θ.
///
/// `v` is eliminated exactly through `v(θ)`, leaving the scalar residual
/// `r(θ) = v(θ)ᵀv*/(2π)`, which is affine in θ. Sign changes of `r` between
/// neighbouring grid points are refined by bisection; refined points whose
/// residual is below `threshold` are returned.
pub fn scan_interior_critical_points(
    v_star: &[f64],
    grid: usize,
    threshold: f64,
) -> Vec<(Vec<f64>, f64)> {
    let r = |th: f64| dot(&v_stationary_at(v_star, th), v_star) / (2.0 * PI);
    let thetas: Vec<f64> = (1..=grid)
        .map(|i| PI * i as f64 / (grid as f64 + 1.0))
        .collect();
    let mut found: Vec<f64> = Vec::new();
    for pair in thetas.windows(2) {
        let (mut lo, mut hi) = (pair[0], pair[1]);
        let mut rlo = r(lo);
        if rlo == 0.0 {
            found.push(lo);
            continue;
        }
        if rlo * r(hi) > 0.0 {
            continue;
        }
        while hi - lo > 1e-15 * PI {
            let mid = 0.5 * (lo + hi);
            let rm = r(mid);
            if rm == 0.0 {
                lo = mid;
                hi = mid;
            } else if rm * rlo < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                rlo = rm;
            }
        }
        found.push(0.5 * (lo + hi));
    }
    found.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    found
        .into_iter()
        .filter(|th| r(*th).abs() < threshold)
        .map(|th| (v_stationary_at(v_star, th), th))
        .collect()
}

/// `spurious_vᵀv* = 2(1ᵀv*)²/(m+1) − ‖v*‖²`.
pub fn spurious_correlation(v_star: &[f64]) -> f64 {
    let m = v_star.len() as f64;
    2.0 * sum(v_star).powi(2) / (m + 1.0) - dot(v_star, v_star)
}
