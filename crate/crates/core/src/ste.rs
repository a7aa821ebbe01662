//! Straight-through estimators and their expected coarse gradients.
//!
//! The coarse w-gradient of a single sample replaces the a.e.-zero `σ'` in the
//! chain rule with `μ'`:
//!
//! ```text
//! g_μ(v, w; Z) = Zᵀ(μ'(Zw) ⊙ v)(vᵀσ(Zw) − v*ᵀσ(Zw*))
//! ```
//!
//! Its expectation over Gaussian `Z` has a closed form for each STE below;
//! the expected v-gradient is always the true `∂f/∂v`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::gaussian::{band_joint_vector, bisector_term, pq, INV_SQRT_2PI};
use crate::linalg::{check_norm_nonzero, dot, scale, sum};
use crate::model::{
    angle, check_dims, grad_v_at, population_grad_v, population_grad_w, Angle, GradientPair,
    ModelParams, TeacherParams,
};

/// Which surrogate derivative `μ'` replaces `σ'` in the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteKind {
    /// `μ(x) = x`, `μ'(x) = 1`
    Identity,
    /// `μ(x) = max(x, 0)`, `μ'(x) = 1{x > 0}`
    Relu,
    /// `μ(x) = min(max(x, 0), 1)`, `μ'(x) = 1{0 < x < 1}`
    #[serde(rename = "crelu")]
    CappedRelu,
}

impl SteKind {
    pub const ALL: [SteKind; 3] = [SteKind::Identity, SteKind::Relu, SteKind::CappedRelu];

    /// `μ'(x)`
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            SteKind::Identity => 1.0,
            SteKind::Relu => (x > 0.0) as u8 as f64,
            SteKind::CappedRelu => (x > 0.0 && x < 1.0) as u8 as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SteKind::Identity => "identity",
            SteKind::Relu => "relu",
            SteKind::CappedRelu => "crelu",
        }
    }
}

impl fmt::Display for SteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SteKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(SteKind::Identity),
            "relu" => Ok(SteKind::Relu),
            "crelu" | "clipped-relu" | "capped-relu" => Ok(SteKind::CappedRelu),
            other => Err(LabError::InvalidParameter(format!("unknown STE '{other}'"))),
        }
    }
}

/// `h(v, v*) = ‖v‖² + (1ᵀv)² − (1ᵀv)(1ᵀv*) + vᵀv*`
pub fn h_value(v: &[f64], v_star: &[f64]) -> Result<f64> {
    crate::model::check_len("v*", v.len(), v_star.len())?;
    let s = sum(v);
    Ok(dot(v, v) + s * s - s * sum(v_star) + dot(v, v_star))
}

/// Expected coarse gradient `(E[∂ℓ/∂v], E[g_μ])` in closed form.
pub fn expected_coarse_grad(
    kind: SteKind,
    p: &ModelParams,
    t: &TeacherParams,
) -> Result<GradientPair> {
    check_dims(p, t)?;
    let w = p.w();
    let wn = check_norm_nonzero(w, "w")?;
    let theta = angle(w, t.w_star())?.radians();
    let w_hat = scale(w, 1.0 / wn);
    let vv = dot(p.v(), t.v_star());
    let grad_v = grad_v_at(p.v(), t.v_star(), theta);

    let grad_w = match kind {
        SteKind::Identity => {
            // (1/√2π)(‖v‖² ŵ − (vᵀv*) w*)
            let vn2 = dot(p.v(), p.v());
            w_hat
                .iter()
                .zip(t.w_star())
                .map(|(wh, ws)| INV_SQRT_2PI * (vn2 * wh - vv * ws))
                .collect()
        }
        SteKind::Relu => {
            // (h/(2√2π)) ŵ − cos(θ/2)(vᵀv*/√2π) unit(ŵ + w*)
            let h = h_value(p.v(), t.v_star())?;
            let mut g = scale(&w_hat, h * INV_SQRT_2PI / 2.0);
            let bis = bisector_term(&w_hat, t.w_star(), (theta / 2.0).cos() * vv * INV_SQRT_2PI);
            for (gi, bi) in g.iter_mut().zip(&bis) {
                *gi -= bi;
            }
            g
        }
        SteKind::CappedRelu => {
            // (p(0,w) h / 2) ŵ − (vᵀv*) E[z 1{0 < zᵀw < 1, zᵀw* > 0}]
            let h = h_value(p.v(), t.v_star())?;
            let band = pq(Angle::new(0.0)?, wn)?;
            let joint = pq(Angle::new(theta)?, wn)?;
            let j = band_joint_vector(&w_hat, t.w_star(), joint.p, joint.q);
            w_hat
                .iter()
                .zip(&j)
                .map(|(wh, ji)| band.p * h / 2.0 * wh - vv * ji)
                .collect()
        }
    };
    Ok(GradientPair { grad_v, grad_w })
}

/// `⟨E[g_μ], ∂f/∂w⟩` from the two analytic vectors.
///
/// Fails with [`LabError::NonDifferentiable`] at θ ∈ {0, π}.
pub fn correlation(kind: SteKind, p: &ModelParams, t: &TeacherParams) -> Result<f64> {
    let true_w = population_grad_w(p, t)?;
    let coarse = expected_coarse_grad(kind, p, t)?;
    Ok(dot(&coarse.grad_w, &true_w))
}

/// Closed-form value of [`correlation`]:
///
/// * ReLU: `sin θ (vᵀv*)² / (2(2π)^{3/2}‖w‖)`
/// * clipped ReLU: `q(θ, w)(vᵀv*)² / (2π‖w‖)`
/// * identity: `sin θ (vᵀv*)² / ((2π)^{3/2}‖w‖)`
pub fn correlation_closed_form(kind: SteKind, p: &ModelParams, t: &TeacherParams) -> Result<f64> {
    check_dims(p, t)?;
    let wn = check_norm_nonzero(p.w(), "w")?;
    let theta = angle(p.w(), t.w_star())?;
    let vv2 = dot(p.v(), t.v_star()).powi(2);
    let two_pi_32 = (2.0 * PI).powf(1.5);
    Ok(match kind {
        SteKind::Relu => theta.radians().sin() * vv2 / (2.0 * two_pi_32 * wn),
        SteKind::Identity => theta.radians().sin() * vv2 / (two_pi_32 * wn),
        SteKind::CappedRelu => pq(theta, wn)?.q * vv2 / (2.0 * PI * wn),
    })
}

/// Outcome of [`descent_ratio`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DescentRatio {
    Finite(f64),
    /// The denominator `‖∂f/∂v‖² + ⟨E[g_μ], ∂f/∂w⟩` is not positive.
    Unbounded,
}

impl DescentRatio {
    pub fn value(self) -> Option<f64> {
        match self {
            DescentRatio::Finite(r) => Some(r),
            DescentRatio::Unbounded => None,
        }
    }
}

/// `‖E[g_μ]‖² / (‖∂f/∂v‖² + ⟨E[g_μ], ∂f/∂w⟩)`.
///
/// Bounded for ReLU and clipped ReLU on bounded sets with `‖w‖` away from 0;
/// blows up for the identity STE near the spurious minimizer.
pub fn descent_ratio(kind: SteKind, p: &ModelParams, t: &TeacherParams) -> Result<DescentRatio> {
    let coarse = expected_coarse_grad(kind, p, t)?;
    let true_w = population_grad_w(p, t)?;
    let gv = population_grad_v(p, t)?;
    let denom = dot(&gv, &gv) + dot(&coarse.grad_w, &true_w);
    if denom <= 0.0 {
        return Ok(DescentRatio::Unbounded);
    }
    Ok(DescentRatio::Finite(
        dot(&coarse.grad_w, &coarse.grad_w) / denom,
    ))
}

/// `‖E[g_id]‖` at θ = π with the spurious-minimizer `v`:
/// `2(m − 1)(1ᵀv*)² / (√(2π)(m + 1)²)`.
pub fn identity_norm_at_spurious(v_star: &[f64]) -> f64 {
    let m = v_star.len() as f64;
    2.0 * (m - 1.0) * sum(v_star).powi(2) * INV_SQRT_2PI / ((m + 1.0) * (m + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{distance, norm, sherman_morrison_inverse_apply};

    fn params(v: &[f64], w: &[f64]) -> ModelParams {
        ModelParams::new(v.to_vec(), w.to_vec()).unwrap()
    }

    fn teacher(v: &[f64], w: &[f64]) -> TeacherParams {
        TeacherParams::new(v.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn derivative_tables() {
        assert_eq!(SteKind::Identity.derivative(-3.0), 1.0);
        assert_eq!(SteKind::Relu.derivative(0.0), 0.0);
        assert_eq!(SteKind::Relu.derivative(2.0), 1.0);
        assert_eq!(SteKind::CappedRelu.derivative(0.5), 1.0);
        assert_eq!(SteKind::CappedRelu.derivative(1.0), 0.0);
        assert_eq!(SteKind::CappedRelu.derivative(0.0), 0.0);
    }

    #[test]
    fn parse_names() {
        for k in SteKind::ALL {
            assert_eq!(k.name().parse::<SteKind>().unwrap(), k);
        }
        assert!("sigmoid".parse::<SteKind>().is_err());
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_value(&[1.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(h_value(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(h_value(&[1.0, -1.0], &[1.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn h_matches_gradient_identity() {
        // h = 4 vᵀ∂f/∂v + 2(1 − θ/π) vᵀv* for any θ
        let v = [1.0, -1.0];
        let vs = [1.0, 1.0];
        let theta = PI / 2.0;
        let g = grad_v_at(&v, &vs, theta);
        let via_grad = 4.0 * dot(&v, &g) + 2.0 * (1.0 - theta / PI) * dot(&v, &vs);
        assert!((via_grad - 2.0).abs() < 1e-14);
    }

    #[test]
    fn relu_vanishes_at_global_min() {
        let t = teacher(&[0.5, -1.0, 2.0], &[0.6, 0.8]);
        let p = params(&[0.5, -1.0, 2.0], &[1.2, 1.6]);
        let g = expected_coarse_grad(SteKind::Relu, &p, &t).unwrap();
        assert!(norm(&g.grad_w) < 1e-14);
        assert!(norm(&g.grad_v) < 1e-14);
    }

    #[test]
    fn identity_norm_at_spurious_point() {
        let vs = [1.0, 1.0];
        let t = teacher(&vs, &[1.0, 0.0]);
        let ones_minus_i = [sum(&vs) - vs[0], sum(&vs) - vs[1]];
        let v = sherman_morrison_inverse_apply(&ones_minus_i);
        let p = params(&v, &[-1.0, 0.0]);
        let g = expected_coarse_grad(SteKind::Identity, &p, &t).unwrap();
        let expected = 8.0 / (9.0 * (2.0 * PI).sqrt());
        assert!((norm(&g.grad_w) - expected).abs() < 1e-15);
        assert!((identity_norm_at_spurious(&vs) - expected).abs() < 1e-15);
        assert!((expected - 0.354_615_360_356_829).abs() < 1e-14);
    }

    #[test]
    fn relu_at_right_angle() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        let p = params(&[1.0], &[0.0, 1.0]);
        let g = expected_coarse_grad(SteKind::Relu, &p, &t).unwrap();
        let c = 1.0 / (2.0 * PI).sqrt();
        assert!(distance(&g.grad_w, &[-0.5 * c, 0.5 * c]) < 1e-15);
    }

    #[test]
    fn zero_filter_is_rejected() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        let p = params(&[1.0], &[0.0, 0.0]);
        for k in SteKind::ALL {
            assert!(expected_coarse_grad(k, &p, &t).is_err());
        }
    }

    #[test]
    fn correlation_examples() {
        let t = teacher(&[1.0, 0.0], &[1.0, 0.0]);
        let p = params(&[0.0, 3.0], &[0.3, 0.4]);
        for k in SteKind::ALL {
            assert!(correlation(k, &p, &t).unwrap().abs() < 1e-15);
        }

        let t = teacher(&[1.0], &[1.0, 0.0]);
        let p = params(&[1.0], &[0.0, 1.0]);
        let id = correlation(SteKind::Identity, &p, &t).unwrap();
        assert!((id - (2.0 * PI).powf(-1.5)).abs() < 1e-15);
        assert!((id - 0.06350).abs() < 1e-5);
        let relu = correlation(SteKind::Relu, &p, &t).unwrap();
        assert!((relu / id - 0.5).abs() < 1e-14);
    }

    #[test]
    fn correlation_undefined_at_endpoints() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        let p = params(&[1.0], &[-2.0, 0.0]);
        assert!(matches!(
            correlation(SteKind::Relu, &p, &t),
            Err(LabError::NonDifferentiable { .. })
        ));
    }

    #[test]
    fn crelu_ratio_finite_when_orthogonal_v() {
        let t = teacher(&[1.0, 0.0], &[1.0, 0.0]);
        let p = params(&[0.0, 1.0], &[0.5, 0.5]);
        let r = descent_ratio(SteKind::CappedRelu, &p, &t).unwrap();
        assert!(r.value().unwrap().is_finite());
    }
}
