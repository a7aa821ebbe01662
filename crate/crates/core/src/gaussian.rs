//! Gaussian expectation identities for `z ~ N(0, I_n)`.
//!
//! * indicator moments over half-spaces and wedges (used by the ReLU and
//!   identity STEs),
//! * the truncated radial integral `ξ(x) = ∫₀ˣ r² e^{−r²/2} dr`,
//! * the angular integrals `p(θ, w)` and `q(θ, w)` that govern the band
//!   `{0 < zᵀw < 1}` moments of the clipped-ReLU STE.
//!
//! `p` and `q` are evaluated with a fixed 64-point Gauss–Legendre rule so that
//! trajectories built on top of them are bit-reproducible.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::error::{LabError, Result};
use crate::linalg::{add, dot, norm, reject, scale, unit};
use crate::model::{angle, check_len, Angle};
use crate::quadrature::GaussLegendre;

pub const QUADRATURE_ORDER: usize = 64;

/// `ξ(+∞) = √(π/2)`.
pub const XI_INFINITY: f64 = 1.253_314_137_315_500_3;

/// `sec(φ)/‖w‖` is capped here before evaluating ξ; ξ(50) equals ξ(∞) in f64.
const XI_ARGUMENT_CAP: f64 = 50.0;

/// `1/√(2π)`
pub(crate) const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gauss_legendre_64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(QUADRATURE_ORDER))
}

/// `ξ(x) = ∫₀ˣ r² e^{−r²/2} dr = −x e^{−x²/2} + √(π/2) erf(x/√2)`.
///
/// `x = +∞` is accepted and returns `√(π/2)`.
pub fn xi(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(LabError::Domain(format!("ξ needs x >= 0, got {x}")));
    }
    Ok(xi_unchecked(x))
}

pub(crate) fn xi_unchecked(x: f64) -> f64 {
    if x == f64::INFINITY {
        return XI_INFINITY;
    }
    if x < 0.5 {
        // Σ_k (−1/2)^k / k! · x^{2k+3} / (2k+3); the closed form cancels badly here.
        let x2 = x * x;
        let mut term = x2 * x; // x³ (−1/2)^0 / 0!
        let mut acc = 0.0;
        for k in 0..30 {
            let contrib = term / (2 * k + 3) as f64;
            acc += contrib;
            if contrib.abs() < 1e-18 * acc.abs() {
                break;
            }
            term *= -0.5 * x2 / (k + 1) as f64;
        }
        return acc;
    }
    -x * (-0.5 * x * x).exp() + XI_INFINITY * libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// The pair `p(θ, w)`, `q(θ, w)` together with the inputs they were computed at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqValue {
    pub p: f64,
    pub q: f64,
    pub theta: f64,
    pub w_norm: f64,
}

/// ```text
/// p(θ, w) = (1/2π) ∫_{−π/2+θ}^{π/2} cos φ · ξ(sec φ / ‖w‖) dφ
/// q(θ, w) = (1/2π) ∫_{−π/2+θ}^{π/2} sin φ · ξ(sec φ / ‖w‖) dφ
/// ```
pub fn pq(theta: Angle, w_norm: f64) -> Result<PqValue> {
    if w_norm.is_nan() || w_norm <= 0.0 || !w_norm.is_finite() {
        return Err(LabError::Domain(format!(
            "p, q need a positive finite ‖w‖, got {w_norm}"
        )));
    }
    let th = theta.radians();
    let lo = -FRAC_PI_2 + th;
    if lo >= FRAC_PI_2 {
        return Ok(PqValue {
            p: 0.0,
            q: 0.0,
            theta: th,
            w_norm,
        });
    }
    let inv_w = 1.0 / w_norm;
    let rule = gauss_legendre_64();
    // ξ(1/(‖w‖ cos φ)) turns over where cos φ ≈ 1/‖w‖; for large ‖w‖ those layers
    // hug φ = ±π/2 and get panels graded geometrically in cos φ.
    let mut edges = vec![lo, FRAC_PI_2];
    for k in -3..=3 {
        let u = inv_w * 2f64.powi(k);
        if u < 0.5 {
            let phi = u.acos();
            edges.extend([phi, -phi].into_iter().filter(|&x| x > lo));
        }
    }
    edges.sort_by(f64::total_cmp);
    let (mut p, mut q) = (0.0, 0.0);
    for pair in edges.windows(2) {
        let half = 0.5 * (pair[1] - pair[0]);
        let mid = 0.5 * (pair[1] + pair[0]);
        let (mut pp, mut qq) = (0.0, 0.0);
        for (x, wt) in rule.nodes().iter().zip(rule.weights()) {
            let phi = mid + half * x;
            let (s, c) = phi.sin_cos();
            let arg = if c * XI_ARGUMENT_CAP > inv_w {
                inv_w / c
            } else {
                XI_ARGUMENT_CAP
            };
            let xv = xi_unchecked(arg);
            pp += wt * c * xv;
            qq += wt * s * xv;
        }
        p += pp * half;
        q += qq * half;
    }
    let k = 1.0 / (2.0 * PI);
    Ok(PqValue {
        p: p * k,
        q: q * k,
        theta: th,
        w_norm,
    })
}

/// The four half-space/wedge moments of `z ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMoments {
    /// `E[1{zᵀw > 0}]`
    pub prob_single: f64,
    /// `E[1{zᵀw > 0, zᵀw̃ > 0}]`
    pub prob_joint: f64,
    /// `E[z 1{zᵀw > 0}]`
    pub vec_single: Vec<f64>,
    /// `E[z 1{zᵀw > 0, zᵀw̃ > 0}]`, zero when θ(w, w̃) = π
    pub vec_joint: Vec<f64>,
}

/// Half-space and wedge moments of a standard Gaussian vector.
pub fn gauss_indicator_moments(w: &[f64], w_tilde: &[f64]) -> Result<IndicatorMoments> {
    let theta = angle(w, w_tilde)?.radians();
    let w_hat = unit(w).ok_or(LabError::ZeroVector("w"))?;
    let wt_hat = unit(w_tilde).ok_or(LabError::ZeroVector("w_tilde"))?;
    Ok(IndicatorMoments {
        prob_single: 0.5,
        prob_joint: (PI - theta) / (2.0 * PI),
        vec_single: scale(&w_hat, INV_SQRT_2PI),
        vec_joint: bisector_term(&w_hat, &wt_hat, (theta / 2.0).cos() * INV_SQRT_2PI),
    })
}

/// `c · unit(a + b)` for unit vectors `a`, `b`; the zero vector when `a + b`
/// vanishes (antipodal inputs).
pub(crate) fn bisector_term(a: &[f64], b: &[f64], c: f64) -> Vec<f64> {
    let s = add(a, b);
    let n = norm(&s);
    if n < 1e-9 {
        vec![0.0; a.len()]
    } else {
        scale(&s, c / n)
    }
}

/// Band moments for the clipped-ReLU STE.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedMoments {
    /// `E[z 1{0 < zᵀw < 1}] = p(0, w) ŵ`
    pub vec_band: Vec<f64>,
    /// `E[z 1{0 < zᵀw < 1, zᵀw̃ > 0}]`
    pub vec_band_joint: Vec<f64>,
}

/// Band and band-wedge moments of a standard Gaussian vector.
///
/// In the orthonormal frame `(ŵ, e)` with `e` the unit rejection of `w̃` from
/// `w`, the joint moment is `p(θ,w) ŵ + q(θ,w) e`. That equals
/// `(p − cot(θ/2) q) ŵ + csc(θ/2) q · unit(ŵ + w̃/‖w̃‖)` for θ ∈ (0, π) and stays
/// well defined at both endpoints, where `q = 0`.
pub fn gauss_capped_moments(w: &[f64], w_tilde: &[f64]) -> Result<CappedMoments> {
    check_len("w_tilde", w.len(), w_tilde.len())?;
    let theta = angle(w, w_tilde)?;
    let wn = norm(w);
    let w_hat = scale(w, 1.0 / wn);
    let band = pq(Angle::new(0.0)?, wn)?;
    let joint = pq(theta, wn)?;
    Ok(CappedMoments {
        vec_band: scale(&w_hat, band.p),
        vec_band_joint: band_joint_vector(&w_hat, w_tilde, joint.p, joint.q),
    })
}

/// `p ŵ + q e` where `e = unit((I − ŵŵᵀ) w̃)`; the `e` term is dropped when the
/// rejection vanishes (θ ∈ {0, π}, where `q = 0`).
pub(crate) fn band_joint_vector(w_hat: &[f64], w_tilde: &[f64], p: f64, q: f64) -> Vec<f64> {
    let mut out = scale(w_hat, p);
    let perp = reject(w_tilde, w_hat);
    let pn = norm(&perp);
    if pn > crate::model::ENDPOINT_EPS * norm(w_tilde).max(1.0) && q != 0.0 {
        for (o, e) in out.iter_mut().zip(&perp) {
            *o += q * e / pn;
        }
    }
    debug_assert!(dot(&out, &out).is_finite());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::distance;
    use crate::quadrature::adaptive_simpson;

    fn integrand(r: f64) -> f64 {
        r * r * (-0.5 * r * r).exp()
    }

    #[test]
    fn xi_examples() {
        assert_eq!(xi(0.0).unwrap(), 0.0);
        assert!((xi(f64::INFINITY).unwrap() - (PI / 2.0).sqrt()).abs() < 1e-15);
        let oracle = adaptive_simpson(integrand, 0.0, 1.0, 1e-14);
        assert!((xi(1.0).unwrap() - oracle).abs() < 1e-12);
        assert!((xi(1.0).unwrap() - 0.2491).abs() < 1e-4);
    }

    #[test]
    fn xi_matches_simpson_across_range() {
        for &x in &[1e-3, 0.1, 0.49, 0.5, 0.51, 0.9, 2.0, 3.7, 8.0] {
            let oracle = adaptive_simpson(integrand, 0.0, x, 1e-15);
            assert!((xi(x).unwrap() - oracle).abs() < 1e-12, "x = {x}");
        }
        // ξ(50) is ξ(∞) in double precision
        assert_eq!(xi(50.0).unwrap(), XI_INFINITY);
    }

    #[test]
    fn xi_rejects_negative() {
        assert!(xi(-1e-9).is_err());
        assert!(xi(f64::NAN).is_err());
    }

    #[test]
    fn xi_strictly_increasing_and_bounded() {
        let mut prev = xi(0.0).unwrap();
        for k in 1..=2000 {
            let x = k as f64 * 0.0025;
            let cur = xi(x).unwrap();
            assert!(cur > prev, "x = {x}");
            assert!(cur <= XI_INFINITY);
            prev = cur;
        }
    }

    #[test]
    fn pq_endpoints() {
        let v = pq(Angle::new(PI).unwrap(), 1.3).unwrap();
        assert_eq!((v.p, v.q), (0.0, 0.0));
        let v = pq(Angle::new(0.0).unwrap(), 1.3).unwrap();
        assert!(v.q.abs() < 1e-15);
        assert!(v.p > 0.0);
    }

    #[test]
    fn pq_rejects_nonpositive_norm() {
        let th = Angle::new(1.0).unwrap();
        assert!(pq(th, 0.0).is_err());
        assert!(pq(th, -2.0).is_err());
    }

    #[test]
    fn pq_at_right_angle() {
        let v = pq(Angle::new(PI / 2.0).unwrap(), 1.0).unwrap();
        assert!(v.p <= v.q);
    }

    #[test]
    fn indicator_examples() {
        let m = gauss_indicator_moments(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(m.prob_joint, 0.5);
        let m = gauss_indicator_moments(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((m.prob_joint - 0.25).abs() < 1e-15);
        let m = gauss_indicator_moments(&[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(m.vec_joint, vec![0.0, 0.0]);
        assert!(gauss_indicator_moments(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn capped_examples() {
        let m = gauss_capped_moments(&[2.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!(m.vec_band[0] > 0.0 && m.vec_band[1] == 0.0);
        // θ = 0: the wedge constraint is implied by the band
        assert!(distance(&m.vec_band, &m.vec_band_joint) < 1e-15);

        let m = gauss_capped_moments(&[0.3, 1.0, -2.0], &[-0.3, -1.0, 2.0]).unwrap();
        assert!(norm(&m.vec_band_joint) < 1e-15);
    }

    #[test]
    fn capped_joint_matches_cot_csc_form() {
        let w = [0.7, -0.2, 0.4];
        let wt = [0.1, 0.9, -0.3];
        let m = gauss_capped_moments(&w, &wt).unwrap();
        let theta = angle(&w, &wt).unwrap();
        let v = pq(theta, norm(&w)).unwrap();
        let half = theta.radians() / 2.0;
        let w_hat = unit(&w).unwrap();
        let wt_hat = unit(&wt).unwrap();
        let mut expected = scale(&w_hat, v.p - v.q / half.tan());
        let bis = bisector_term(&w_hat, &wt_hat, v.q / half.sin());
        for (e, b) in expected.iter_mut().zip(&bis) {
            *e += b;
        }
        assert!(distance(&expected, &m.vec_band_joint) < 1e-14);
    }
}
