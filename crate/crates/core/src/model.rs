//! Domain types for the two-linear-layer binary-activation network and the
//! closed-form population loss `f(v, w)` with its true gradient.
//!
//! The network predicts `vᵀσ(Zw)` with `σ(x) = 1{x > 0}` applied row-wise to
//! a Gaussian input `Z ∈ R^{m×n}`; labels come from a teacher `(v*, w*)` with
//! `‖w*‖ = 1`. Under Gaussian inputs the expected squared loss only depends on
//! `v`, `v*` and the angle between `w` and `w*`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{
    all_finite, apply_i_plus_ones, apply_scaled_i_plus_ones, dot, norm, reject, scale,
};

/// Below this norm the component of `w*` orthogonal to `w` is treated as
/// zero, i.e. θ ∈ {0, π}.
pub(crate) const ENDPOINT_EPS: f64 = 1e-14;

/// Trainable parameters: second-layer weights `v ∈ R^m`, shared filter `w ∈ R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    v: Vec<f64>,
    w: Vec<f64>,
}

impl ModelParams {
    pub fn new(v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(LabError::InvalidParameter("m must be at least 1".into()));
        }
        if w.len() < 2 {
            return Err(LabError::InvalidParameter(format!(
                "n must be at least 2, got {}",
                w.len()
            )));
        }
        if !all_finite(&v) || !all_finite(&w) {
            return Err(LabError::InvalidParameter(
                "parameters must be finite".into(),
            ));
        }
        Ok(Self { v, w })
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn m(&self) -> usize {
        self.v.len()
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.v, self.w)
    }
}

/// Ground-truth parameters `(v*, w*)` with `‖w*‖ = 1` and `v* ≠ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherParams {
    v_star: Vec<f64>,
    w_star: Vec<f64>,
}

impl TeacherParams {
    pub const UNIT_TOL: f64 = 1e-12;

    pub fn new(v_star: Vec<f64>, w_star: Vec<f64>) -> Result<Self> {
        if v_star.is_empty() || w_star.len() < 2 {
            return Err(LabError::InvalidParameter(
                "teacher needs m >= 1 and n >= 2".into(),
            ));
        }
        if !all_finite(&v_star) || !all_finite(&w_star) {
            return Err(LabError::InvalidParameter("teacher must be finite".into()));
        }
        if v_star.iter().all(|&x| x == 0.0) {
            return Err(LabError::ZeroVector("v*"));
        }
        let wn = norm(&w_star);
        if (wn - 1.0).abs() > Self::UNIT_TOL {
            return Err(LabError::InvalidParameter(format!(
                "w* must have unit norm, got ‖w*‖ = {wn}"
            )));
        }
        Ok(Self { v_star, w_star })
    }

    /// Like [`TeacherParams::new`] but rescales `w*` to unit norm first.
    pub fn normalized(v_star: Vec<f64>, w_star: Vec<f64>) -> Result<Self> {
        let wn = norm(&w_star);
        if wn == 0.0 || !wn.is_finite() {
            return Err(LabError::ZeroVector("w*"));
        }
        Self::new(v_star, scale(&w_star, 1.0 / wn))
    }

    pub fn v_star(&self) -> &[f64] {
        &self.v_star
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn m(&self) -> usize {
        self.v_star.len()
    }

    pub fn n(&self) -> usize {
        self.w_star.len()
    }
}

/// A `(v-part, w-part)` pair; holds either true or coarse gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientPair {
    pub grad_v: Vec<f64>,
    pub grad_w: Vec<f64>,
}

impl GradientPair {
    pub fn norm(&self) -> f64 {
        (dot(&self.grad_v, &self.grad_v) + dot(&self.grad_w, &self.grad_w)).sqrt()
    }
}

/// An angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub fn new(theta: f64) -> Result<Self> {
        if (0.0..=PI).contains(&theta) {
            Ok(Self(theta))
        } else {
            Err(LabError::Domain(format!("angle {theta} outside [0, π]")))
        }
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

/// θ(w, w_ref) via `2 atan2(‖â − b̂‖, ‖â + b̂‖)` on the unit vectors, which
/// stays accurate near 0 and π where `arccos` of the cosine loses half the digits.
pub fn angle(w: &[f64], w_ref: &[f64]) -> Result<Angle> {
    check_len("w_ref", w.len(), w_ref.len())?;
    let (nw, nr) = (norm(w), norm(w_ref));
    if nw == 0.0 {
        return Err(LabError::ZeroVector("w"));
    }
    if nr == 0.0 {
        return Err(LabError::ZeroVector("w_ref"));
    }
    let (mut diff, mut tot) = (0.0, 0.0);
    for (a, b) in w.iter().zip(w_ref) {
        let (a, b) = (a / nw, b / nr);
        diff += (a - b) * (a - b);
        tot += (a + b) * (a + b);
    }
    Ok(Angle((2.0 * diff.sqrt().atan2(tot.sqrt())).clamp(0.0, PI)))
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(LabError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn check_dims(p: &ModelParams, t: &TeacherParams) -> Result<()> {
    check_len("v vs v*", t.m(), p.m())?;
    check_len("w vs w*", t.n(), p.n())
}

/// θ(w, w*) for a nonzero `w`; `None` when `w = 0`.
pub fn teacher_angle(p: &ModelParams, t: &TeacherParams) -> Result<Option<Angle>> {
    check_dims(p, t)?;
    if p.w.iter().all(|&x| x == 0.0) {
        return Ok(None);
    }
    angle(&p.w, &t.w_star).map(Some)
}

/// Population loss `f(v, w) = E_Z[ℓ(v, w; Z)]` in closed form.
///
/// `f = (1/8)[vᵀ(I+11ᵀ)v − 2vᵀ((1 − 2θ/π)I + 11ᵀ)v* + v*ᵀ(I+11ᵀ)v*]` for
/// `w ≠ 0`; the middle term drops out at `w = 0`.
pub fn population_loss(p: &ModelParams, t: &TeacherParams) -> Result<f64> {
    let theta = teacher_angle(p, t)?;
    let v = &p.v;
    let vs = &t.v_star;
    let quad_v = dot(v, &apply_i_plus_ones(v));
    let quad_star = dot(vs, &apply_i_plus_ones(vs));
    Ok(match theta {
        Some(theta) => {
            let c = 1.0 - 2.0 * theta.radians() / PI;
            let cross = dot(v, &apply_scaled_i_plus_ones(c, vs));
            (quad_v - 2.0 * cross + quad_star) / 8.0
        }
        None => quad_star / 8.0,
    })
}

/// `∂f/∂v = (1/4)(I+11ᵀ)v − (1/4)((1 − 2θ/π)I + 11ᵀ)v*`.
///
/// Defined for every nonzero `w`, including θ ∈ {0, π}.
pub fn population_grad_v(p: &ModelParams, t: &TeacherParams) -> Result<Vec<f64>> {
    let theta = teacher_angle(p, t)?.ok_or(LabError::ZeroVector("w"))?;
    Ok(grad_v_at(&p.v, &t.v_star, theta.radians()))
}

pub(crate) fn grad_v_at(v: &[f64], v_star: &[f64], theta: f64) -> Vec<f64> {
    let c = 1.0 - 2.0 * theta / PI;
    let a = apply_i_plus_ones(v);
    let b = apply_scaled_i_plus_ones(c, v_star);
    a.iter().zip(&b).map(|(x, y)| 0.25 * (x - y)).collect()
}

/// `∂f/∂w = −(vᵀv* / (2π‖w‖)) · unit((I − wwᵀ/‖w‖²) w*)`.
///
/// Returns [`LabError::NonDifferentiable`] at θ ∈ {0, π}.
pub fn population_grad_w(p: &ModelParams, t: &TeacherParams) -> Result<Vec<f64>> {
    check_dims(p, t)?;
    let wn = norm(&p.w);
    if wn == 0.0 {
        return Err(LabError::ZeroVector("w"));
    }
    let perp = reject(&t.w_star, &p.w);
    let pn = norm(&perp);
    if pn <= ENDPOINT_EPS {
        let theta = angle(&p.w, &t.w_star)?.radians();
        return Err(LabError::NonDifferentiable { theta });
    }
    let c = -dot(&p.v, &t.v_star) / (2.0 * PI * wn * pn);
    Ok(scale(&perp, c))
}

/// Both partial gradients of `f`; fails at non-differentiable points.
pub fn population_grad(p: &ModelParams, t: &TeacherParams) -> Result<GradientPair> {
    let grad_w = population_grad_w(p, t)?;
    let grad_v = population_grad_v(p, t)?;
    Ok(GradientPair { grad_v, grad_w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::distance;

    fn teacher(v: &[f64], w: &[f64]) -> TeacherParams {
        TeacherParams::new(v.to_vec(), w.to_vec()).unwrap()
    }

    fn params(v: &[f64], w: &[f64]) -> ModelParams {
        ModelParams::new(v.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn angle_examples() {
        assert_eq!(angle(&[1.0, 0.0], &[1.0, 0.0]).unwrap().radians(), 0.0);
        let a = angle(&[0.0, 2.0], &[1.0, 0.0]).unwrap().radians();
        assert!((a - PI / 2.0).abs() < 1e-15);
        let a = angle(&[-1.0, 0.0], &[1.0, 0.0]).unwrap().radians();
        assert!((a - PI).abs() < 1e-15);
    }

    #[test]
    fn angle_rejects_zero_vectors() {
        assert_eq!(
            angle(&[0.0, 0.0], &[1.0, 0.0]),
            Err(LabError::ZeroVector("w"))
        );
        assert_eq!(
            angle(&[1.0, 0.0], &[0.0, 0.0]),
            Err(LabError::ZeroVector("w_ref"))
        );
    }

    #[test]
    fn angle_clamps_rounding() {
        // cosine lands a few ulps past 1 without the clamp
        let w = [0.1 + 0.2, 0.3];
        let a = angle(&w, &[0.3, 0.30000000000000004]).unwrap();
        assert!(!a.radians().is_nan());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(vec![], vec![1.0, 0.0]).is_err());
        assert!(ModelParams::new(vec![1.0], vec![1.0]).is_err());
        assert!(ModelParams::new(vec![f64::NAN], vec![1.0, 0.0]).is_err());
        assert!(TeacherParams::new(vec![1.0], vec![2.0, 0.0]).is_err());
        assert!(TeacherParams::new(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
        assert!(TeacherParams::normalized(vec![1.0], vec![3.0, 4.0]).is_ok());
    }

    #[test]
    fn loss_zero_at_global_minimizer() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        let l = population_loss(&params(&[1.0], &[1.0, 0.0]), &t).unwrap();
        assert!(l.abs() < 1e-15);
    }

    #[test]
    fn loss_at_zero_filter() {
        // (1/8) v*ᵀ(I+11ᵀ)v* = (1/8)(2 + 4) = 0.75
        let t = teacher(&[1.0, 1.0], &[1.0, 0.0]);
        let l = population_loss(&params(&[0.3, -2.0], &[0.0, 0.0]), &t).unwrap();
        assert!((l - 0.75).abs() < 1e-15);
    }

    #[test]
    fn loss_at_right_angle() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        let l = population_loss(&params(&[1.0], &[0.0, 1.0]), &t).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_dimension_mismatch() {
        let t = teacher(&[1.0, 1.0], &[1.0, 0.0]);
        assert!(matches!(
            population_loss(&params(&[1.0], &[1.0, 0.0]), &t),
            Err(LabError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grad_v_examples() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        let g = population_grad_v(&params(&[1.0], &[2.0, 0.0]), &t).unwrap();
        assert!(g[0].abs() < 1e-15);

        let t = teacher(&[1.0, 1.0], &[1.0, 0.0]);
        let g = population_grad_v(&params(&[0.0, 0.0], &[0.0, 1.0]), &t).unwrap();
        assert!(distance(&g, &[-0.5, -0.5]) < 1e-15);
    }

    #[test]
    fn grad_w_example() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        let g = population_grad_w(&params(&[1.0], &[0.0, 1.0]), &t).unwrap();
        assert!(distance(&g, &[-1.0 / (2.0 * PI), 0.0]) < 1e-15);
    }

    #[test]
    fn grad_w_undefined_at_endpoints() {
        let t = teacher(&[1.0], &[1.0, 0.0]);
        for w in [[3.0, 0.0], [-0.5, 0.0]] {
            let err = population_grad(&params(&[1.0], &w), &t).unwrap_err();
            assert!(matches!(err, LabError::NonDifferentiable { .. }));
        }
        // the v-part stays available
        assert!(population_grad_v(&params(&[1.0], &[-1.0, 0.0]), &t).is_ok());
    }
}
