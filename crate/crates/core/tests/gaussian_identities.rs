mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use common::{gauss, rng};
use stelab_core::gaussian::{
    gauss_capped_moments, gauss_indicator_moments, pq, xi, XI_INFINITY,
};
use stelab_core::linalg::{dot, norm, scale};
use stelab_core::quadrature::adaptive_simpson;
use stelab_core::{estimate_expectation, Angle, SampleBatch};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Closed forms obtained by integrating the band moments in polar coordinates
/// analytically instead of numerically; independent of the quadrature.
fn p_closed(theta: f64, w_norm: f64) -> f64 {
    let a = 1.0 / w_norm;
    let phi_a = INV_SQRT_2PI * (-0.5 * a * a).exp();
    if theta == 0.0 {
        return INV_SQRT_2PI - phi_a;
    }
    let s = theta.sin();
    if s == 0.0 || theta >= PI {
        return 0.0;
    }
    0.5 * INV_SQRT_2PI - phi_a * std_normal_cdf(a * theta.cos() / s)
        + theta.cos() * 0.5 * INV_SQRT_2PI * libm::erf(a * FRAC_1_SQRT_2 / s)
}

fn q_closed(theta: f64, w_norm: f64) -> f64 {
    let s = theta.sin();
    if s <= 0.0 {
        return 0.0;
    }
    s * 0.5 * INV_SQRT_2PI * libm::erf(FRAC_1_SQRT_2 / (w_norm * s))
}

fn theta_grid(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..=k).map(move |i| lo + (hi - lo) * i as f64 / k as f64)
}

const W_NORMS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 8.0];

#[test]
fn pq_matches_closed_form() {
    let mut worst: f64 = 0.0;
    for wn in [0.05, 0.25, 0.5, 1.0, 2.0, 8.0, 50.0] {
        for th in theta_grid(0.0, PI, 360) {
            let v = pq(Angle::new(th).unwrap(), wn).unwrap();
            worst = worst
                .max((v.p - p_closed(th, wn)).abs())
                .max((v.q - q_closed(th, wn)).abs());
        }
    }
    assert!(worst <= 1e-9, "worst abs error {worst:e}");
}

#[test]
fn pq_endpoints_vanish() {
    for wn in W_NORMS {
        let at_pi = pq(Angle::new(PI).unwrap(), wn).unwrap();
        assert_eq!((at_pi.p, at_pi.q), (0.0, 0.0));
        assert!(pq(Angle::new(0.0).unwrap(), wn).unwrap().q.abs() < 1e-12);
    }
    assert!(pq(Angle::new(1.0).unwrap(), 0.0).is_err());
    assert!(pq(Angle::new(1.0).unwrap(), -1.0).is_err());
}

#[test]
fn p_le_q_on_upper_half() {
    for wn in W_NORMS {
        for th in theta_grid(PI / 2.0, PI, 180) {
            let v = pq(Angle::new(th).unwrap(), wn).unwrap();
            assert!(v.p <= v.q + 1e-9, "θ={th} ‖w‖={wn}: p={} q={}", v.p, v.q);
        }
    }
}

#[test]
fn linear_p_bound_le_q_on_upper_half() {
    for wn in W_NORMS {
        let p0 = pq(Angle::new(0.0).unwrap(), wn).unwrap().p;
        for th in theta_grid(PI / 2.0, PI, 180) {
            let q = pq(Angle::new(th).unwrap(), wn).unwrap().q;
            assert!((1.0 - th / PI) * p0 <= q + 1e-9, "θ={th} ‖w‖={wn}");
        }
    }
}

#[test]
fn q_symmetric_and_p_gap_antisymmetric() {
    for wn in W_NORMS {
        let p0 = pq(Angle::new(0.0).unwrap(), wn).unwrap().p;
        let gap = |th: f64| (1.0 - th / PI) * p0 - pq(Angle::new(th).unwrap(), wn).unwrap().p;
        for th in theta_grid(0.0, PI, 180) {
            let a = pq(Angle::new(th).unwrap(), wn).unwrap();
            let b = pq(Angle::new(PI - th).unwrap(), wn).unwrap();
            assert!((a.q - b.q).abs() <= 1e-9);
            assert!((gap(th) + gap(PI - th)).abs() <= 1e-9);
        }
    }
}

#[test]
fn pq_nonnegative() {
    for wn in W_NORMS {
        for th in theta_grid(0.0, PI, 90) {
            let v = pq(Angle::new(th).unwrap(), wn).unwrap();
            assert!(v.q >= -1e-12 && v.p >= -1e-12);
        }
    }
}

#[test]
fn xi_against_simpson_and_limit() {
    let f = |r: f64| r * r * (-0.5 * r * r).exp();
    for x in [1e-3, 0.1, 0.49, 0.5, 0.51, 1.0, 2.5, 5.0, 10.0] {
        let oracle = adaptive_simpson(f, 0.0, x, 1e-15);
        assert!((xi(x).unwrap() - oracle).abs() <= 1e-12, "x={x}");
    }
    assert!((xi(f64::INFINITY).unwrap() - (PI / 2.0).sqrt()).abs() <= 1e-12);
    assert!((xi(50.0).unwrap() - XI_INFINITY).abs() <= 1e-15);
    assert!(xi(-1.0).is_err() && xi(f64::NAN).is_err());
}

proptest::proptest! {
    #[test]
    fn xi_increasing_and_bounded(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (xl, xh) = (xi(lo).unwrap(), xi(hi).unwrap());
        proptest::prop_assert!(xl <= xh);
        proptest::prop_assert!(xh <= XI_INFINITY);
        if hi - lo > 1e-3 && hi < 8.0 {
            proptest::prop_assert!(xl < xh);
        }
    }
}

/// `E[f(z)]` for `z ~ N(0, I_n)`: one-row sample matrices.
fn mc_vector<F>(n: usize, dim: usize, seed: u64, samples: usize, f: F) -> stelab_core::McEstimate
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let batch = SampleBatch::new(seed, samples, 1, n).unwrap();
    estimate_expectation(&batch, dim, |z, out| f(z.row(0), out)).unwrap()
}

#[test]
fn indicator_moments_match_monte_carlo() {
    let mut r = rng(11);
    for case in 0..6u64 {
        let n = 2 + case as usize % 4;
        let w = gauss(&mut r, n);
        let wt = if case == 5 { scale(&w, -2.0) } else { gauss(&mut r, n) };
        let exact = gauss_indicator_moments(&w, &wt).unwrap();
        let est = mc_vector(n, 2 + 2 * n, 100 + case, 1_000_000, |z, out| {
            let a = dot(z, &w) > 0.0;
            let b = dot(z, &wt) > 0.0;
            out[0] = a as u8 as f64;
            out[1] = (a && b) as u8 as f64;
            for j in 0..n {
                out[2 + j] = if a { z[j] } else { 0.0 };
                out[2 + n + j] = if a && b { z[j] } else { 0.0 };
            }
        });
        let mut expected = vec![exact.prob_single, exact.prob_joint];
        expected.extend(&exact.vec_single);
        expected.extend(&exact.vec_joint);
        assert!(
            est.agrees_within(&expected, 4.0),
            "case {case}: z-scores {:?}",
            est.z_scores(&expected)
        );
    }
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
fn capped_moments_match_monte_carlo() {
    let mut r = rng(12);
    for case in 0..6u64 {
        let n = 2 + case as usize % 3;
        let w = scale(&gauss(&mut r, n), 0.3 + 0.4 * case as f64);
        let wt = match case {
            4 => scale(&w, -1.0),
            5 => scale(&w, 3.0),
            _ => gauss(&mut r, n),
        };
        let exact = gauss_capped_moments(&w, &wt).unwrap();
        let est = mc_vector(n, 2 * n, 200 + case, 1_000_000, |z, out| {
            let zw = dot(z, &w);
            let band = zw > 0.0 && zw < 1.0;
            let joint = band && dot(z, &wt) > 0.0;
            for j in 0..n {
                out[j] = if band { z[j] } else { 0.0 };
                out[n + j] = if joint { z[j] } else { 0.0 };
            }
        });
        let mut expected = exact.vec_band.clone();
        expected.extend(&exact.vec_band_joint);
        assert!(
            est.agrees_within(&expected, 4.0),
            "case {case}: z-scores {:?}",
            est.z_scores(&expected)
        );
    }
}

#[test]
fn capped_joint_orthogonal_example_at_ten_million() {
    let exact = gauss_capped_moments(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let est = mc_vector(2, 2, 7, 10_000_000, |z, out| {
        if z[0] > 0.0 && z[0] < 1.0 && z[1] > 0.0 {
            out[0] = z[0];
            out[1] = z[1];
        }
    });
    assert!(est.agrees_within(&exact.vec_band_joint, 4.0), "{:?}", est.z_scores(&exact.vec_band_joint));
}

#[test]
fn capped_moments_cot_csc_form() {
    // (p − cot(θ/2) q) ŵ + csc(θ/2) q unit(ŵ + w̃̂) for interior θ
    let mut r = rng(13);
    for _ in 0..50 {
        let w = gauss(&mut r, 4);
        let wt = gauss(&mut r, 4);
        let th = stelab_core::angle(&w, &wt).unwrap();
        let v = pq(th, norm(&w)).unwrap();
        let wh = scale(&w, 1.0 / norm(&w));
        let wth = scale(&wt, 1.0 / norm(&wt));
        let bis: Vec<f64> = wh.iter().zip(&wth).map(|(a, b)| a + b).collect();
        let bis = scale(&bis, 1.0 / norm(&bis));
        let h = th.radians() / 2.0;
        let alt: Vec<f64> = wh
            .iter()
            .zip(&bis)
            .map(|(a, b)| (v.p - v.q / h.tan()) * a + v.q / h.sin() * b)
            .collect();
        let got = gauss_capped_moments(&w, &wt).unwrap().vec_band_joint;
        for (x, y) in got.iter().zip(&alt) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

