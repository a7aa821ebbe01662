//! Full-batch coarse gradient descent driven by the expected coarse gradient.
//!
//! ```text
//! vᵗ⁺¹ = vᵗ − η ∂f/∂v(vᵗ, wᵗ)
//! wᵗ⁺¹ = wᵗ − η E_Z[g_μ(vᵗ, wᵗ; Z)]
//! ```
//!
//! `w` is never renormalized; `‖wᵗ‖` is only monitored against a floor.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::landscape::{classify_point, PointClass, DEFAULT_CLASSIFY_TOL};
use crate::linalg::{all_finite, axpy, dot, norm, sum};
use crate::model::{population_loss, teacher_angle, ModelParams, TeacherParams};
use crate::ste::{expected_coarse_grad, SteKind};

/// A loss increase larger than this breaks monotonicity.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// How the step size is chosen before the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EtaMode {
    Fixed,
    /// Halve η until the first `probe_steps` steps are monotone, at most
    /// `max_halvings` times.
    AutoHalve { probe_steps: usize, max_halvings: u32 },
    /// Restart from the initial point with η/2 whenever any step of the run
    /// raises the loss, at most `max_halvings` times.
    HalveUntilMonotone { max_halvings: u32 },
}

impl EtaMode {
    pub const DEFAULT_AUTO: EtaMode = EtaMode::AutoHalve {
        probe_steps: 50,
        max_halvings: 60,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub kind: SteKind,
    pub eta: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub w_norm_floor: f64,
    /// Record every k-th iterate; the initial and final iterates are always kept.
    pub record_every: usize,
    /// Store `v` in each trajectory record.
    pub snapshot_v: bool,
    pub eta_mode: EtaMode,
    pub classify_tol: f64,
}

impl DescentConfig {
    pub fn new(kind: SteKind, eta: f64) -> Self {
        Self {
            kind,
            eta,
            max_iters: 100_000,
            grad_tol: 1e-7,
            w_norm_floor: 1e-3,
            record_every: 1,
            snapshot_v: false,
            eta_mode: EtaMode::Fixed,
            classify_tol: DEFAULT_CLASSIFY_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::InvalidParameter(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.w_norm_floor >= 0.0) {
            return bad(format!("w_norm_floor must be ≥ 0, got {}", self.w_norm_floor));
        }
        if self.record_every < 1 {
            return bad("record_every must be at least 1".into());
        }
        if !(self.classify_tol > 0.0) {
            return bad(format!("classify_tol must be positive, got {}", self.classify_tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_v_norm: f64,
    pub coarse_grad_w_norm: f64,
    pub theta: f64,
    pub w_norm: f64,
    pub v: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub final_params: ModelParams,
    pub classification: PointClass,
    pub converged: bool,
    /// No step raised the loss by more than [`MONOTONE_SLACK`].
    pub monotone: bool,
    pub iterations: usize,
    pub trajectory: Vec<TrajectoryRecord>,
    /// Step size actually used.
    pub eta: f64,
    pub halvings: u32,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub max_loss_increase: f64,
    /// First iteration whose loss exceeds the initial loss by more than [`MONOTONE_SLACK`].
    pub first_rise_above_start: Option<usize>,
    pub min_w_norm: f64,
    pub w_floor_violated: bool,
    /// The run stopped because `w` collapsed to zero.
    pub degenerate: bool,
    pub final_residual: f64,
}

/// One coarse gradient step of size `cfg.eta`.
pub fn step(p: &ModelParams, t: &TeacherParams, cfg: &DescentConfig) -> Result<ModelParams> {
    step_with(p, t, cfg.kind, cfg.eta, 0)
}

fn step_with(
    p: &ModelParams,
    t: &TeacherParams,
    kind: SteKind,
    eta: f64,
    iter: usize,
) -> Result<ModelParams> {
    let g = expected_coarse_grad(kind, p, t)?;
    apply_step(p, &g.grad_v, &g.grad_w, eta, iter)
}

fn apply_step(
    p: &ModelParams,
    gv: &[f64],
    gw: &[f64],
    eta: f64,
    iter: usize,
) -> Result<ModelParams> {
    let mut v = p.v().to_vec();
    let mut w = p.w().to_vec();
    axpy(-eta, gv, &mut v);
    axpy(-eta, gw, &mut w);
    if !all_finite(&w) || !all_finite(&v) || norm(&w) == 0.0 {
        return Err(LabError::DegenerateStep { iter });
    }
    ModelParams::new(v, w)
}

struct Pass {
    params: ModelParams,
    converged: bool,
    monotone: bool,
    iterations: usize,
    trajectory: Vec<TrajectoryRecord>,
    initial_loss: f64,
    final_loss: f64,
    max_loss_increase: f64,
    first_rise_above_start: Option<usize>,
    min_w_norm: f64,
    degenerate: bool,
    final_residual: f64,
}

fn descend(
    p0: &ModelParams,
    t: &TeacherParams,
    cfg: &DescentConfig,
    eta: f64,
    max_iters: usize,
    record: bool,
    abort_on_increase: bool,
) -> Result<Pass> {
    let mut p = p0.clone();
    let initial_loss = population_loss(&p, t)?;
    let mut prev_loss = initial_loss;
    let mut pass = Pass {
        params: p.clone(),
        converged: false,
        monotone: true,
        iterations: 0,
        trajectory: Vec::new(),
        initial_loss,
        final_loss: initial_loss,
        max_loss_increase: f64::NEG_INFINITY,
        first_rise_above_start: None,
        min_w_norm: f64::INFINITY,
        degenerate: false,
        final_residual: f64::NAN,
    };
    let mut iter = 0;
    loop {
        let loss = population_loss(&p, t)?;
        if iter > 0 {
            let inc = loss - prev_loss;
            pass.max_loss_increase = pass.max_loss_increase.max(inc);
            if inc > MONOTONE_SLACK {
                pass.monotone = false;
                if abort_on_increase {
                    break;
                }
            }
            if pass.first_rise_above_start.is_none() && loss > initial_loss + MONOTONE_SLACK {
                pass.first_rise_above_start = Some(iter);
            }
        }
        prev_loss = loss;
        let wn = norm(p.w());
        pass.min_w_norm = pass.min_w_norm.min(wn);
        let theta = teacher_angle(&p, t)?
            .ok_or(LabError::DegenerateStep { iter })?
            .radians();
        let g = expected_coarse_grad(cfg.kind, &p, t)?;
        let (gvn, gwn) = (norm(&g.grad_v), norm(&g.grad_w));
        let residual = gvn.max(gwn);
        let done = residual <= cfg.grad_tol || iter >= max_iters;
        if record && (iter % cfg.record_every == 0 || done) {
            pass.trajectory.push(TrajectoryRecord {
                iter,
                loss,
                grad_v_norm: gvn,
                coarse_grad_w_norm: gwn,
                theta,
                w_norm: wn,
                v: cfg.snapshot_v.then(|| p.v().to_vec()),
            });
        }
        pass.final_loss = loss;
        pass.final_residual = residual;
        if done {
            pass.converged = residual <= cfg.grad_tol;
            break;
        }
        match apply_step(&p, &g.grad_v, &g.grad_w, eta, iter + 1) {
            Ok(next) => p = next,
            Err(LabError::DegenerateStep { .. }) => {
                pass.degenerate = true;
                pass.min_w_norm = 0.0;
                break;
            }
            Err(e) => return Err(e),
        }
        iter += 1;
    }
    pass.iterations = iter;
    pass.params = p;
    Ok(pass)
}

/// Runs descent until the stationarity residual drops to `grad_tol` or
/// `max_iters` steps have been taken.
pub fn run(p0: &ModelParams, t: &TeacherParams, cfg: &DescentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if norm(p0.w()) == 0.0 {
        return Err(LabError::ZeroVector("w"));
    }
    let mut eta = cfg.eta;
    let mut halvings = 0;
    let pass = match cfg.eta_mode {
        EtaMode::Fixed => descend(p0, t, cfg, eta, cfg.max_iters, true, false)?,
        EtaMode::AutoHalve {
            probe_steps,
            max_halvings,
        } => {
            let probe = probe_steps.min(cfg.max_iters);
            while halvings < max_halvings {
                let pass = descend(p0, t, cfg, eta, probe, false, true)?;
                if pass.monotone && !pass.degenerate {
                    break;
                }
                eta *= 0.5;
                halvings += 1;
            }
            descend(p0, t, cfg, eta, cfg.max_iters, true, false)?
        }
        EtaMode::HalveUntilMonotone { max_halvings } => loop {
            let last = halvings >= max_halvings;
            let pass = descend(p0, t, cfg, eta, cfg.max_iters, true, !last)?;
            if last || (pass.monotone && !pass.degenerate) {
                break pass;
            }
            eta *= 0.5;
            halvings += 1;
        },
    };
    let classification = classify_point(&pass.params, t, cfg.classify_tol)?;
    Ok(RunOutcome {
        classification,
        converged: pass.converged,
        monotone: pass.monotone,
        iterations: pass.iterations,
        trajectory: pass.trajectory,
        eta,
        halvings,
        initial_loss: pass.initial_loss,
        final_loss: pass.final_loss,
        max_loss_increase: pass.max_loss_increase,
        first_rise_above_start: pass.first_rise_above_start,
        min_w_norm: pass.min_w_norm,
        w_floor_violated: pass.min_w_norm < cfg.w_norm_floor,
        degenerate: pass.degenerate,
        final_residual: pass.final_residual,
        final_params: pass.params,
    })
}

/// `vᵀv* > 0`, `θ(w, w*) < π/2` and `(1ᵀv*)(1ᵀv) ≤ (1ᵀv*)²`.
pub fn check_global_region(p: &ModelParams, t: &TeacherParams) -> Result<bool> {
    let theta = teacher_angle(p, t)?.ok_or(LabError::ZeroVector("w"))?;
    Ok(region_conditions(p.v(), theta.radians(), t.v_star()))
}

pub(crate) fn region_conditions(v: &[f64], theta: f64, v_star: &[f64]) -> bool {
    let s = sum(v_star);
    dot(v, v_star) > 0.0 && theta < std::f64::consts::FRAC_PI_2 && s * sum(v) <= s * s
}

/// Region check on a recorded iterate; `None` when `v` was not snapshotted.
pub fn record_in_global_region(rec: &TrajectoryRecord, t: &TeacherParams) -> Option<bool> {
    rec.v
        .as_ref()
        .map(|v| region_conditions(v, rec.theta, t.v_star()))
}

#[doc(hidden)]
pub fn step_at(
    p: &ModelParams,
    t: &TeacherParams,
    kind: SteKind,
    eta: f64,
) -> Result<ModelParams> {
    step_with(p, t, kind, eta, 0)
}
