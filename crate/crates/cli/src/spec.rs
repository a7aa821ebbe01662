//! Experiment specification shared by every subcommand.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use stelab_core::linalg::norm;
use stelab_core::{SteKind, TeacherParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Landscape,
    Descend,
    Figure1,
    Instability,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Landscape => "landscape",
            Command::Descend => "descend",
            Command::Figure1 => "figure1",
            Command::Instability => "instability",
            Command::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// Offsets added to the master seed so sub-experiments never share a stream.
pub mod seed_offset {
    pub const TEACHER: u64 = 0;
    pub const START: u64 = 1;
    pub const PERTURB: u64 = 2;
    /// Verify checks use `VERIFY + check index`.
    pub const VERIFY: u64 = 1_000;
    /// Figure 1 batches use `FIGURE1 + curve index`.
    pub const FIGURE1: u64 = 2_000;
    /// Sweep attempts use `SWEEP + attempt index`, offset per STE by `SWEEP_STRIDE`.
    pub const SWEEP: u64 = 1_000_000;
    pub const SWEEP_STRIDE: u64 = 1 << 32;
}

pub fn child_seed(seed: u64, offset: u64) -> u64 {
    seed.wrapping_add(offset)
}

pub fn child_rng(seed: u64, offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, offset))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit_gaussian_vec(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let g = gaussian_vec(rng, k);
        let r = norm(&g);
        if r > 1e-12 {
            return g.iter().map(|x| x / r).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    /// `None` lets the command choose (sweep then covers every STE).
    pub ste: Option<SteKind>,
    pub eta: f64,
    pub samples: usize,
    pub iters: usize,
    pub v_star: Option<Vec<f64>>,
    pub w_star: Option<Vec<f64>>,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    /// Meaning depends on the command: z-score bound for verify, residual
    /// bound for landscape/instability, classification radius otherwise.
    pub tol: f64,
    /// Runs per STE for sweep.
    pub runs: usize,
    /// Starting `‖w‖` where a command places `w` itself.
    pub w_norm: f64,
    /// Perturbation radius of the instability start.
    pub epsilon: f64,
    /// Figure 1 batch sizes.
    pub sample_sizes: Vec<usize>,
    /// Sweep: restrict starts to the global-convergence region.
    pub in_region: bool,
    /// Halve η until the whole run is monotone instead of using it as given.
    pub halve: bool,
}

impl ExperimentSpec {
    pub fn defaults(command: Command) -> Self {
        let base = Self {
            command,
            m: 2,
            n: 3,
            seed: 42,
            ste: None,
            eta: 1e-2,
            samples: 1_000_000,
            iters: 100_000,
            v_star: None,
            w_star: None,
            output_path: None,
            format: Format::Json,
            tol: 1e-4,
            runs: 100,
            w_norm: 1.0,
            epsilon: 0.0,
            sample_sizes: vec![10, 50, 1000],
            in_region: false,
            halve: false,
        };
        match command {
            Command::Verify => Self { tol: 4.0, ..base },
            Command::Landscape => Self {
                tol: 1e-8,
                v_star: Some(vec![1.0, -1.0]),
                ..base
            },
            Command::Descend => Self {
                ste: Some(SteKind::Relu),
                format: Format::Csv,
                halve: true,
                eta: 1.0,
                ..base
            },
            Command::Figure1 => Self {
                n: 4,
                ste: Some(SteKind::Relu),
                v_star: Some(vec![1.0, 1.0]),
                format: Format::Csv,
                ..base
            },
            Command::Instability => Self {
                v_star: Some(vec![1.0, 1.0]),
                eta: 1e-3,
                iters: 1_000,
                tol: 1e-8,
                format: Format::Csv,
                ..base
            },
            Command::Sweep => Self {
                m: 5,
                n: 5,
                eta: 1.0 / 64.0,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.m >= 1, "m must be at least 1, got {}", self.m);
        ensure!(self.n >= 2, "n must be at least 2, got {}", self.n);
        ensure!(
            self.eta > 0.0 && self.eta.is_finite(),
            "eta must be positive and finite, got {}",
            self.eta
        );
        ensure!(self.tol > 0.0, "tol must be positive, got {}", self.tol);
        ensure!(
            self.w_norm > 0.0 && self.w_norm.is_finite(),
            "w-norm must be positive, got {}",
            self.w_norm
        );
        ensure!(self.epsilon >= 0.0, "epsilon must be ≥ 0, got {}", self.epsilon);
        if matches!(self.command, Command::Verify) {
            ensure!(self.samples >= 2, "samples must be at least 2, got {}", self.samples);
        }
        if matches!(self.command, Command::Figure1) {
            ensure!(!self.sample_sizes.is_empty(), "figure1 needs at least one sample size");
            ensure!(
                self.sample_sizes.iter().all(|&s| s >= 1),
                "figure1 sample sizes must be positive"
            );
        }
        if let Some(v) = &self.v_star {
            ensure!(v.len() == self.m, "--v-star has {} entries but m = {}", v.len(), self.m);
            ensure!(v.iter().any(|x| *x != 0.0), "v* must be nonzero");
        }
        if let Some(w) = &self.w_star {
            ensure!(w.len() == self.n, "--w-star has {} entries but n = {}", w.len(), self.n);
        }
        Ok(())
    }

    /// Teacher from the flags, filling unspecified parts from the teacher stream.
    pub fn teacher(&self) -> Result<TeacherParams> {
        let mut rng = child_rng(self.seed, seed_offset::TEACHER);
        let v_star = match &self.v_star {
            Some(v) => v.clone(),
            None => gaussian_vec(&mut rng, self.m),
        };
        let w_star = match &self.w_star {
            Some(w) => w.clone(),
            None => unit_gaussian_vec(&mut rng, self.n),
        };
        if norm(&w_star) == 0.0 {
            bail!("w* must be nonzero");
        }
        Ok(TeacherParams::normalized(v_star, w_star)?)
    }
}
