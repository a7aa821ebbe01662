//! Closed-form theory and simulation of straight-through-estimator training
//! for a two-linear-layer network with binary activation and Gaussian inputs.

pub mod error;
pub mod gaussian;
pub mod landscape;
pub mod linalg;
pub mod model;
pub mod monte_carlo;
pub mod optimizer;
pub mod quadrature;
pub mod ste;

pub use error::{LabError, Result};
pub use landscape::{
    classify_point, critical_points, stationarity_residual, CriticalPointReport, PointClass,
};
pub use model::{
    angle, population_grad, population_grad_v, population_grad_w, population_loss, Angle,
    GradientPair, ModelParams, TeacherParams,
};
pub use monte_carlo::{estimate_expectation, GaussianMatrix, McEstimate, SampleBatch};
pub use optimizer::{check_global_region, run, step, DescentConfig, EtaMode, RunOutcome};
pub use ste::{correlation, expected_coarse_grad, SteKind};
