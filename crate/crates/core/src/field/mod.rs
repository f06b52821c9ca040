//! Periodic spectral fields on `[-1, 1)^2` and the Euler time stepper.

mod eval;
mod fields;
mod grid;
mod snapshot;
mod solver;
mod transform;

pub use eval::{log_lipschitz_modulus, LocalInterpolator, PointEvaluator};
pub use fields::{ScalarField, VelocityField, VorticityField};
pub use grid::Grid;
pub use snapshot::{read_snapshot, write_snapshot, write_snapshot_csv};
pub use solver::{
    biot_savart, biot_savart_oriented, poisson_solve, EulerSolver, Orientation, SolverConfig,
    StepRecord, TimeSeries,
};
pub use transform::Transform;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("resolution {0} is not a power of two >= 16")]
    BadResolution(usize),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("field has nonzero mean {mean:e}")]
    NonZeroMean { mean: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("dt = {dt:e} violates the CFL limit; required dt <= {max_dt:e}")]
    CflViolation { dt: f64, max_dt: f64 },
    #[error("non-finite values appeared during the step at t = {time}")]
    Blowup { time: f64 },
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
