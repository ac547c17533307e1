//! Spectral machinery for higher-order curvature energies on closed planar
//! curves, the closure-constrained curvature coordinates that describe them,
//! and the gauge-fixed length-normalised gradient flow, together with the
//! verification drivers used by the `idealflow` CLI.
//!
//! The core is generic over the scalar type via [`Scalar`] (any float that
//! `rustfft` can transform); the concrete aliases at the crate root fix
//! `f64`, which is what the CLI and the test harness use throughout.

pub mod curve;
pub mod diagnostics;
pub mod energy;
pub mod flow;
pub mod scalar;
pub mod spectral;

pub use scalar::Scalar;

/// Errors shared across the numerical modules.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("field mean {mean:e} exceeds the mean-zero tolerance {tol:e}")]
    MeanNotZero { mean: f64, tol: f64 },
    #[error("state is not closed: |closure residual| = {residual:e} > {tol:e}")]
    NotClosed { residual: f64, tol: f64 },
    #[error("closure projection Newton did not reach {tol:e} in {iterations} iterations (last residual {residual:e})")]
    NewtonDiverged {
        residual: f64,
        tol: f64,
        iterations: usize,
    },
    #[error("closure chart Jacobian is singular (|det| = {det:e})")]
    ChartSingular { det: f64 },
    #[error("curvature integral is {value} which is not within {tol:e} of an integer")]
    NotInteger { value: f64, tol: f64 },
    #[error("spectral resolution lost: top decile of modes carries {fraction:e} of the energy")]
    UnderResolved { fraction: f64 },
    #[error("time step rejected {times} times in a row; dissipation residual {residual:e}")]
    StepRejected { times: usize, residual: f64 },
    #[error("critical point search did not converge in {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// `f64` field on the unit-period circle.
pub type Field = spectral::PeriodicField<f64>;
/// `f64` intrinsic description of a closed unit-length curve.
pub type State = curve::CurvatureState<f64>;
/// `f64` embedded centred representative.
pub type Curve = curve::ReconstructedCurve<f64>;
/// `f64` closure chart.
pub type Chart = curve::ClosureChart<f64>;

/// Single-precision aliases; the whole pipeline also instantiates at `f32`,
/// at correspondingly looser tolerances.
pub type Field32 = spectral::PeriodicField<f32>;
pub type State32 = curve::CurvatureState<f32>;
