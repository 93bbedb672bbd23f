//! Kriging (Gaussian-process) metamodeling for black-box interpretability.
//!
//! Fits an Ordinary-Kriging surrogate to a black-box model's tabular
//! predictions, ranks features by the fitted per-dimension activity
//! parameters theta, and exposes sample-level structure through the learned
//! correlation matrix. A synthetic-GLM harness contrasts the theta ranking
//! with logistic-regression Wald statistics, including the Hauck-Donner
//! regime where the Wald ranking breaks down.
//!
//! The numeric core is generic over the scalar type via [`Scalar`]; `f64`
//! aliases are exported at the crate root for everyday use.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod artifact;
pub mod baseline;
pub mod interpret;
pub mod kernel;
pub mod kriging;
pub mod linalg;
pub mod metrics;
pub mod optim;

/// Scalar type the numeric core is generic over.
///
/// Implemented for any float-like type with the usual conversions; in
/// practice `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

/// Shorthand for lifting an `f64` constant into the generic scalar type.
pub(crate) fn c<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("constant not representable in scalar type")
}

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("response is constant; likelihood is undefined")]
    DegenerateResponse,
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("starting point outside bounds")]
    InfeasibleStart,
    #[error("all feature columns are constant")]
    AllColumnsConstant,
    #[error("vector is constant; correlation undefined")]
    ConstantVector,
    #[error("empty input")]
    EmptyInput,
    #[error("response contains a single class only")]
    OneClassOnly,
    #[error("information matrix is singular (collinear features)")]
    SingularInformation,
    #[error("invalid synthetic-GLM spec: {0}")]
    InvalidSpec(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use kernel::{CorrelationMatrix, KernelParams};
pub use kriging::{FitConfig, KrigingModel, Optimizer};
pub use linalg::{CholeskyFactor, Matrix};

/// Concrete `f64` aliases for the generic core types.
pub type MatrixF64 = Matrix<f64>;
pub type KernelParamsF64 = KernelParams<f64>;
pub type KrigingModelF64 = KrigingModel<f64>;
pub type CholeskyFactorF64 = CholeskyFactor<f64>;
