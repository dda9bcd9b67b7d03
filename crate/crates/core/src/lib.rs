//! Zeroth-order optimization with one-point residual feedback.
//!
//! The crate is organised around a few interchangeable families, each
//! selectable by string id at runtime:
//!
//! - [`problems`]: benchmark objectives with declared regularity constants
//!   and optional stochastic oracles (`"norm"`, `"quadratic"`, `"logsumexp"`,
//!   `"nonconvex"`, `"lsq"`, `"constant"`).
//! - [`estimators`]: gradient estimators built from function values only
//!   (`"spsa1"`, `"one_point"`, `"two_point"`, `"residual"`,
//!   `"residual_gaussian"`).
//! - [`optimizer::Setting`]: the ten step-size/smoothing schedules.
//!
//! [`smoothing`] and [`diagnostics`] check the moment identities, smoothing
//! bounds and variance recursions empirically; [`experiments`] drives seed
//! ensembles and dimension/precision sweeps.

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod mc;
pub mod optimizer;
pub mod problems;
pub mod report;
pub mod rng;
pub mod smoothing;

pub use error::{Result, ZoError};
pub use estimators::{EstimatorRegistry, GradientEstimate, GradientEstimator, Oracle};
pub use optimizer::{RunRecord, Schedule, Setting};
pub use problems::{Problem, ProblemRegistry};
pub use report::BoundCheckReport;
pub use rng::{DirectionSample, Distribution, RandomStream};
pub use smoothing::SmoothedSurrogate;
