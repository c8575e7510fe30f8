//! Nested model averaging on regularization solution paths.
//!
//! The crate fits lasso and SLOPE solution paths, averages the path
//! solutions with Mallows-type weights on the simplex, and provides the
//! selection baselines (cross-validation, post-selection OLS, oracle path
//! points) together with the simulation and real-data drivers used to
//! compare them.

pub mod averaging;
pub mod error;
pub mod estimators;
pub mod gram;
pub mod lasso;
pub mod linmodel;
pub mod realdata;
pub mod report;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod slope;

pub use error::{Error, Result};
pub use linmodel::{Dataset, FitResult, StandardizationInfo};
