//! Robust inference for one-shot device testing data under a semi-parametric
//! proportional hazards model.
//!
//! Estimation minimizes a weighted density power divergence (DPD) between
//! observed and modelled failure proportions; the tuning parameter `β = 0`
//! gives the maximum likelihood estimator and `β > 0` trades efficiency for
//! robustness against outlying cells.

// Negated comparisons also reject NaN. Series coefficients keep full precision.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod adequacy;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod inference;
pub mod io;
pub mod model;
pub mod optim;
pub mod sim;
pub mod special;
pub mod wald;

pub use adequacy::{GofResult, TuningCriterion, TuningSelection};
pub use divergence::TuningBeta;
pub use error::{Error, Result};
pub use estimation::{DataSummary, FitOptions, FitResult, FitWarning};
pub use inference::{CiMethod, ReliabilityCI, SandwichCov};
pub use model::{DeviceData, LifetimeModel, ProbPair, TestPlan, ThetaParams, WeibullTruth};
pub use sim::{BetaSummary, Contamination, McSummary, SimDesign};
pub use wald::{AffineConstraint, WaldResult};
