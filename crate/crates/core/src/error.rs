use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar argument was outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Index out of range or a dimension mismatch between arguments.
    #[error("argument error: {0}")]
    Argument(String),

    /// The requested cell has no devices on test (`K_is = 0`).
    #[error("cell ({i}, {s}) has no devices on test")]
    EmptyCell { i: usize, s: usize },

    /// Data or design failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// A matrix that must be inverted is too close to singular.
    #[error("ill-conditioned matrix (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    /// `Mᵀ Σ M` of a Wald constraint is singular or the constraint is rank deficient.
    #[error("degenerate constraint: {0}")]
    DegenerateConstraint(String),

    /// A logit interval was requested at a reliability of exactly 0 or 1.
    #[error("reliability estimate {0} lies on the boundary of [0, 1]")]
    BoundaryEstimate(f64),

    /// Fitted models only identify reliability at inspection times.
    #[error("time {0} is not an inspection time of the plan")]
    UnsupportedTime(f64),

    /// Power is undefined when the alternative lies on the null hypothesis.
    #[error("power undefined: the alternative satisfies the null hypothesis; use the test level instead")]
    PowerUndefined,

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
