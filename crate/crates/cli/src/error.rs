use thiserror::Error;

/// Exit statuses of the `oneshot` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    pub const USAGE: i32 = 64;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] oneshot_core::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    /// Estimation did not converge; the report is still emitted.
    #[error("{0}")]
    NonConvergence(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use oneshot_core::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::NonConvergence(_) => exit::NON_CONVERGENCE,
            // Numerical breakdowns of the fitted model are reported with the
            // non-convergence status: the input was valid but no usable
            // estimate came out of it.
            CliError::Core(E::IllConditioned { .. } | E::DegenerateConstraint(_) | E::BoundaryEstimate(_) | E::PowerUndefined) => {
                exit::NON_CONVERGENCE
            }
            CliError::Core(_) | CliError::Config(_) | CliError::Io { .. } => exit::VALIDATION,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
