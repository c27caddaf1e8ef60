//! CLI error type and its mapping to process exit codes.

use lsgd_core::Error as CoreError;

/// Exit code for configuration problems: unreadable, unparsable, or
/// semantically invalid configs, and requests for artifacts that do not
/// exist yet.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code when a problem exceeds the dense-Hessian capacity budget.
pub const EXIT_CAPACITY: i32 = 3;
/// Exit code for numerical divergence or non-convergence.
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(core) => match core {
                CoreError::HessianBudget { .. } => EXIT_CAPACITY,
                CoreError::Divergence { .. }
                | CoreError::TooManyDivergentTrials { .. }
                | CoreError::EigNoConvergence
                | CoreError::NonFiniteInput
                | CoreError::RankDeficient { .. } => EXIT_NUMERICAL,
                CoreError::InvalidArgument(_) | CoreError::IdxFormat(_) => EXIT_CONFIG,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
