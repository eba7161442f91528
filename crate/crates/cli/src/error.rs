use std::io;
use std::path::PathBuf;

use stackgrid::GameError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONDITION: i32 = 2;
pub const EXIT_INPUT: i32 = 64;
pub const EXIT_SOLVER: i32 = 65;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{0}")]
    Condition(String),

    #[error("{0}")]
    Solver(String),

    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Input(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Condition(_) => EXIT_CONDITION,
            CliError::Solver(_) | CliError::Verify(_) => EXIT_SOLVER,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::InvalidScenario(_)
            | GameError::InvalidUsers(_)
            | GameError::LengthMismatch { .. }
            | GameError::InfeasibleBounds(_)
            | GameError::GridTooLarge { .. } => CliError::Input(e.to_string()),
            GameError::NonpositiveTildeW { .. }
            | GameError::ConditionViolation { .. }
            | GameError::PredictionDomain { .. } => CliError::Condition(e.to_string()),
            GameError::MaxIterExceeded(_) | GameError::Consistency(_) => {
                CliError::Solver(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
