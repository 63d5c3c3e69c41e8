use std::fmt;

use fbrep::FbError;

/// Failure of a subcommand, classified by process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Config(String),
    /// Training produced a non-finite or runaway loss (exit 3).
    Diverged(String),
    /// Anything else: I/O, malformed model files, oracle failures (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Diverged(m) => write!(f, "training diverged: {m}"),
            CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<FbError> for CliError {
    fn from(e: FbError) -> Self {
        match e {
            FbError::Config(m) => CliError::Config(m),
            FbError::InvalidHyperparams(_)
            | FbError::InvalidReward(_)
            | FbError::WallCell(_)
            | FbError::UnsupportedEnv(_) => CliError::Config(e.to_string()),
            FbError::Divergence { .. } | FbError::NonFiniteLoss { .. } | FbError::NonFiniteGradient => {
                CliError::Diverged(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
