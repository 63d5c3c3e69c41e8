use thiserror::Error;

pub type Result<T> = std::result::Result<T, FbError>;

#[derive(Debug, Error)]
pub enum FbError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("empty replay buffer")]
    EmptyReplay,

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("batch size mismatch: {0}")]
    BatchMismatch(String),

    #[error("non-finite loss at epoch {epoch}, cycle {cycle}")]
    NonFiniteLoss { epoch: usize, cycle: usize },

    #[error("training diverged at epoch {epoch}, cycle {cycle}: |loss| = {loss:e}")]
    Divergence { epoch: usize, cycle: usize, loss: f64 },

    #[error("operation not supported for environment `{0}`")]
    UnsupportedEnv(String),

    #[error("ρ must be positive (zero mass at state-action {0})")]
    NonPositiveRho(usize),

    #[error("goal {0} is unreachable")]
    UnreachableGoal(usize),

    #[error("cell {0} is a wall")]
    WallCell(usize),

    #[error("invalid reward specification: {0}")]
    InvalidReward(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("singular linear system")]
    Singular,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FbError {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        FbError::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
