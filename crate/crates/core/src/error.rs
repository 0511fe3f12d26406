use thiserror::Error;

use crate::optim::TrainTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),

    #[error("Fisher subspace undefined (zero-dimensional)")]
    ZeroFisherSubspace,

    #[error("zero discriminant direction")]
    ZeroDiscriminant,

    #[error("population form requires centered means (|sum w_k mu_k| = {0:e})")]
    NotCentered(f64),

    #[error("non-finite value at index {index} in {what}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training aborted at step {step}: {reason}")]
    TrainingAborted {
        step: usize,
        reason: String,
        trace: Box<TrainTrace>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::TrainingAborted { .. }
                | Error::DegenerateProjection(_)
                | Error::ZeroFisherSubspace
                | Error::ZeroDiscriminant
        )
    }
}
