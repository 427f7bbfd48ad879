use std::io;

use thiserror::Error;

use crate::decomposition::DecompositionModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("non-finite state in {method} stage {stage} (row {row})")]
    IntegratorStage {
        method: &'static str,
        stage: usize,
        row: usize,
    },

    #[error("integration failed at step {step}: {source}")]
    RolloutStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory {trajectory} diverged: {source}")]
    TrajectoryDiverged {
        trajectory: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        last_good: Box<DecompositionModel>,
    },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::IntegratorStage { .. } => "integrator_stage",
            Error::RolloutStep { .. } => "rollout_step",
            Error::TrajectoryDiverged { .. } => "trajectory_diverged",
            Error::Diverged { .. } => "diverged",
            Error::Config(_) => "config",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Format(_) => "format",
            Error::Truncated { .. } => "truncated",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
