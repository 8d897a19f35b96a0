//! Error classification for exit codes: 1 usage, 2 data, 3 numerical.

use sdid_core::{EstimatorError, InferenceError, ModelError, PretrendsError, SimlabError};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::RankDeficient { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Estimator(inner) => inner.into(),
            InferenceError::InvalidLevel(_) | InferenceError::NoReplicates => {
                CliError::Usage(e.to_string())
            }
            InferenceError::GroupTooSmall { .. } => CliError::Data(e.to_string()),
            InferenceError::Dist(_)
            | InferenceError::InvalidSe(_)
            | InferenceError::DegenerateSe
            | InferenceError::TooManyFailedReplicates { .. }
            | InferenceError::StratifiedRequiresCategorical => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<PretrendsError> for CliError {
    fn from(e: PretrendsError) -> Self {
        match e {
            PretrendsError::InvalidAlpha(_) | PretrendsError::BasePeriodNotPre { .. } => {
                CliError::Usage(e.to_string())
            }
            PretrendsError::DegenerateSe(_, _) | PretrendsError::Dist(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimlabError> for CliError {
    fn from(e: SimlabError) -> Self {
        match e {
            SimlabError::Inference(inner) => inner.into(),
            SimlabError::TooManyFailedReps { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
