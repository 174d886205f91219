use std::fmt;

use multiverse::corpus::CorpusError;
use multiverse::features::FeatureError;
use multiverse::model::ModelError;
use multiverse::pipeline::{ConfigError, PipelineError};
use multiverse::report::ReportError;
use multiverse::similarity::SimilarityError;
use multiverse::study::StudyError;

/// Exit code 1 for `Validation`, 2 for `Runtime`.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

pub fn invalid(m: impl fmt::Display) -> CliError {
    CliError::Validation(m.to_string())
}

pub fn runtime(m: impl fmt::Display) -> CliError {
    CliError::Runtime(m.to_string())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        invalid(e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            other => runtime(other),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::SchemaViolation { .. }
            | CorpusError::TooSmall { .. }
            | CorpusError::InvalidSplit(_)
            | CorpusError::UnreadableFile { .. } => invalid(e),
            other => runtime(other),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::UnknownBlock(_) => invalid(e),
            other => runtime(other),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::SchemaMismatch(_) | ModelError::UnsupportedVersion(_) => {
                invalid(e)
            }
            ModelError::Features(f) => f.into(),
            other => runtime(other),
        }
    }
}

impl From<SimilarityError> for CliError {
    fn from(e: SimilarityError) -> Self {
        match e {
            SimilarityError::EmptyGold | SimilarityError::DegenerateGold => invalid(e),
            other => runtime(other),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::InvalidK => invalid(e),
            other => runtime(other),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::InfeasiblePlan { .. } | StudyError::Invalid(_) | StudyError::UnknownAnnotator(_) => invalid(e),
            other => runtime(other),
        }
    }
}
