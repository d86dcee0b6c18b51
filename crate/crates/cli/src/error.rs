//! Command errors and their process exit codes.
//!
//! Codes are a stable contract: 0 success, 2 configuration or schema error,
//! 3 leakage violation, 4 validation or fit failure, 5 internal error.

use std::path::PathBuf;

use cohortlab_core::archetype::ArchetypeError;
use cohortlab_core::curriculum::CurriculumError;
use cohortlab_core::dml::DmlError;
use cohortlab_core::policy::{ExperimentError, PolicyError};
use cohortlab_core::sim::SimError;
use cohortlab_core::temporal::{DatasetError, TemporalError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{file}: {} schema error(s)\n  {}", .errors.len(), .errors.join("\n  "))]
    Schema { file: String, errors: Vec<String> },
    #[error(transparent)]
    Leakage(TemporalError),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("fingerprint mismatch for {artifact}: manifest records {expected}, found {found}")]
    FingerprintMismatch { artifact: String, expected: String, found: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: Box<CliError> },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema { .. } => 2,
            CliError::Leakage(_) => 3,
            CliError::Validation(_) | CliError::MissingArtifact(_) | CliError::FingerprintMismatch { .. } => 4,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Internal(_) => 5,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        CliError::Stage { stage, source: Box::new(self) }
    }

    /// The innermost error below any stage labels.
    pub fn root(&self) -> &CliError {
        match self {
            CliError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Config(format!("{}: file not found", path.display()))
        } else {
            CliError::Internal(format!("{}: {e}", path.display()))
        }
    }

    pub fn dataset(file: impl Into<String>, errors: Vec<DatasetError>) -> Self {
        CliError::Schema { file: file.into(), errors: errors.iter().map(ToString::to_string).collect() }
    }
}

impl From<TemporalError> for CliError {
    fn from(e: TemporalError) -> Self {
        match e {
            TemporalError::LeakageViolation { .. } => CliError::Leakage(e),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<CurriculumError> for CliError {
    fn from(e: CurriculumError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::HorizonMismatch { .. } => CliError::Validation(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ArchetypeError> for CliError {
    fn from(e: ArchetypeError) -> Self {
        match e {
            ArchetypeError::Leakage(t) => t.into(),
            ArchetypeError::DegenerateInput(_) => CliError::Validation(e.to_string()),
            ArchetypeError::InvalidConfig(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<DmlError> for CliError {
    fn from(e: DmlError) -> Self {
        match e {
            DmlError::Leakage(t) => t.into(),
            DmlError::InsufficientData { .. } | DmlError::ZeroTreatmentVariation | DmlError::SingularSystem => {
                CliError::Validation(e.to_string())
            }
            DmlError::InvalidSpec(_) | DmlError::MissingGroup(_) => CliError::Config(e.to_string()),
            DmlError::Group { group, source } => match CliError::from(*source) {
                CliError::Validation(m) => CliError::Validation(format!("group {group}: {m}")),
                CliError::Config(m) => CliError::Config(format!("group {group}: {m}")),
                other => other,
            },
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Simulation { cell, source } => match CliError::from(source) {
                CliError::Validation(m) => CliError::Validation(format!("cell {cell}: {m}")),
                CliError::Config(m) => CliError::Config(format!("cell {cell}: {m}")),
                other => other,
            },
            other => CliError::Config(other.to_string()),
        }
    }
}
