//! End-to-end experiments: skewed buffers, selector training, deployment,
//! multi-seed aggregation and report emission.

mod buffer;
mod experiment;
mod report;
mod skew;

use std::path::PathBuf;

use thiserror::Error;

pub use buffer::{collect_buffer, deploy, majority_vote, train_selector, OutcomeSource, ReplayBuffer, Selection};
pub use experiment::{run_experiment, BanditMode, ExperimentConfig, Scenario};
pub use report::{emit_report, LearnerSummary, OutputFormat, Panel, ResultsReport, RunRecord, SeedFailure};
pub use skew::{builtin_skew, builtin_skews, validate_skew, PairSampler, SkewReport, SkewSpec, SKEW_MASS};

use crate::bandit_env::EnvError;
use crate::candidates::CandidateError;
use crate::learners::LearnerError;
use crate::predprey::PredPreyError;
use crate::table::{ArmId, InstanceId, TableError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("skew {name:?}: {message}")]
    InvalidSkew { name: String, message: String },

    #[error("skew {skew:?} puts no mass on arm {}", .arm.0)]
    ZeroArmMass { skew: String, arm: ArmId },

    #[error("skew {skew:?} never samples instance {} with arm {}", .instance.0, .arm.0)]
    UncoveredPair { skew: String, instance: InstanceId, arm: ArmId },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("invalid experiment config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Table(#[from] TableError),

    #[error(transparent)]
    Env(#[from] EnvError),

    #[error(transparent)]
    Learner(#[from] LearnerError),

    #[error(transparent)]
    Candidate(#[from] CandidateError),

    #[error(transparent)]
    PredPrey(#[from] PredPreyError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::InvalidSkew { .. } => "invalid_skew",
            HarnessError::ZeroArmMass { .. } | HarnessError::UncoveredPair { .. } => "coverage",
            HarnessError::EmptyBuffer => "empty_buffer",
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Json(_) => "json",
            HarnessError::Table(_) => "table",
            HarnessError::Env(_) => "environment",
            HarnessError::Learner(_) => "learner",
            HarnessError::Candidate(CandidateError::ConvergenceFailure { .. }) => "convergence_failure",
            HarnessError::Candidate(_) => "candidate",
            HarnessError::PredPrey(_) => "predprey",
        }
    }
}
