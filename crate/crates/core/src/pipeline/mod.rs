//! End-to-end orchestration: generating and filtering synthetic corpora,
//! building augmented training sets, running baseline-versus-augmented
//! experiments, rendering reports and running annotation sessions.

mod annotation;
pub mod benchmark;
mod cache;
mod experiment;
mod generation;
mod report;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::detector::DetectorError;
use crate::filter::FilterError;
use crate::langmodel::LmError;
use crate::metrics::MetricsError;

pub use annotation::{
    annotation_session, Answer, AnswerSource, AnnotationItem, AnnotationReport, PromptAnswers, ReplayAnswers,
};
pub use cache::{content_key, ArtifactCache};
pub use experiment::{
    run_experiment, Arm, ExperimentPlan, GeneratedPair, Mode, PrRecord, ReportRow, RunProvenance, RunReport, Scope,
    PUBLISHED_CROSS_PAIRS,
};
pub use generation::{augment_training_set, run_generation, AugmentedTrainSet, GenerationOutput, GenerationPlan, LmParams};
pub use report::{emit_report, load_report_csv, render_report, ReportFormat};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("missing artifacts, build these first: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("need at least {needed} annotators, got {got}")]
    InsufficientAnnotators { needed: usize, got: usize },
    #[error("incomplete replay file{}: {reason}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    IncompleteReplayFile { line: Option<usize>, reason: String },
    #[error("report is empty")]
    EmptyReport,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
