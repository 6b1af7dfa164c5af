//! Generative data augmentation for binary text classification.
//!
//! The crate covers the whole workflow: ingesting labeled corpora
//! ([`corpus`]), training class-conditional n-gram generators and sampling
//! from them ([`langmodel`]), scoring and selecting synthetic sequences
//! ([`filter`]), training a CNN-GRU detector from scratch ([`detector`]),
//! and measuring the outcome ([`metrics`], [`pipeline`]).

pub mod corpus;
pub mod detector;
pub mod filter;
pub mod langmodel;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod seed;

pub use corpus::{Dataset, Label, LabeledExample, SplitDataset, Vocabulary};
pub use detector::{DetectorConfig, DetectorModel, TrainConfig};
pub use filter::{FilterClassifier, SelectionConfig, StagedTrainingPlan};
pub use langmodel::{GeneratedCorpus, GenerativeLM, SamplerConfig};
