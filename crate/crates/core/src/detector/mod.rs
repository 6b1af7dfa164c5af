//! CNN-GRU hate-speech detector trained from scratch.

mod checkpoint;
pub mod network;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, CorpusError, Label, Vocabulary, PAD};

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use network::{Gradients, Params};
pub use train::{evaluate_loss, train_detector, write_history_csv, AdamState, EpochRecord, TrainConfig, TrainingHistory};

/// Decision threshold used for headline results.
pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("token id {id} is outside the vocabulary of size {vocab_size}")]
    TokenIdOutOfRange { id: u32, vocab_size: usize },
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error("training corpus {0} must contain both classes")]
    SingleClassCorpus(String),
    #[error("non-finite parameter after step {0}")]
    NonFinite(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub hidden: usize,
    pub max_len: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            vocab_size: 0,
            embed_dim: 300,
            dropout: 0.3,
            filters: 100,
            kernel: 4,
            pool: 4,
            hidden: 100,
            max_len: 30,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::InvalidConfig(m));
        if [self.vocab_size, self.embed_dim, self.filters, self.kernel, self.pool, self.hidden, self.max_len].contains(&0) {
            return bad(format!("all sizes must be positive: {self:?}"));
        }
        if self.kernel > self.max_len {
            return bad(format!("kernel {} exceeds max length {}", self.kernel, self.max_len));
        }
        if self.pool > self.conv_frames() {
            return bad(format!("pool {} exceeds the {} convolution frames", self.pool, self.conv_frames()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Frames after the valid convolution.
    pub fn conv_frames(&self) -> usize {
        self.max_len + 1 - self.kernel
    }

    /// GRU steps after pooling.
    pub fn gru_steps(&self) -> usize {
        self.conv_frames() / self.pool
    }
}

/// Detector parameters together with their vocabulary and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    pub config: DetectorConfig,
    pub vocab: Vocabulary,
    pub params: Params,
    pub adam: AdamState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub posterior: f64,
    pub threshold: f64,
    pub label: Label,
}

impl DetectorModel {
    /// Fresh model with initialized weights; `config.vocab_size` is taken
    /// from `vocab`.
    pub fn new(config: DetectorConfig, vocab: Vocabulary, seed: u64) -> Result<Self, DetectorError> {
        let config = DetectorConfig {
            vocab_size: vocab.len(),
            ..config
        };
        config.validate()?;
        let params = Params::init(&config, seed);
        let adam = AdamState::new(&params);
        Ok(DetectorModel {
            config,
            vocab,
            params,
            adam,
        })
    }

    /// Token ids for `text`, right-padded with `PAD` or truncated.
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        pad_or_truncate(self.vocab.encode(&tokenize(text)), self.config.max_len)
    }

    fn check_ids(&self, ids: &[u32]) -> Result<Vec<u32>, DetectorError> {
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(DetectorError::TokenIdOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(pad_or_truncate(ids.to_vec(), self.config.max_len))
    }

    /// Posterior probability of hate. Dropout is applied only when
    /// `train_mode` is set, with masks drawn from `seed`.
    pub fn forward(&self, token_ids: &[u32], train_mode: bool, seed: u64) -> Result<f64, DetectorError> {
        let ids = self.check_ids(token_ids)?;
        Ok(network::forward(&self.params, &self.config, &ids, train_mode, seed).prob)
    }

    pub fn posterior(&self, text: &str) -> f64 {
        network::forward(&self.params, &self.config, &self.encode_text(text), false, 0).prob
    }

    /// Labels `token_ids` hate iff the posterior is strictly above `threshold`.
    pub fn classify(&self, token_ids: &[u32], threshold: f64) -> Result<Prediction, DetectorError> {
        Ok(Prediction::from_posterior(self.forward(token_ids, false, 0)?, threshold))
    }

    pub fn classify_text(&self, text: &str, threshold: f64) -> Prediction {
        Prediction::from_posterior(self.posterior(text), threshold)
    }
}

impl Prediction {
    pub fn from_posterior(posterior: f64, threshold: f64) -> Self {
        Prediction {
            posterior,
            threshold,
            label: if posterior > threshold { Label::Hate } else { Label::NonHate },
        }
    }
}

pub fn pad_or_truncate(mut ids: Vec<u32>, len: usize) -> Vec<u32> {
    ids.resize(len, PAD);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vocab(n: usize) -> Vocabulary {
        Vocabulary::from_tokens((0..n).map(|i| format!("t{i}")).collect(), 1)
    }

    #[test]
    fn default_shapes_follow_layer_arithmetic() {
        let c = DetectorConfig {
            vocab_size: 50,
            ..DetectorConfig::default()
        };
        assert_eq!(c.conv_frames(), 27);
        assert_eq!(c.gru_steps(), 6);
        let m = DetectorModel::new(c, tiny_vocab(46), 1).unwrap();
        assert_eq!(m.params.conv_w.len(), 100 * 4 * 300);
        assert_eq!(m.params.u_z.len(), 100 * 100);
        let p = m.forward(&[4, 5, 6], false, 0).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn all_pad_input_is_a_valid_probability() {
        let m = DetectorModel::new(DetectorConfig::default(), tiny_vocab(10), 3).unwrap();
        let p = m.forward(&[PAD; 30], true, 9).unwrap();
        assert!(p.is_finite() && p > 0.0 && p < 1.0);
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let m = DetectorModel::new(DetectorConfig::default(), tiny_vocab(10), 3).unwrap();
        assert!(matches!(
            m.forward(&[99], false, 0),
            Err(DetectorError::TokenIdOutOfRange { id: 99, .. })
        ));
    }

    #[test]
    fn strict_threshold_rule() {
        assert_eq!(Prediction::from_posterior(0.71, DEFAULT_THRESHOLD).label, Label::Hate);
        assert_eq!(Prediction::from_posterior(0.70, DEFAULT_THRESHOLD).label, Label::NonHate);
        assert_eq!(DEFAULT_THRESHOLD, 0.7);
    }

    #[test]
    fn invalid_configs() {
        let base = DetectorConfig {
            vocab_size: 10,
            ..DetectorConfig::default()
        };
        assert!(DetectorConfig { kernel: 31, ..base.clone() }.validate().is_err());
        assert!(DetectorConfig { pool: 28, ..base.clone() }.validate().is_err());
        assert!(DetectorConfig { hidden: 0, ..base.clone() }.validate().is_err());
        assert!(DetectorConfig { dropout: 1.0, ..base.clone() }.validate().is_err());
        assert!(base.validate().is_ok());
    }
}
