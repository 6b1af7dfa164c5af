//! Class-conditional n-gram language models.
//!
//! A [`GenerativeLM`] factorizes a sequence's probability autoregressively,
//! `p(x) = Π p(s_i | s_1..s_{i-1})`, truncating the history to the last
//! `order` tokens. Conditionals use additive smoothing over the candidate
//! set (every regular token plus `EOS`, and `UNK` when the training data
//! contained it), so no candidate ever has zero probability.

mod persist;
mod sampling;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::corpus::{CorpusError, Dataset, Label, Vocabulary, BOS, EOS, UNK};

pub use persist::{read_corpus_jsonl, write_corpus_jsonl};
pub use sampling::{draw_index, generate_corpus, sample_sequence, shape_distribution};
pub use sampling::{GeneratedCorpus, GeneratedSequence, SamplerConfig};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("cannot train a language model on an empty corpus")]
    EmptyCorpus,
    #[error("model order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid sampler configuration: {0}")]
    InvalidSampler(String),
    #[error("model file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

/// Additively smoothed order-k n-gram model. Immutable once trained.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeLM {
    vocab: Vocabulary,
    order: usize,
    alpha: f64,
    counts: HashMap<Vec<u32>, ContextCounts>,
    candidates: Vec<u32>,
    /// `position[id]` is the index of `id` in `candidates`, or `u32::MAX`.
    position: Vec<u32>,
    source: String,
    class: Option<Label>,
}

/// Next-token distribution over the model's candidate ids.
#[derive(Clone, Debug, PartialEq)]
pub struct NextDistribution {
    pub ids: Vec<u32>,
    pub probs: Vec<f64>,
}

impl NextDistribution {
    pub fn prob_of(&self, id: u32) -> f64 {
        self.ids
            .binary_search(&id)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }
}

/// Trains an n-gram model on `corpus`, encoding tokens with `vocab`.
pub fn train_lm(corpus: &Dataset, vocab: &Vocabulary, order: usize, alpha: f64) -> Result<GenerativeLM, LmError> {
    corpus.ensure_no_test_side("train_lm")?;
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let sequences: Vec<Vec<u32>> = corpus.token_sequences().map(|t| vocab.encode(&t)).collect();
    let mut lm = GenerativeLM::from_sequences(vocab.clone(), order, alpha, &sequences)?;
    lm.source = corpus.name.clone();
    let first = corpus.examples[0].label;
    if corpus.examples.iter().all(|e| e.label == first) {
        lm.class = Some(first);
    }
    Ok(lm)
}

impl GenerativeLM {
    /// Counts n-grams over already-encoded sequences.
    pub fn from_sequences(vocab: Vocabulary, order: usize, alpha: f64, sequences: &[Vec<u32>]) -> Result<Self, LmError> {
        if order == 0 {
            return Err(LmError::InvalidOrder);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LmError::InvalidAlpha(alpha));
        }
        if sequences.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut counts: HashMap<Vec<u32>, ContextCounts> = HashMap::new();
        let mut saw_unk = false;
        for seq in sequences {
            let mut padded = vec![BOS; order];
            padded.extend_from_slice(seq);
            padded.push(EOS);
            for i in order..padded.len() {
                let next = padded[i];
                saw_unk |= next == UNK;
                let entry = counts.entry(padded[i - order..i].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(next).or_default() += 1;
            }
        }
        Ok(Self::assemble(vocab, order, alpha, counts, saw_unk))
    }

    fn assemble(vocab: Vocabulary, order: usize, alpha: f64, counts: HashMap<Vec<u32>, ContextCounts>, with_unk: bool) -> Self {
        let mut candidates = Vec::with_capacity(vocab.len());
        if with_unk {
            candidates.push(UNK);
        }
        candidates.push(EOS);
        candidates.extend(vocab.regular_ids());
        let mut position = vec![u32::MAX; vocab.len()];
        for (i, &id) in candidates.iter().enumerate() {
            position[id as usize] = i as u32;
        }
        GenerativeLM {
            vocab,
            order,
            alpha,
            counts,
            candidates,
            position,
            source: String::new(),
            class: None,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Candidate next-token ids, ascending.
    pub fn candidates(&self) -> &[u32] {
        &self.candidates
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn class(&self) -> Option<Label> {
        self.class
    }

    pub fn with_metadata(mut self, source: impl Into<String>, class: Option<Label>) -> Self {
        self.source = source.into();
        self.class = class;
        self
    }

    /// Number of distinct contexts observed in training.
    pub fn context_count(&self) -> usize {
        self.counts.len()
    }

    /// Last `order` ids of `prefix`, left-padded with `BOS`.
    fn context(&self, prefix: &[u32]) -> Vec<u32> {
        let take = prefix.len().min(self.order);
        let mut ctx = vec![BOS; self.order - take];
        ctx.extend_from_slice(&prefix[prefix.len() - take..]);
        ctx
    }

    /// Smoothed conditional probabilities, aligned with [`Self::candidates`].
    pub fn next_probs(&self, prefix: &[u32]) -> Vec<f64> {
        let v = self.candidates.len() as f64;
        match self.counts.get(&self.context(prefix)) {
            None => vec![1.0 / v; self.candidates.len()],
            Some(c) => {
                let denom = c.total as f64 + self.alpha * v;
                let mut probs = vec![self.alpha / denom; self.candidates.len()];
                for (&id, &n) in &c.next {
                    let pos = self.position[id as usize];
                    if pos != u32::MAX {
                        probs[pos as usize] = (n as f64 + self.alpha) / denom;
                    }
                }
                probs
            }
        }
    }

    /// Probability of `id` following `prefix`; 0 for non-candidates.
    pub fn conditional(&self, prefix: &[u32], id: u32) -> f64 {
        let pos = match self.position.get(id as usize) {
            Some(&p) if p != u32::MAX => p,
            _ => return 0.0,
        };
        let v = self.candidates.len() as f64;
        match self.counts.get(&self.context(prefix)) {
            None => 1.0 / v,
            Some(c) => {
                let n = c.next.get(&self.candidates[pos as usize]).copied().unwrap_or(0);
                (n as f64 + self.alpha) / (c.total as f64 + self.alpha * v)
            }
        }
    }

    pub fn next_distribution<T: AsRef<str>>(&self, prefix: &[T]) -> NextDistribution {
        NextDistribution {
            ids: self.candidates.clone(),
            probs: self.next_probs(&self.vocab.encode(prefix)),
        }
    }

    /// Natural-log joint probability of `tokens` followed by `EOS`.
    pub fn sequence_log_prob<T: AsRef<str>>(&self, tokens: &[T]) -> f64 {
        self.sequence_log_prob_ids(&self.vocab.encode(tokens))
    }

    pub fn sequence_log_prob_ids(&self, ids: &[u32]) -> f64 {
        self.prefix_log_prob_ids(ids) + self.conditional(ids, EOS).ln()
    }

    /// Natural-log probability of emitting `ids` as the first tokens, with
    /// no statement about what follows.
    pub fn prefix_log_prob_ids(&self, ids: &[u32]) -> f64 {
        (0..ids.len())
            .map(|i| self.conditional(&ids[..i], ids[i]).ln())
            .sum()
    }

    /// Log probability of `ids` under generation capped at `max_tokens`:
    /// a sequence that reaches the cap ends there, so it carries no `EOS`
    /// factor. Summed over every sequence of length `0..=max_tokens` this is
    /// exactly one.
    pub fn capped_sequence_log_prob_ids(&self, ids: &[u32], max_tokens: usize) -> f64 {
        match ids.len().cmp(&max_tokens) {
            std::cmp::Ordering::Less => self.sequence_log_prob_ids(ids),
            std::cmp::Ordering::Equal => self.prefix_log_prob_ids(ids),
            std::cmp::Ordering::Greater => f64::NEG_INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledExample;

    fn corpus(texts: &[&str]) -> Dataset {
        Dataset::new(
            "toy",
            texts.iter().map(|t| LabeledExample::new(*t, Label::Hate, "toy")).collect(),
        )
    }

    fn ab_ac() -> GenerativeLM {
        let d = corpus(&["a b", "a c"]);
        let v = Vocabulary::from_sequences(d.token_sequences(), 1);
        train_lm(&d, &v, 1, 1.0).unwrap()
    }

    #[test]
    fn hand_counted_bigram() {
        let lm = ab_ac();
        // candidates {a, b, c, EOS}; count(a b) = 1, count(a ·) = 2
        assert_eq!(lm.candidates().len(), 4);
        let d = lm.next_distribution(&["a"]);
        let b = lm.vocabulary().id("b");
        assert!((d.prob_of(b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(lm.class(), Some(Label::Hate));
    }

    #[test]
    fn unseen_context_is_uniform() {
        let lm = ab_ac();
        let d = lm.next_distribution(&["c", "c"]);
        let lm2 = {
            let dd = corpus(&["a b", "a c"]);
            let v = Vocabulary::from_sequences(dd.token_sequences(), 1);
            train_lm(&dd, &v, 2, 1.0).unwrap()
        };
        let d2 = lm2.next_distribution(&["c", "c"]);
        assert!(d2.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_prefix_uses_bos_context() {
        let lm = ab_ac();
        let d = lm.next_distribution::<&str>(&[]);
        let a = lm.vocabulary().id("a");
        assert!((d.prob_of(a) - 3.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_log_prob() {
        let lm = ab_ac();
        // P(a|BOS) = 3/6, P(b|a) = 2/6, P(EOS|b) = 2/5
        let expected = (0.5f64).ln() + (1.0f64 / 3.0).ln() + (2.0f64 / 5.0).ln();
        assert!((lm.sequence_log_prob(&["a", "b"]) - expected).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_stepwise_distributions() {
        let lm = ab_ac();
        let seq = ["a", "c", "a"];
        let mut total = 0.0;
        for i in 0..seq.len() {
            let d = lm.next_distribution(&seq[..i]);
            total += d.prob_of(lm.vocabulary().id(seq[i])).ln();
        }
        total += lm.next_distribution(&seq).prob_of(EOS).ln();
        assert!((lm.sequence_log_prob(&seq) - total).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_validated() {
        assert_eq!(ab_ac(), ab_ac());
        let v = Vocabulary::from_sequences([["a"]], 1);
        assert!(matches!(train_lm(&corpus(&[]), &v, 1, 1.0), Err(LmError::EmptyCorpus)));
        assert!(matches!(train_lm(&corpus(&["a"]), &v, 0, 1.0), Err(LmError::InvalidOrder)));
        assert!(matches!(train_lm(&corpus(&["a"]), &v, 1, 0.0), Err(LmError::InvalidAlpha(_))));
    }

    #[test]
    fn unk_becomes_candidate_only_when_observed() {
        let d = corpus(&["a a b"]);
        let v = Vocabulary::from_sequences(d.token_sequences(), 2);
        let lm = train_lm(&d, &v, 1, 0.5).unwrap();
        assert!(lm.candidates().contains(&UNK));
        assert!(lm.sequence_log_prob(&["zzz"]).is_finite());
        assert!(!ab_ac().candidates().contains(&UNK));
    }

    #[test]
    fn every_conditional_is_normalized_and_positive() {
        let d = corpus(&["x y z", "y y x", "z", "x z y x"]);
        let v = Vocabulary::from_sequences(d.token_sequences(), 1);
        let lm = train_lm(&d, &v, 2, 0.1).unwrap();
        for a in ["x", "y", "z"] {
            for b in ["x", "y", "z"] {
                let p = lm.next_distribution(&[a, b]).probs;
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn test_side_data_is_rejected() {
        let mut d = corpus(&["a"]);
        d.examples[0].provenance.split = crate::corpus::Side::Test;
        let v = Vocabulary::from_sequences(d.token_sequences(), 1);
        assert!(matches!(
            train_lm(&d, &v, 1, 1.0),
            Err(LmError::Corpus(CorpusError::TestLeakage { .. }))
        ));
    }
}
