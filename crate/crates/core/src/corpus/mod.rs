//! Labeled corpora: loading, normalization, tokenization, vocabularies and
//! seed-keyed splitting/recombination.

mod io;
mod text;
mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_from_seed;

pub use io::{load_dataset, write_csv, write_dataset, write_jsonl, DatasetFormat, Loaded};
pub use text::{preprocess, tokenize, MAX_LETTER_RUN};
pub use vocab::{Vocabulary, BOS, EOS, NUM_SPECIALS, PAD, SPECIAL_TOKENS, UNK};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("unknown label {value:?} at line {line}")]
    UnknownLabel { value: String, line: u64 },
    #[error("dataset {name} has {len} examples; at least 2 are needed to split")]
    DatasetTooSmall { name: String, len: usize },
    #[error("split ratio {0} is outside (0, 1)")]
    InvalidRatio(f64),
    #[error("not enough non-hate examples: needed {needed}, available {available}")]
    NotEnoughNonHate { needed: usize, available: usize },
    #[error("duplicate dataset name {0}")]
    DuplicateName(String),
    #[error("test-side example from {source_name} reached {stage}")]
    TestLeakage { source_name: String, stage: &'static str },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Binary class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Hate,
    NonHate,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Hate, Label::NonHate];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Hate => "hate",
            Label::NonHate => "non-hate",
        }
    }

    /// 1.0 for hate, 0.0 otherwise; the detector's positive class.
    pub fn target(self) -> f64 {
        match self {
            Label::Hate => 1.0,
            Label::NonHate => 0.0,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Hate => Label::NonHate,
            Label::NonHate => Label::Hate,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hate" => Ok(Label::Hate),
            "non-hate" => Ok(Label::NonHate),
            other => Err(other.to_owned()),
        }
    }
}

/// Which side of a train/test split an example came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Unsplit,
    Train,
    Test,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Unsplit => "unsplit",
            Side::Train => "train",
            Side::Test => "test",
        }
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" | "unsplit" => Ok(Side::Unsplit),
            "train" => Ok(Side::Train),
            "test" => Ok(Side::Test),
            other => Err(other.to_owned()),
        }
    }
}

/// Where an example came from. Every stage that must only see training data
/// checks `split` before reading.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub split: Side,
    pub generated: bool,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: Label,
    pub provenance: Provenance,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: Label, source: &str) -> Self {
        LabeledExample {
            text: text.into(),
            label,
            provenance: Provenance {
                source: source.to_owned(),
                ..Provenance::default()
            },
        }
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<LabeledExample>) -> Self {
        Dataset {
            name: name.into(),
            examples,
        }
    }

    /// Builds a dataset from `(text, label)` pairs, normalizing each text and
    /// dropping the ones that normalize to nothing.
    pub fn from_pairs<S: AsRef<str>>(name: &str, pairs: impl IntoIterator<Item = (S, Label)>) -> Self {
        let examples = pairs
            .into_iter()
            .filter_map(|(t, l)| {
                let text = preprocess(t.as_ref());
                (!text.is_empty()).then(|| LabeledExample::new(text, l, name))
            })
            .collect();
        Dataset::new(name, examples)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    pub fn has_both_classes(&self) -> bool {
        self.count(Label::Hate) > 0 && self.count(Label::NonHate) > 0
    }

    pub fn token_sequences(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.examples.iter().map(LabeledExample::tokens)
    }

    /// Fails if any example is tagged as test-side data.
    pub fn ensure_no_test_side(&self, stage: &'static str) -> Result<(), CorpusError> {
        match self.examples.iter().find(|e| e.provenance.split == Side::Test) {
            Some(e) => Err(CorpusError::TestLeakage {
                source_name: e.provenance.source.clone(),
                stage,
            }),
            None => Ok(()),
        }
    }

    /// Tags every example with `side`.
    pub fn with_side(mut self, side: Side) -> Self {
        for e in &mut self.examples {
            e.provenance.split = side;
        }
        self
    }
}

/// Named datasets with unique names.
#[derive(Clone, Debug, Default)]
pub struct CorpusCollection {
    datasets: Vec<Dataset>,
}

impl CorpusCollection {
    pub fn insert(&mut self, d: Dataset) -> Result<(), CorpusError> {
        if self.get(&d.name).is_some() {
            return Err(CorpusError::DuplicateName(d.name));
        }
        self.datasets.push(d);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Dataset> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Dataset> {
        self.datasets.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub ratio: f64,
}

impl SplitDataset {
    pub fn name(&self) -> &str {
        &self.train.name
    }
}

/// Seed-keyed random train/test partition; `floor(ratio * len)` examples go
/// to the training side.
pub fn split_dataset(d: &Dataset, ratio: f64, seed: u64) -> Result<SplitDataset, CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    if d.len() < 2 {
        return Err(CorpusError::DatasetTooSmall {
            name: d.name.clone(),
            len: d.len(),
        });
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_train = ((ratio * d.len() as f64) + 1e-9).floor() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| d.examples[i].clone()).collect::<Vec<_>>();
    Ok(SplitDataset {
        train: Dataset::new(d.name.clone(), pick(&order[..n_train])).with_side(Side::Train),
        test: Dataset::new(d.name.clone(), pick(&order[n_train..])).with_side(Side::Test),
        seed,
        ratio,
    })
}

/// Order-preserving filter on one class.
pub fn class_subset(d: &Dataset, label: Label) -> Dataset {
    Dataset::new(
        format!("{}.{}", d.name, label),
        d.examples.iter().filter(|e| e.label == label).cloned().collect(),
    )
}

/// All hate training examples of every split plus an equally sized,
/// seed-keyed sample of their non-hate training examples, shuffled.
pub fn balanced_combined(datasets: &[SplitDataset], seed: u64) -> Result<Dataset, CorpusError> {
    let mut hate = Vec::new();
    let mut non_hate = Vec::new();
    for s in datasets {
        s.train.ensure_no_test_side("balanced_combined")?;
        for e in &s.train.examples {
            match e.label {
                Label::Hate => hate.push(e.clone()),
                Label::NonHate => non_hate.push(e.clone()),
            }
        }
    }
    if non_hate.len() < hate.len() {
        return Err(CorpusError::NotEnoughNonHate {
            needed: hate.len(),
            available: non_hate.len(),
        });
    }
    let mut rng = rng_from_seed(seed);
    non_hate.shuffle(&mut rng);
    non_hate.truncate(hate.len());
    let mut out = hate;
    out.append(&mut non_hate);
    out.shuffle(&mut rng);
    Ok(Dataset::new("combined.balanced", out))
}
