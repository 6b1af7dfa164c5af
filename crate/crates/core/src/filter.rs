//! Sequence filtering: a log-linear bag-of-tokens classifier trained in
//! stages, and confidence-threshold / top-k selection of generated corpora.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, CorpusError, Dataset, Label, Vocabulary};
use crate::langmodel::GeneratedCorpus;
use crate::parallel::with_jobs;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("target corpus {0} must contain both classes")]
    SingleClassCorpus(String),
    #[error("invalid stage parameters: {0}")]
    InvalidStage(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            epochs: 200,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// Optional pretraining on a related corpus, then training on the target
/// corpus; weights carry over between stages.
#[derive(Clone, Debug)]
pub struct StagedTrainingPlan {
    pub pretrain: Option<Dataset>,
    pub target: Dataset,
    pub pretrain_stage: StageParams,
    pub target_stage: StageParams,
    pub seed: u64,
}

impl StagedTrainingPlan {
    pub fn new(target: Dataset) -> Self {
        StagedTrainingPlan {
            pretrain: None,
            target,
            pretrain_stage: StageParams::default(),
            target_stage: StageParams::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub corpus: String,
    /// Loss before the first step, then after every epoch.
    pub losses: Vec<f64>,
    /// Step size actually used in each epoch after backtracking.
    pub step_sizes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterClassifier {
    vocab: Vocabulary,
    weights: Vec<f64>,
    bias: f64,
    history: Vec<StageRecord>,
    seed: u64,
}

type Features = Vec<(u32, f64)>;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Token counts scaled to unit Euclidean norm.
fn featurize(vocab: &Vocabulary, tokens: &[impl AsRef<str>]) -> Features {
    let mut ids = vocab.encode(tokens);
    ids.sort_unstable();
    let mut out: Features = Vec::new();
    for id in ids {
        match out.last_mut() {
            Some((last, c)) if *last == id => *c += 1.0,
            _ => out.push((id, 1.0)),
        }
    }
    let norm = out.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    for (_, c) in &mut out {
        *c /= norm;
    }
    out
}

fn linear(weights: &[f64], bias: f64, x: &Features) -> f64 {
    bias + x.iter().map(|&(i, c)| weights[i as usize] * c).sum::<f64>()
}

/// Mean logistic loss plus `l2/2 * |w|^2`, and its gradient.
fn loss_and_gradient(weights: &[f64], bias: f64, data: &[(Features, f64)], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    for (x, y) in data {
        let z = linear(weights, bias, x);
        loss += softplus(z) - y * z;
        let r = (sigmoid(z) - y) / n;
        grad_b += r;
        for &(i, c) in x {
            grad[i as usize] += r * c;
        }
    }
    loss /= n;
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2 * w;
    }
    (loss, grad, grad_b)
}

fn loss_only(weights: &[f64], bias: f64, data: &[(Features, f64)], l2: f64) -> f64 {
    let n = data.len() as f64;
    let data_loss: f64 = data
        .iter()
        .map(|(x, y)| {
            let z = linear(weights, bias, x);
            softplus(z) - y * z
        })
        .sum();
    data_loss / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Full-batch gradient descent with backtracking: each epoch tries twice the
/// last accepted step and halves it until the objective does not go up.
fn run_stage(weights: &mut [f64], bias: &mut f64, data: &[(Features, f64)], p: &StageParams, name: &str, corpus: &str) -> StageRecord {
    let (mut loss, mut grad, mut grad_b) = loss_and_gradient(weights, *bias, data, p.l2);
    let mut record = StageRecord {
        name: name.to_owned(),
        corpus: corpus.to_owned(),
        losses: vec![loss],
        step_sizes: Vec::with_capacity(p.epochs),
    };
    let mut candidate = weights.to_vec();
    let mut next_step = p.learning_rate;
    for _ in 0..p.epochs {
        let mut step = next_step;
        let mut accepted = false;
        for _ in 0..40 {
            for ((c, w), g) in candidate.iter_mut().zip(weights.iter()).zip(&grad) {
                *c = w - step * g;
            }
            let cand_b = *bias - step * grad_b;
            let cand_loss = loss_only(&candidate, cand_b, data, p.l2);
            if cand_loss <= loss {
                weights.copy_from_slice(&candidate);
                *bias = cand_b;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            step = 0.0;
        } else {
            next_step = 2.0 * step;
            (loss, grad, grad_b) = loss_and_gradient(weights, *bias, data, p.l2);
        }
        record.losses.push(loss);
        record.step_sizes.push(step);
    }
    record
}

fn validate_stage(p: &StageParams) -> Result<(), FilterError> {
    if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
        return Err(FilterError::InvalidStage(format!("learning rate {}", p.learning_rate)));
    }
    if !(p.l2 >= 0.0 && p.l2.is_finite()) {
        return Err(FilterError::InvalidStage(format!("l2 {}", p.l2)));
    }
    Ok(())
}

/// Trains the filter: pretrain stage first (when present), then the target
/// stage starting from the pretrained weights.
pub fn train_filter(plan: &StagedTrainingPlan) -> Result<FilterClassifier, FilterError> {
    plan.target.ensure_no_test_side("train_filter")?;
    if !plan.target.has_both_classes() {
        return Err(FilterError::SingleClassCorpus(plan.target.name.clone()));
    }
    validate_stage(&plan.target_stage)?;
    if let Some(pre) = &plan.pretrain {
        pre.ensure_no_test_side("train_filter")?;
        validate_stage(&plan.pretrain_stage)?;
    }
    let vocab = Vocabulary::from_sequences(
        plan.pretrain
            .iter()
            .flat_map(|d| d.token_sequences())
            .chain(plan.target.token_sequences()),
        1,
    );
    let encode = |d: &Dataset| -> Vec<(Features, f64)> {
        d.examples
            .iter()
            .map(|e| (featurize(&vocab, &e.tokens()), e.label.target()))
            .collect()
    };
    let mut weights = vec![0.0; vocab.len()];
    let mut bias = 0.0;
    let mut history = Vec::new();
    if let Some(pre) = plan.pretrain.as_ref().filter(|d| !d.is_empty()) {
        history.push(run_stage(&mut weights, &mut bias, &encode(pre), &plan.pretrain_stage, "pretrain", &pre.name));
    }
    history.push(run_stage(
        &mut weights,
        &mut bias,
        &encode(&plan.target),
        &plan.target_stage,
        "target",
        &plan.target.name,
    ));
    Ok(FilterClassifier {
        vocab,
        weights,
        bias,
        history,
        seed: plan.seed,
    })
}

impl FilterClassifier {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn history(&self) -> &[StageRecord] {
        &self.history
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights[self.vocab.id(token) as usize]
    }

    /// Probability that `tokens` is hate speech.
    pub fn score_sequence<T: AsRef<str>>(&self, tokens: &[T]) -> f64 {
        sigmoid(linear(&self.weights, self.bias, &featurize(&self.vocab, tokens)))
    }

    pub fn score_text(&self, text: &str) -> f64 {
        self.score_sequence(&tokenize(text))
    }

    /// Probability of `label` for `tokens`.
    pub fn confidence<T: AsRef<str>>(&self, tokens: &[T], label: Label) -> f64 {
        let p = self.score_sequence(tokens);
        match label {
            Label::Hate => p,
            Label::NonHate => 1.0 - p,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), FilterError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        if !path.is_file() {
            return Err(CorpusError::MissingFile(path.display().to_string()).into());
        }
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}

/// Confidence threshold and top-k budget. Defaults: 0.7 and 100,000.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub threshold: f64,
    pub top_k: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            threshold: 0.7,
            top_k: 100_000,
        }
    }
}

/// Indices of retained items, best first: drop confidences below the
/// threshold, sort descending (ties by index), keep at most `top_k`.
pub fn select_by_confidence(confidences: &[f64], cfg: &SelectionConfig) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..confidences.len())
        .filter(|&i| confidences[i] >= cfg.threshold)
        .collect();
    kept.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    kept.truncate(cfg.top_k);
    kept
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub index: usize,
    pub text: String,
    pub score: f64,
    pub retained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub target_class: Label,
    pub total: usize,
    pub below_threshold: usize,
    pub over_budget: usize,
    pub retained: usize,
    /// Confidence counts in ten equal-width bins over [0, 1].
    pub histogram: [usize; 10],
    pub warning: Option<String>,
    pub rows: Vec<ScoreRow>,
}

impl SelectionReport {
    /// CSV with columns `index,text,score,retained`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FilterError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| FilterError::Io(std::io::Error::other(e));
        out.write_record(["index", "text", "score", "retained"]).map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.index.to_string(),
                r.text.clone(),
                r.score.to_string(),
                u8::from(r.retained).to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Scores every sequence for `target_class` and keeps the confident ones.
pub fn filter_and_select(
    corpus: &GeneratedCorpus,
    filter: &FilterClassifier,
    target_class: Label,
    cfg: &SelectionConfig,
    jobs: usize,
) -> (GeneratedCorpus, SelectionReport) {
    let confidences: Vec<f64> = with_jobs(jobs, || {
        corpus
            .items
            .par_iter()
            .map(|item| filter.confidence(&item.tokens, target_class))
            .collect()
    });
    let kept = select_by_confidence(&confidences, cfg);

    let mut retained_flag = vec![false; confidences.len()];
    for &i in &kept {
        retained_flag[i] = true;
    }
    let mut histogram = [0usize; 10];
    for &c in &confidences {
        histogram[((c * 10.0) as usize).min(9)] += 1;
    }
    let below = confidences.iter().filter(|&&c| c < cfg.threshold).count();
    let warning = kept.is_empty().then(|| {
        format!(
            "no {} sequence of {} reached confidence {}",
            target_class,
            corpus.source_dataset,
            cfg.threshold
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let report = SelectionReport {
        target_class,
        total: confidences.len(),
        below_threshold: below,
        over_budget: confidences.len() - below - kept.len(),
        retained: kept.len(),
        histogram,
        warning,
        rows: corpus
            .items
            .iter()
            .zip(&confidences)
            .enumerate()
            .map(|(index, (item, &score))| ScoreRow {
                index,
                text: item.text(),
                score,
                retained: retained_flag[index],
            })
            .collect(),
    };
    let items = kept
        .iter()
        .map(|&i| {
            let mut item = corpus.items[i].clone();
            item.confidence = Some(confidences[i]);
            item
        })
        .collect();
    (
        GeneratedCorpus {
            source_dataset: corpus.source_dataset.clone(),
            class_label: corpus.class_label,
            items,
        },
        report,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledExample;
    use crate::langmodel::GeneratedSequence;
    use proptest::prelude::*;

    fn toy_target() -> Dataset {
        let mut ex = Vec::new();
        for i in 0..10 {
            ex.push(LabeledExample::new(format!("vermin word{i} filler"), Label::Hate, "T"));
            ex.push(LabeledExample::new(format!("sunny word{i} filler"), Label::NonHate, "T"));
        }
        Dataset::new("T", ex)
    }

    #[test]
    fn separable_corpus_is_learned() {
        let target = toy_target();
        let f = train_filter(&StagedTrainingPlan::new(target.clone())).unwrap();
        let correct = target
            .examples
            .iter()
            .filter(|e| (f.score_text(&e.text) > 0.5) == (e.label == Label::Hate))
            .count();
        assert_eq!(correct, target.len());
        assert!(f.weight("vermin") > 0.0 && f.weight("sunny") < 0.0);
    }

    #[test]
    fn staged_history_and_single_class() {
        let mut plan = StagedTrainingPlan::new(toy_target());
        plan.pretrain = Some(Dataset::new(
            "SST",
            vec![
                LabeledExample::new("awful film", Label::Hate, "SST"),
                LabeledExample::new("lovely film", Label::NonHate, "SST"),
            ],
        ));
        let f = train_filter(&plan).unwrap();
        let names: Vec<&str> = f.history().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["pretrain", "target"]);

        let hate_only = Dataset::new("H", vec![LabeledExample::new("x", Label::Hate, "H")]);
        assert!(matches!(
            train_filter(&StagedTrainingPlan::new(hate_only)),
            Err(FilterError::SingleClassCorpus(_))
        ));
    }

    #[test]
    fn loss_never_increases() {
        let mut plan = StagedTrainingPlan::new(toy_target());
        plan.target_stage.learning_rate = 5.0;
        let f = train_filter(&plan).unwrap();
        for w in f.history()[0].losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data: Vec<(Features, f64)> = vec![
            (vec![(0, 1.0), (2, 2.0)], 1.0),
            (vec![(1, 1.0)], 0.0),
            (vec![(0, 1.0), (1, 3.0), (2, 1.0)], 1.0),
            (vec![(2, 1.0)], 0.0),
        ];
        let w = vec![0.3, -0.7, 0.2];
        let b = 0.1;
        let l2 = 0.05;
        let (_, g, gb) = loss_and_gradient(&w, b, &data, l2);
        let h = 1e-6;
        for i in 0..w.len() {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (loss_only(&plus, b, &data, l2) - loss_only(&minus, b, &data, l2)) / (2.0 * h);
            assert!((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-12) < 1e-6, "w{i}: {fd} vs {}", g[i]);
        }
        let fd = (loss_only(&w, b + h, &data, l2) - loss_only(&w, b - h, &data, l2)) / (2.0 * h);
        assert!((fd - gb).abs() / fd.abs().max(gb.abs()) < 1e-6);
    }

    fn marker_model() -> FilterClassifier {
        let vocab = Vocabulary::from_sequences([vec!["kill", "hello"]], 1);
        let mut weights = vec![0.0; vocab.len()];
        weights[vocab.id("kill") as usize] = 0.8;
        FilterClassifier {
            vocab,
            weights,
            bias: -0.4,
            history: vec![],
            seed: 0,
        }
    }

    #[test]
    fn score_properties() {
        let f = marker_model();
        let empty: [&str; 0] = [];
        assert!((f.score_sequence(&empty) - sigmoid(-0.4)).abs() < 1e-15);
        let mut prev = f.score_sequence(&["hello"]);
        for n in 1..8 {
            let mut toks = vec!["hello"; 2];
            toks.extend(std::iter::repeat_n("kill", n));
            let s = f.score_sequence(&toks);
            assert!(s > prev && s <= 1.0);
            prev = s;
        }
    }

    fn corpus_of(n: usize) -> GeneratedCorpus {
        GeneratedCorpus {
            source_dataset: "T".into(),
            class_label: Label::Hate,
            items: (0..n)
                .map(|i| GeneratedSequence {
                    tokens: std::iter::repeat_n("kill", i % 5).map(String::from).collect(),
                    seed: i as u64,
                    confidence: None,
                })
                .collect(),
        }
    }

    #[test]
    fn threshold_then_sort_example() {
        let kept = select_by_confidence(&[0.9, 0.8, 0.6], &SelectionConfig { threshold: 0.7, top_k: 2 });
        assert_eq!(kept, vec![0, 1]);
        let kept = select_by_confidence(&[0.6, 0.8, 0.9, 0.8], &SelectionConfig { threshold: 0.7, top_k: 10 });
        assert_eq!(kept, vec![2, 1, 3]);
        assert_eq!(SelectionConfig::default(), SelectionConfig { threshold: 0.7, top_k: 100_000 });
    }

    #[test]
    fn empty_selection_warns() {
        let f = marker_model();
        let cfg = SelectionConfig { threshold: 0.999, top_k: 10 };
        let (out, report) = filter_and_select(&corpus_of(6), &f, Label::Hate, &cfg, 1);
        assert!(out.is_empty());
        assert!(report.warning.is_some());
        assert_eq!(report.below_threshold, 6);
    }

    #[test]
    fn selection_is_idempotent_and_reports_csv() {
        let f = marker_model();
        let cfg = SelectionConfig { threshold: 0.6, top_k: 4 };
        let (once, report) = filter_and_select(&corpus_of(20), &f, Label::Hate, &cfg, 2);
        let (twice, _) = filter_and_select(&once, &f, Label::Hate, &cfg, 1);
        assert_eq!(once, twice);
        assert_eq!(report.retained, once.len());
        assert_eq!(report.total, report.below_threshold + report.over_budget + report.retained);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,text,score,retained\n"));
        assert_eq!(text.lines().count(), 21);
    }

    #[test]
    fn persistence_round_trip() {
        let f = train_filter(&StagedTrainingPlan::new(toy_target())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        f.save(&p).unwrap();
        assert_eq!(FilterClassifier::load(&p).unwrap(), f);
    }

    proptest! {
        #[test]
        fn retained_are_confident_and_sorted(scores in prop::collection::vec(0.0f64..=1.0, 0..50), k in 1usize..60) {
            let cfg = SelectionConfig { threshold: 0.7, top_k: k };
            let kept = select_by_confidence(&scores, &cfg);
            prop_assert!(kept.len() <= k);
            prop_assert!(kept.iter().all(|&i| scores[i] >= 0.7));
            prop_assert!(kept.windows(2).all(|w| scores[w[0]] >= scores[w[1]]));
            let sub: Vec<f64> = kept.iter().map(|&i| scores[i]).collect();
            prop_assert_eq!(select_by_confidence(&sub, &cfg), (0..sub.len()).collect::<Vec<_>>());
        }
    }
}
