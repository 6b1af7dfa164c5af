//! Synthetic two-dataset benchmark for the cross-dataset augmentation
//! effect.
//!
//! Hate texts in every dataset carry one shared marker token plus a few
//! topical hate tokens that belong to that dataset alone. Within a dataset
//! both cues are perfectly predictive; across datasets only the markers
//! survive, so cross-dataset recall measures how much a detector relies on
//! them.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, Arm, ExperimentPlan, GeneratedPair, Mode, ReportRow, RunReport};
use super::generation::{run_generation, GenerationPlan, LmParams};
use super::PipelineError;
use crate::corpus::{split_dataset, Dataset, Label, LabeledExample};
use crate::detector::{DetectorConfig, TrainConfig};
use crate::filter::SelectionConfig;
use crate::seed::{derive_seed, rng_from_seed};

pub const MARKERS: usize = 6;
pub const TOPICAL_HATE: usize = 10;
pub const TOPICAL_NEUTRAL: usize = 20;
pub const FILLERS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub examples_per_dataset: usize,
    pub hate_fraction: f64,
    /// Topical hate tokens per hate text, inclusive range.
    pub topical_per_hate: (usize, usize),
    /// Probability that a non-hate text carries a marker.
    pub marker_noise: f64,
    pub split_ratio: f64,
    pub count: usize,
    pub top_k: usize,
    pub lm: LmParams,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            examples_per_dataset: 1000,
            hate_fraction: 0.25,
            topical_per_hate: (1, 3),
            marker_noise: 0.03,
            split_ratio: 0.8,
            count: 20_000,
            top_k: 2_000,
            lm: LmParams { order: 1, alpha: 0.01, min_count: 1 },
            detector: DetectorConfig {
                embed_dim: 32,
                dropout: 0.3,
                filters: 32,
                kernel: 3,
                pool: 2,
                hidden: 32,
                max_len: 16,
                ..DetectorConfig::default()
            },
            train: TrainConfig { learning_rate: 5e-3, max_epochs: 30, patience: 3, ..TrainConfig::default() },
        }
    }
}

/// One synthetic dataset. `prefix` keeps its topical tokens disjoint from
/// other datasets.
pub fn synthetic_dataset(name: &str, prefix: char, cfg: &BenchmarkConfig, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let examples = (0..cfg.examples_per_dataset)
        .map(|_| {
            let hate = rng.random_bool(cfg.hate_fraction);
            let len = rng.random_range(6..=10);
            let mut words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        format!("f{}", rng.random_range(0..FILLERS))
                    } else {
                        format!("{prefix}n{}", rng.random_range(0..TOPICAL_NEUTRAL))
                    }
                })
                .collect();
            let mut slots: Vec<usize> = (0..len).collect();
            let mut place = |w: String, rng: &mut rand_chacha::ChaCha8Rng| {
                let k = rng.random_range(0..slots.len());
                words[slots.swap_remove(k)] = w;
            };
            if hate {
                let (lo, hi) = cfg.topical_per_hate;
                for _ in 0..rng.random_range(lo..=hi) {
                    let w = format!("{prefix}h{}", rng.random_range(0..TOPICAL_HATE));
                    place(w, &mut rng);
                }
            }
            if hate || rng.random_bool(cfg.marker_noise) {
                let w = format!("mk{}", rng.random_range(0..MARKERS));
                place(w, &mut rng);
            }
            let label = if hate { Label::Hate } else { Label::NonHate };
            LabeledExample::new(words.join(" "), label, name)
        })
        .collect();
    Dataset::new(name, examples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub seed: u64,
    pub baseline: ReportRow,
    pub augmented: ReportRow,
    pub report: RunReport,
    pub generation_logs: Vec<String>,
}

/// Generates augmentation data from dataset A's training side, trains the
/// detector on A with and without it, and tests both on B's test side.
pub fn run_directional_benchmark(cfg: &BenchmarkConfig, seed: u64, jobs: usize) -> Result<BenchmarkOutcome, PipelineError> {
    let a = synthetic_dataset("A", 'a', cfg, derive_seed(seed, "dataset/A"));
    let b = synthetic_dataset("B", 'b', cfg, derive_seed(seed, "dataset/B"));
    let splits = vec![
        split_dataset(&a, cfg.split_ratio, derive_seed(seed, "split/A"))?,
        split_dataset(&b, cfg.split_ratio, derive_seed(seed, "split/B"))?,
    ];
    let gen_plan = GenerationPlan {
        dataset: "A".into(),
        hate_lm: cfg.lm.clone(),
        non_hate_lm: cfg.lm.clone(),
        count: cfg.count,
        selection: SelectionConfig { threshold: 0.7, top_k: cfg.top_k },
        filter_datasets: vec!["A".into(), "B".into()],
        seed: derive_seed(seed, "generation"),
        ..GenerationPlan::default()
    };
    let out = run_generation(&gen_plan, &splits, None, jobs)?;
    let generated = BTreeMap::from([("A".to_string(), GeneratedPair { hate: out.hate, non_hate: out.non_hate })]);
    let plan = ExperimentPlan {
        mode: Mode::Cross,
        datasets: vec!["A".into(), "B".into()],
        include_combined: false,
        cross_pairs: Some(vec![("A".into(), "B".into())]),
        detector: cfg.detector.clone(),
        train: cfg.train.clone(),
        injection_cap: cfg.top_k,
        seed: derive_seed(seed, "experiment"),
        ..ExperimentPlan::default()
    };
    let report = run_experiment(&plan, &splits, &generated, None, jobs)?;
    let row = |arm| report.row("A", "B", arm).cloned().expect("cross cell evaluated");
    Ok(BenchmarkOutcome {
        seed,
        baseline: row(Arm::Baseline),
        augmented: row(Arm::Augmented),
        generation_logs: out.logs,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datasets_share_only_markers_and_fillers() {
        let cfg = BenchmarkConfig::default();
        let a = synthetic_dataset("A", 'a', &cfg, 1);
        let b = synthetic_dataset("B", 'b', &cfg, 2);
        assert_eq!(a.len(), 1000);
        let frac = a.count(Label::Hate) as f64 / a.len() as f64;
        assert!((0.18..0.32).contains(&frac), "{frac}");
        let vocab = |d: &Dataset| d.token_sequences().flatten().collect::<std::collections::BTreeSet<_>>();
        let (va, vb) = (vocab(&a), vocab(&b));
        assert!(va.intersection(&vb).all(|t| t.starts_with("mk") || t.starts_with('f')));
        assert_eq!(synthetic_dataset("A", 'a', &cfg, 1), a);
        assert!(a.examples.iter().filter(|e| e.label == Label::Hate).all(|e| e.text.contains("mk")));
    }
}
