use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{content_key, ArtifactCache};
use super::generation::augment_training_set;
use super::PipelineError;
use crate::corpus::{Dataset, Label, SplitDataset, Vocabulary};
use crate::detector::{read_checkpoint, train_detector, write_checkpoint, DetectorConfig, DetectorModel, TrainConfig, DEFAULT_THRESHOLD};
use crate::langmodel::GeneratedCorpus;
use crate::metrics::{classification_metrics, pr_curve, relative_change, ConfusionMatrix, PrCurve};
use crate::parallel::with_jobs;
use crate::seed::derive_seed;

/// The ten ordered (train, test) pairs of the published cross-dataset table.
pub const PUBLISHED_CROSS_PAIRS: [(&str, &str); 10] = [
    ("FN", "SE"),
    ("FN", "WH"),
    ("DV", "WH"),
    ("DV", "WS"),
    ("SE", "WS"),
    ("SE", "FN"),
    ("WH", "SE"),
    ("WH", "DV"),
    ("WS", "WH"),
    ("WS", "FN"),
];

pub const COMBINED: &str = "combined";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Intra,
    Cross,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Baseline,
    Augmented,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Augmented => "augmented",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Intra,
    Cross,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Intra => "intra",
            Scope::Cross => "cross",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub mode: Mode,
    pub datasets: Vec<String>,
    pub include_combined: bool,
    /// Explicit cross pairs; `None` means every ordered pair of `datasets`.
    pub cross_pairs: Option<Vec<(String, String)>>,
    pub arms: Vec<Arm>,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub threshold: f64,
    /// Generated sequences injected per class in the augmented arm.
    pub injection_cap: usize,
    pub vocab_min_count: u32,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            mode: Mode::Both,
            datasets: Vec::new(),
            include_combined: true,
            cross_pairs: None,
            arms: vec![Arm::Baseline, Arm::Augmented],
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            injection_cap: 100_000,
            vocab_min_count: 1,
            seed: 0,
        }
    }
}

/// Filtered synthetic corpora of one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedPair {
    pub hate: GeneratedCorpus,
    pub non_hate: GeneratedCorpus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scope: Scope,
    pub train_set: String,
    pub test_set: String,
    pub arm: Arm,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Percent change against the matching baseline row (augmented rows
    /// only; `None` when the baseline value is zero).
    pub change_accuracy: Option<f64>,
    pub change_precision: Option<f64>,
    pub change_recall: Option<f64>,
    pub change_f1: Option<f64>,
}

impl ReportRow {
    pub fn metrics(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrRecord {
    pub train_set: String,
    pub test_set: String,
    pub arm: Arm,
    pub curve: PrCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub master_seed: u64,
    pub threshold: f64,
    pub injection_cap: usize,
    pub vocab_min_count: u32,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    /// Detector seed per training set; both arms share it.
    pub detector_seeds: BTreeMap<String, u64>,
    /// Training-set size per `train_set/arm`.
    pub training_sizes: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub pr_curves: Vec<PrRecord>,
    pub provenance: RunProvenance,
}

impl RunReport {
    pub fn row(&self, train_set: &str, test_set: &str, arm: Arm) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.train_set == train_set && r.test_set == test_set && r.arm == arm)
    }
}

struct Cell {
    scope: Scope,
    train: String,
    test: String,
}

fn cells(plan: &ExperimentPlan) -> Result<Vec<Cell>, PipelineError> {
    let mut out = Vec::new();
    if matches!(plan.mode, Mode::Intra | Mode::Both) {
        for d in &plan.datasets {
            out.push(Cell { scope: Scope::Intra, train: d.clone(), test: d.clone() });
        }
        if plan.include_combined {
            out.push(Cell { scope: Scope::Intra, train: COMBINED.into(), test: COMBINED.into() });
        }
    }
    if matches!(plan.mode, Mode::Cross | Mode::Both) {
        let pairs: Vec<(String, String)> = match &plan.cross_pairs {
            Some(p) => p.clone(),
            None => plan
                .datasets
                .iter()
                .flat_map(|a| plan.datasets.iter().filter(move |b| *b != a).map(move |b| (a.clone(), b.clone())))
                .collect(),
        };
        for (a, b) in pairs {
            if a == b {
                return Err(PipelineError::InvalidPlan(format!("cross pair {a}-{b} trains and tests on one dataset")));
            }
            out.push(Cell { scope: Scope::Cross, train: a, test: b });
        }
    }
    if out.is_empty() {
        return Err(PipelineError::InvalidPlan("no experiment cells".into()));
    }
    Ok(out)
}

fn union(name: &str, parts: impl IntoIterator<Item = Dataset>) -> Dataset {
    Dataset::new(name, parts.into_iter().flat_map(|d| d.examples).collect())
}

/// Trains one detector per (training set, arm) and evaluates every cell.
/// Both arms of a training set share the detector seed, so they differ only
/// in training data. Models are cached in `cache` when given.
pub fn run_experiment(
    plan: &ExperimentPlan,
    splits: &[SplitDataset],
    generated: &BTreeMap<String, GeneratedPair>,
    cache: Option<&ArtifactCache>,
    jobs: usize,
) -> Result<RunReport, PipelineError> {
    if plan.arms.is_empty() {
        return Err(PipelineError::InvalidPlan("no arms selected".into()));
    }
    let split = |name: &str| -> Result<&SplitDataset, PipelineError> {
        if !plan.datasets.iter().any(|d| d == name) {
            return Err(PipelineError::UnknownDataset(name.to_owned()));
        }
        splits
            .iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| PipelineError::UnknownDataset(name.to_owned()))
    };
    let cells = cells(plan)?;
    let members = |name: &str| -> Vec<String> {
        if name == COMBINED {
            plan.datasets.clone()
        } else {
            vec![name.to_owned()]
        }
    };

    let mut train_keys: Vec<String> = Vec::new();
    for c in &cells {
        for m in members(&c.train).iter().chain(members(&c.test).iter()) {
            split(m)?;
        }
        if !train_keys.contains(&c.train) {
            train_keys.push(c.train.clone());
        }
    }
    if plan.arms.contains(&Arm::Augmented) {
        let mut missing: Vec<String> = train_keys
            .iter()
            .flat_map(|k| members(k))
            .filter(|m| !generated.contains_key(m))
            .map(|m| format!("generated corpora for {m}"))
            .collect();
        missing.sort();
        missing.dedup();
        if !missing.is_empty() {
            return Err(PipelineError::MissingArtifacts(missing));
        }
    }

    let mut jobs_list: Vec<(String, Arm, Dataset)> = Vec::new();
    for key in &train_keys {
        let base = union(key, members(key).iter().map(|m| split(m).map(|s| s.train.clone())).collect::<Result<Vec<_>, _>>()?);
        for &arm in &plan.arms {
            let data = match arm {
                Arm::Baseline => base.clone(),
                Arm::Augmented => {
                    let mut examples = base.examples.clone();
                    for m in members(key) {
                        let g = &generated[&m];
                        let a = augment_training_set(&Dataset::new(m.clone(), Vec::new()), &g.hate, &g.non_hate, plan.injection_cap)?;
                        examples.extend(a.dataset.examples);
                    }
                    Dataset::new(format!("{key}+generated"), examples)
                }
            };
            jobs_list.push((key.clone(), arm, data));
        }
    }

    let detector_seeds: BTreeMap<String, u64> = train_keys
        .iter()
        .map(|k| (k.clone(), derive_seed(plan.seed, &format!("detector/{k}"))))
        .collect();
    let training_sizes: BTreeMap<String, usize> = jobs_list
        .iter()
        .map(|(k, arm, d)| (format!("{k}/{}", arm.as_str()), d.len()))
        .collect();

    let models: Vec<DetectorModel> = with_jobs(jobs, || {
        jobs_list
            .par_iter()
            .map(|(key, arm, data)| {
                let tcfg = TrainConfig { seed: detector_seeds[key], ..plan.train.clone() };
                train_or_load(data, plan, &tcfg, cache, key, *arm)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let model_for = |key: &str, arm: Arm| -> &DetectorModel {
        let i = jobs_list.iter().position(|(k, a, _)| k == key && *a == arm).expect("model trained");
        &models[i]
    };

    let test_sets: BTreeMap<String, Dataset> = cells
        .iter()
        .map(|c| {
            let parts = members(&c.test).iter().map(|m| split(m).map(|s| s.test.clone())).collect::<Result<Vec<_>, _>>()?;
            Ok((c.test.clone(), union(&c.test, parts)))
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut rows = Vec::new();
    let mut pr_curves = Vec::new();
    for c in &cells {
        let test = &test_sets[&c.test];
        let mut baseline: Option<[f64; 4]> = None;
        for &arm in &plan.arms {
            let model = model_for(&c.train, arm);
            let posteriors: Vec<(f64, Label)> = with_jobs(jobs, || {
                test.examples.par_iter().map(|e| (model.posterior(&e.text), e.label)).collect()
            });
            let cm = ConfusionMatrix::from_pairs(
                posteriors
                    .iter()
                    .map(|&(p, l)| (if p > plan.threshold { Label::Hate } else { Label::NonHate }, l)),
            );
            let m = classification_metrics(&cm)?;
            let values = [m.accuracy, m.precision, m.recall, m.f1];
            let change = |i: usize| baseline.filter(|_| arm == Arm::Augmented).and_then(|b| relative_change(b[i], values[i]).ok());
            rows.push(ReportRow {
                scope: c.scope,
                train_set: c.train.clone(),
                test_set: c.test.clone(),
                arm,
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                change_accuracy: change(0),
                change_precision: change(1),
                change_recall: change(2),
                change_f1: change(3),
            });
            if arm == Arm::Baseline {
                baseline = Some(values);
            }
            if c.scope == Scope::Intra {
                pr_curves.push(PrRecord {
                    train_set: c.train.clone(),
                    test_set: c.test.clone(),
                    arm,
                    curve: pr_curve(&posteriors)?,
                });
            }
        }
    }

    Ok(RunReport {
        rows,
        pr_curves,
        provenance: RunProvenance {
            master_seed: plan.seed,
            threshold: plan.threshold,
            injection_cap: plan.injection_cap,
            vocab_min_count: plan.vocab_min_count,
            detector: plan.detector.clone(),
            train: plan.train.clone(),
            detector_seeds,
            training_sizes,
        },
    })
}

fn train_or_load(
    data: &Dataset,
    plan: &ExperimentPlan,
    tcfg: &TrainConfig,
    cache: Option<&ArtifactCache>,
    key: &str,
    arm: Arm,
) -> Result<DetectorModel, PipelineError> {
    let build = || -> Result<DetectorModel, PipelineError> {
        let vocab = Vocabulary::from_sequences(data.token_sequences(), plan.vocab_min_count);
        // nested parallelism runs inside the caller's bounded pool
        let (model, history) = train_detector(data, &vocab, &plan.detector, tcfg, 0)?;
        log::info!(
            "detector {key}/{}: {} examples, best epoch {} of {}",
            arm.as_str(),
            data.len(),
            history.best_epoch,
            history.epochs.len()
        );
        Ok(model)
    };
    let Some(cache) = cache else {
        return build();
    };
    let ckey = content_key(&[
        serde_json::to_vec(data)?,
        serde_json::to_vec(&plan.detector)?,
        serde_json::to_vec(tcfg)?,
        plan.vocab_min_count.to_le_bytes().to_vec(),
    ]);
    cache.get_or_build(
        "detector",
        &ckey,
        "ckpt",
        |p| Ok(read_checkpoint(BufReader::new(File::open(p)?))?),
        |m, p| Ok(write_checkpoint(m, BufWriter::new(File::create(p)?))?),
        build,
    )
}
