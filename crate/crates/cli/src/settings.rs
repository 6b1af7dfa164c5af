//! Command-line flags, config-file sections and their merge into the
//! effective settings of a run.
//!
//! Precedence is flag, then config file, then built-in default. Flags are
//! `Option`s so an absent flag never masks a config value.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use synthaug::corpus::Label;
use synthaug::detector::{DetectorConfig, TrainConfig};
use synthaug::filter::StageParams;
use synthaug::langmodel::SamplerConfig;
use synthaug::pipeline::{Arm, LmParams, Mode};

#[derive(Debug, Parser)]
#[command(name = "synthaug", version, about = "Generative data augmentation for hate-speech detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Master seed; all randomness derives from it [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that relative paths resolve against [default: .]
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Output does not depend on it [default: 0]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML run manifest; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to standard error
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, normalize and split a labeled dataset into train/test JSONL
    Prepare(PrepareArgs),
    /// Train a class-conditional n-gram generator on one class of a training set
    TrainLm(TrainLmArgs),
    /// Sample a synthetic corpus from a trained generator
    Generate(GenerateArgs),
    /// Train the sequence filter on balanced training data
    TrainFilter(TrainFilterArgs),
    /// Score a generated corpus and keep the confident sequences
    Filter(FilterArgs),
    /// Train the CNN-GRU detector, optionally with generated sequences
    TrainDetector(TrainDetectorArgs),
    /// Evaluate a detector checkpoint on a labeled test set
    Evaluate(EvaluateArgs),
    /// Run baseline-versus-augmented experiments from a manifest
    Experiment(ExperimentArgs),
    /// ROUGE-L similarity of generated corpora to their source data
    Rouge(RougeArgs),
    /// Manual labeling session over generated sequences
    Annotate(AnnotateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::TrainLm(_) => "train-lm",
            Command::Generate(_) => "generate",
            Command::TrainFilter(_) => "train-filter",
            Command::Filter(_) => "filter",
            Command::TrainDetector(_) => "train-detector",
            Command::Evaluate(_) => "evaluate",
            Command::Experiment(_) => "experiment",
            Command::Rouge(_) => "rouge",
            Command::Annotate(_) => "annotate",
        }
    }
}

/// Copies every flag that was given over the matching settings field.
macro_rules! overlay {
    ($dst:expr, $src:expr; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })*
    };
    ($dst:expr, $src:expr; opt $($field:ident),* $(,)?) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field.clone(); })*
    };
}

fn parse_label(s: &str) -> Result<Label, String> {
    s.parse().map_err(|bad| format!("label must be hate or non-hate, got {bad:?}"))
}

// ---- prepare

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Labeled CSV or JSONL file with text and label columns
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Dataset name [default: input file stem]
    #[arg(long)]
    pub name: Option<String>,
    /// csv or jsonl [default: from the file extension]
    #[arg(long)]
    pub format: Option<String>,
    /// Fraction of examples on the training side [default: 0.8]
    #[arg(long)]
    pub split: Option<f64>,
    /// Output directory [default: .]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prepare {
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub name: Option<String>,
    pub format: Option<String>,
    pub split: f64,
    pub out: PathBuf,
}

impl Default for Prepare {
    fn default() -> Self {
        Prepare {
            input: None,
            name: None,
            format: None,
            split: 0.8,
            out: PathBuf::from("."),
        }
    }
}

impl PrepareArgs {
    pub fn apply(&self, s: &mut Prepare) {
        overlay!(s, self; opt input, name, format);
        overlay!(s, self; split, out);
    }
}

// ---- train-lm

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// Training-side JSONL written by `prepare`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Class to model: hate or non-hate [default: hate]
    #[arg(long, value_parser = parse_label)]
    pub class: Option<Label>,
    /// Context length in tokens; 1 is a bigram model [default: 3]
    #[arg(long)]
    pub order: Option<usize>,
    /// Additive smoothing constant [default: 0.1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Minimum token count to enter the vocabulary [default: 1]
    #[arg(long)]
    pub min_count: Option<u32>,
    /// Model file [default: <dataset>.<class>.lm]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainLm {
    pub data: Option<PathBuf>,
    pub class: Label,
    pub lm: LmParams,
    pub out: Option<PathBuf>,
}

impl Default for TrainLm {
    fn default() -> Self {
        TrainLm {
            data: None,
            class: Label::Hate,
            lm: LmParams::default(),
            out: None,
        }
    }
}

impl TrainLmArgs {
    pub fn apply(&self, s: &mut TrainLm) {
        overlay!(s, self; opt data, out);
        overlay!(s, self; class);
        overlay!(s.lm, self; order, alpha, min_count);
    }
}

// ---- generate

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Model file written by `train-lm`
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Sequences to sample [default: 600000]
    #[arg(long)]
    pub count: Option<usize>,
    /// Sampling temperature [default: 0.9]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nucleus mass kept at each step [default: 0.9]
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Maximum tokens per sequence [default: 30]
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Corpus JSONL [default: <dataset>.<class>.generated.jsonl]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generate {
    pub lm: Option<PathBuf>,
    pub count: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub out: Option<PathBuf>,
}

impl Default for Generate {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Generate {
            lm: None,
            count: 600_000,
            temperature: s.temperature,
            top_p: s.top_p,
            max_tokens: s.max_tokens,
            out: None,
        }
    }
}

impl GenerateArgs {
    pub fn apply(&self, s: &mut Generate) {
        overlay!(s, self; opt lm, out);
        overlay!(s, self; count, temperature, top_p, max_tokens);
    }
}

// ---- train-filter

#[derive(Debug, Args)]
pub struct TrainFilterArgs {
    /// Training-side JSONL files; hate examples of all of them plus as many non-hate ones
    #[arg(long, num_args = 1..)]
    pub data: Option<Vec<PathBuf>>,
    /// Optional related labeled corpus trained on first
    #[arg(long)]
    pub pretrain: Option<PathBuf>,
    /// Full-batch epochs per stage [default: 200]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial step size [default: 0.5]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// L2 penalty [default: 0.0001]
    #[arg(long)]
    pub l2: Option<f64>,
    /// Filter model file [default: filter.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFilter {
    pub data: Vec<PathBuf>,
    pub pretrain: Option<PathBuf>,
    pub stage: StageParams,
    pub out: PathBuf,
}

impl Default for TrainFilter {
    fn default() -> Self {
        TrainFilter {
            data: Vec::new(),
            pretrain: None,
            stage: StageParams::default(),
            out: PathBuf::from("filter.json"),
        }
    }
}

impl TrainFilterArgs {
    pub fn apply(&self, s: &mut TrainFilter) {
        overlay!(s, self; opt pretrain);
        overlay!(s, self; data, out);
        overlay!(s.stage, self; epochs, learning_rate, l2);
    }
}

// ---- filter

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Generated corpus JSONL
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Filter model written by `train-filter`
    #[arg(long)]
    pub filter: Option<PathBuf>,
    /// Class whose confidence is thresholded [default: the corpus class]
    #[arg(long, value_parser = parse_label)]
    pub class: Option<Label>,
    /// Confidence threshold τ [default: 0.7]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Maximum sequences kept [default: 100000]
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Selected corpus JSONL [default: <corpus>.filtered.jsonl]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-sequence score CSV
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Filter {
    pub corpus: Option<PathBuf>,
    pub filter: Option<PathBuf>,
    pub class: Option<Label>,
    pub threshold: f64,
    pub top_k: usize,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for Filter {
    fn default() -> Self {
        Filter {
            corpus: None,
            filter: None,
            class: None,
            threshold: 0.7,
            top_k: 100_000,
            out: None,
            report: None,
        }
    }
}

impl FilterArgs {
    pub fn apply(&self, s: &mut Filter) {
        overlay!(s, self; opt corpus, filter, class, out, report);
        overlay!(s, self; threshold, top_k);
    }
}

// ---- detector flags shared by train-detector and experiment

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Embedding width [default: 300]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Convolution filters [default: 100]
    #[arg(long)]
    pub filters: Option<usize>,
    /// Convolution kernel width [default: 4]
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Max-pool width [default: 4]
    #[arg(long)]
    pub pool: Option<usize>,
    /// GRU units [default: 100]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Tokens per input after padding or truncation [default: 30]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Embedding dropout rate [default: 0.3]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Adam step size [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epoch limit [default: 20]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 3]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Share of training data held out for early stopping [default: 0.1]
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

impl DetectorArgs {
    pub fn apply(&self, d: &mut DetectorConfig, t: &mut TrainConfig) {
        overlay!(d, self; embed_dim, filters, kernel, pool, hidden, max_len, dropout);
        overlay!(t, self; learning_rate, batch_size, max_epochs, patience, validation_fraction);
    }
}

// ---- train-detector

#[derive(Debug, Args)]
pub struct TrainDetectorArgs {
    /// Training-side JSONL
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Filtered generated corpora to inject (either class)
    #[arg(long, num_args = 1..)]
    pub generated: Option<Vec<PathBuf>>,
    /// Generated sequences injected per class [default: 100000]
    #[arg(long)]
    pub cap: Option<usize>,
    /// Minimum token count for the detector vocabulary [default: 1]
    #[arg(long)]
    pub min_count: Option<u32>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Checkpoint file [default: detector.ckpt]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainDetector {
    pub data: Option<PathBuf>,
    pub generated: Vec<PathBuf>,
    pub cap: usize,
    pub min_count: u32,
    pub out: PathBuf,
    pub history: Option<PathBuf>,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
}

impl Default for TrainDetector {
    fn default() -> Self {
        TrainDetector {
            data: None,
            generated: Vec::new(),
            cap: 100_000,
            min_count: 1,
            out: PathBuf::from("detector.ckpt"),
            history: None,
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl TrainDetectorArgs {
    pub fn apply(&self, s: &mut TrainDetector) {
        overlay!(s, self; opt data, history);
        overlay!(s, self; generated, cap, min_count, out);
        self.detector.apply(&mut s.detector, &mut s.train);
    }
}

// ---- evaluate

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint written by `train-detector`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test-side JSONL
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Decision threshold τ; hate iff posterior > τ [default: 0.7]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Metrics JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Precision/recall curve CSV
    #[arg(long)]
    pub pr: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluate {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub threshold: f64,
    pub out: Option<PathBuf>,
    pub pr: Option<PathBuf>,
}

impl Default for Evaluate {
    fn default() -> Self {
        Evaluate {
            model: None,
            data: None,
            threshold: 0.7,
            out: None,
            pr: None,
        }
    }
}

impl EvaluateArgs {
    pub fn apply(&self, s: &mut Evaluate) {
        overlay!(s, self; opt model, data, out, pr);
        overlay!(s, self; threshold);
    }
}

// ---- experiment

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub name: String,
    pub train: PathBuf,
    pub test: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub hate: PathBuf,
    pub non_hate: PathBuf,
}

/// Generation settings used for datasets without precomputed corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub lm: LmParams,
    pub sampler: SamplerConfig,
    pub count: usize,
    pub threshold: f64,
    pub top_k: usize,
    pub filter_stage: StageParams,
    pub filter_non_hate: bool,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            lm: LmParams::default(),
            sampler: SamplerConfig::default(),
            count: 600_000,
            threshold: 0.7,
            top_k: 100_000,
            filter_stage: StageParams::default(),
            filter_non_hate: true,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// intra, cross or both [default: both]
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Datasets as NAME=TRAIN.jsonl,TEST.jsonl; replaces the manifest list
    #[arg(long = "dataset", value_parser = parse_dataset)]
    pub datasets: Option<Vec<DatasetPaths>>,
    /// Cross pairs as TRAIN-TEST; default is every ordered pair
    #[arg(long = "pair", value_parser = parse_pair)]
    pub pairs: Option<Vec<(String, String)>>,
    /// Use the ten cross pairs of the published table
    #[arg(long)]
    pub published_pairs: bool,
    /// Skip the combined intra-dataset cell
    #[arg(long)]
    pub no_combined: bool,
    /// Run only the baseline arm
    #[arg(long)]
    pub baseline_only: bool,
    /// Decision threshold τ [default: 0.7]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Generated sequences injected per class and dataset [default: 100000]
    #[arg(long)]
    pub injection_cap: Option<usize>,
    /// Sequences sampled per generator when corpora are built here [default: 600000]
    #[arg(long)]
    pub count: Option<usize>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Report path; the extension of each format replaces its own [default: report.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report formats: csv, json, md [default: csv,md]
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<String>>,
    /// Do not reuse or store cached artifacts
    #[arg(long)]
    pub no_cache: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "intra" => Ok(Mode::Intra),
        "cross" => Ok(Mode::Cross),
        "both" => Ok(Mode::Both),
        other => Err(format!("mode must be intra, cross or both, got {other:?}")),
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once('-') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_owned(), b.to_owned())),
        _ => Err(format!("pair must look like TRAIN-TEST, got {s:?}")),
    }
}

fn parse_dataset(s: &str) -> Result<DatasetPaths, String> {
    let bad = || format!("dataset must look like NAME=TRAIN,TEST, got {s:?}");
    let (name, paths) = s.split_once('=').ok_or_else(bad)?;
    let (train, test) = paths.split_once(',').ok_or_else(bad)?;
    Ok(DatasetPaths {
        name: name.to_owned(),
        train: train.into(),
        test: test.into(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub mode: Mode,
    pub datasets: Vec<DatasetPaths>,
    pub include_combined: bool,
    pub cross_pairs: Option<Vec<(String, String)>>,
    pub arms: Vec<Arm>,
    pub threshold: f64,
    pub injection_cap: usize,
    pub vocab_min_count: u32,
    pub out: PathBuf,
    pub formats: Vec<String>,
    pub cache: bool,
    /// Precomputed filtered corpora by dataset name.
    pub generated: BTreeMap<String, CorpusPaths>,
    pub generation: GenerationSettings,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            mode: Mode::Both,
            datasets: Vec::new(),
            include_combined: true,
            cross_pairs: None,
            arms: vec![Arm::Baseline, Arm::Augmented],
            threshold: 0.7,
            injection_cap: 100_000,
            vocab_min_count: 1,
            out: PathBuf::from("report.csv"),
            formats: vec!["csv".into(), "md".into()],
            cache: true,
            generated: BTreeMap::new(),
            generation: GenerationSettings::default(),
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentArgs {
    pub fn apply(&self, s: &mut Experiment) {
        overlay!(s, self; mode, datasets, threshold, injection_cap, out, formats);
        overlay!(s.generation, self; count);
        if let Some(p) = &self.pairs {
            s.cross_pairs = Some(p.clone());
        }
        if self.published_pairs {
            s.cross_pairs = Some(
                synthaug::pipeline::PUBLISHED_CROSS_PAIRS
                    .iter()
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .collect(),
            );
        }
        if self.no_combined {
            s.include_combined = false;
        }
        if self.baseline_only {
            s.arms = vec![Arm::Baseline];
        }
        if self.no_cache {
            s.cache = false;
        }
        self.detector.apply(&mut s.detector, &mut s.train);
    }
}

// ---- rouge

#[derive(Debug, Args)]
pub struct RougeArgs {
    /// Generated corpus JSONL files
    #[arg(long, num_args = 1..)]
    pub generated: Option<Vec<PathBuf>>,
    /// Source training JSONL files, matched to corpora by dataset name
    #[arg(long, num_args = 1..)]
    pub source: Option<Vec<PathBuf>>,
    /// Generated sequences scored per corpus; 0 scores all [default: 1000]
    #[arg(long)]
    pub sample_cap: Option<usize>,
    /// Summary table; .csv or .md [default: rouge.md]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-sequence best-match CSV, one file per corpus with this prefix
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rouge {
    pub generated: Vec<PathBuf>,
    pub source: Vec<PathBuf>,
    pub sample_cap: usize,
    pub out: PathBuf,
    pub pairs: Option<PathBuf>,
}

impl Default for Rouge {
    fn default() -> Self {
        Rouge {
            generated: Vec::new(),
            source: Vec::new(),
            sample_cap: 1000,
            out: PathBuf::from("rouge.md"),
            pairs: None,
        }
    }
}

impl RougeArgs {
    pub fn apply(&self, s: &mut Rouge) {
        overlay!(s, self; opt pairs);
        overlay!(s, self; generated, source, sample_cap, out);
    }
}

// ---- annotate

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Generated hate corpus JSONL
    #[arg(long)]
    pub hate: Option<PathBuf>,
    /// Generated non-hate corpus JSONL
    #[arg(long)]
    pub non_hate: Option<PathBuf>,
    /// Items drawn from both corpora [default: 1000]
    #[arg(long)]
    pub items: Option<usize>,
    /// Leading items rated by every annotator [default: 250]
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Annotator names, comma separated [default: a1,a2,a3]
    #[arg(long, value_delimiter = ',')]
    pub annotators: Option<Vec<String>>,
    /// Answers CSV (annotator,item_index,label,quality) instead of the prompt
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Summary JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Annotate {
    pub hate: Option<PathBuf>,
    pub non_hate: Option<PathBuf>,
    pub items: usize,
    pub overlap: usize,
    pub annotators: Vec<String>,
    pub replay: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for Annotate {
    fn default() -> Self {
        Annotate {
            hate: None,
            non_hate: None,
            items: 1000,
            overlap: 250,
            annotators: vec!["a1".into(), "a2".into(), "a3".into()],
            replay: None,
            out: None,
        }
    }
}

impl AnnotateArgs {
    pub fn apply(&self, s: &mut Annotate) {
        overlay!(s, self; opt hate, non_hate, replay, out);
        overlay!(s, self; items, overlap, annotators);
    }
}

// ---- manifest

/// A TOML run manifest: global keys plus one optional table per verb.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Manifest {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub workdir: Option<PathBuf>,
    pub prepare: Option<Prepare>,
    pub train_lm: Option<TrainLm>,
    pub generate: Option<Generate>,
    pub train_filter: Option<TrainFilter>,
    pub filter: Option<Filter>,
    pub train_detector: Option<TrainDetector>,
    pub evaluate: Option<Evaluate>,
    pub experiment: Option<Experiment>,
    pub rouge: Option<Rouge>,
    pub annotate: Option<Annotate>,
}

/// Everything a run uses, with defaults resolved.
#[derive(Clone, Debug, Serialize)]
pub struct Effective {
    pub seed: u64,
    pub jobs: usize,
    pub workdir: PathBuf,
    #[serde(flatten)]
    pub verb: Verb,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    Prepare(Prepare),
    TrainLm(TrainLm),
    Generate(Generate),
    TrainFilter(TrainFilter),
    Filter(Filter),
    TrainDetector(TrainDetector),
    Evaluate(Evaluate),
    Experiment(Experiment),
    Rouge(Rouge),
    Annotate(Annotate),
}

impl Effective {
    pub fn resolve(cli: &Cli, manifest: Manifest) -> Self {
        let g = &cli.global;
        let verb = match &cli.command {
            Command::Prepare(a) => {
                let mut s = manifest.prepare.unwrap_or_default();
                a.apply(&mut s);
                Verb::Prepare(s)
            }
            Command::TrainLm(a) => {
                let mut s = manifest.train_lm.unwrap_or_default();
                a.apply(&mut s);
                Verb::TrainLm(s)
            }
            Command::Generate(a) => {
                let mut s = manifest.generate.unwrap_or_default();
                a.apply(&mut s);
                Verb::Generate(s)
            }
            Command::TrainFilter(a) => {
                let mut s = manifest.train_filter.unwrap_or_default();
                a.apply(&mut s);
                Verb::TrainFilter(s)
            }
            Command::Filter(a) => {
                let mut s = manifest.filter.unwrap_or_default();
                a.apply(&mut s);
                Verb::Filter(s)
            }
            Command::TrainDetector(a) => {
                let mut s = manifest.train_detector.unwrap_or_default();
                a.apply(&mut s);
                Verb::TrainDetector(s)
            }
            Command::Evaluate(a) => {
                let mut s = manifest.evaluate.unwrap_or_default();
                a.apply(&mut s);
                Verb::Evaluate(s)
            }
            Command::Experiment(a) => {
                let mut s = manifest.experiment.unwrap_or_default();
                a.apply(&mut s);
                Verb::Experiment(s)
            }
            Command::Rouge(a) => {
                let mut s = manifest.rouge.unwrap_or_default();
                a.apply(&mut s);
                Verb::Rouge(s)
            }
            Command::Annotate(a) => {
                let mut s = manifest.annotate.unwrap_or_default();
                a.apply(&mut s);
                Verb::Annotate(s)
            }
        };
        Effective {
            seed: g.seed.or(manifest.seed).unwrap_or(0),
            jobs: g.jobs.or(manifest.jobs).unwrap_or(0),
            workdir: g.workdir.clone().or(manifest.workdir).unwrap_or_else(|| PathBuf::from(".")),
            verb,
        }
    }

    /// The settings as a TOML manifest; feeding it back with `--config`
    /// reproduces the run.
    pub fn banner(&self) -> String {
        match toml::to_string(self) {
            Ok(t) => t,
            Err(e) => format!("# effective config could not be rendered: {e}\n{self:?}\n"),
        }
    }
}
