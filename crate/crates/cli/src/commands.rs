//! One function per verb. Each takes fully resolved settings.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use synthaug::corpus::{
    balanced_combined, class_subset, load_dataset, split_dataset, write_jsonl, Dataset, DatasetFormat, Label, Side,
    SplitDataset, Vocabulary,
};
use synthaug::detector::{read_checkpoint, train_detector, write_checkpoint, write_history_csv};
use synthaug::filter::{filter_and_select, train_filter, FilterClassifier, SelectionConfig, StagedTrainingPlan};
use synthaug::langmodel::{generate_corpus, read_corpus_jsonl, train_lm, write_corpus_jsonl, GeneratedCorpus, GenerativeLM};
use synthaug::metrics::{classification_metrics, corpus_rouge, pr_curve, ConfusionMatrix, RougeTable, RougeTableRow};
use synthaug::pipeline::{
    annotation_session, augment_training_set, content_key, emit_report, run_experiment, run_generation,
    ArtifactCache, ExperimentPlan, GeneratedPair, GenerationPlan, PipelineError, PromptAnswers, ReplayAnswers,
    ReportFormat,
};
use synthaug::seed::derive_seed;

use crate::settings::{self, Effective, Verb};
use crate::UsageError;

/// Resolves paths against the working directory.
pub struct Ctx {
    pub seed: u64,
    pub jobs: usize,
    workdir: PathBuf,
}

impl Ctx {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }
}

pub fn run(eff: Effective) -> Result<()> {
    let ctx = Ctx {
        seed: eff.seed,
        jobs: eff.jobs,
        workdir: eff.workdir,
    };
    match eff.verb {
        Verb::Prepare(s) => prepare(&ctx, s),
        Verb::TrainLm(s) => train_lm_cmd(&ctx, s),
        Verb::Generate(s) => generate(&ctx, s),
        Verb::TrainFilter(s) => train_filter_cmd(&ctx, s),
        Verb::Filter(s) => filter(&ctx, s),
        Verb::TrainDetector(s) => train_detector_cmd(&ctx, s),
        Verb::Evaluate(s) => evaluate(&ctx, s),
        Verb::Experiment(s) => experiment(&ctx, s),
        Verb::Rouge(s) => rouge(&ctx, s),
        Verb::Annotate(s) => annotate(&ctx, s),
    }
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| UsageError(format!("missing required option --{flag}")).into())
}

/// `WS.train.jsonl` names the dataset `WS`.
fn dataset_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    for side in [".train", ".test"] {
        if let Some(base) = stem.strip_suffix(side) {
            return base.to_owned();
        }
    }
    stem
}

fn load_jsonl(path: &Path, name: &str) -> Result<Dataset> {
    let loaded = load_dataset(path, DatasetFormat::Jsonl, name)?;
    if loaded.dropped_empty > 0 {
        log::warn!("{}: dropped {} examples empty after normalization", path.display(), loaded.dropped_empty);
    }
    Ok(loaded.dataset)
}

/// A training file as a split with an empty test side.
fn train_only(path: &Path) -> Result<SplitDataset> {
    let name = dataset_name(path);
    let train = load_jsonl(path, &name)?.with_side(Side::Train);
    Ok(SplitDataset {
        test: Dataset::new(name, Vec::new()),
        train,
        seed: 0,
        ratio: 1.0,
    })
}

fn read_corpus(path: &Path, fallback: Label) -> Result<GeneratedCorpus> {
    if !path.is_file() {
        return Err(synthaug::corpus::CorpusError::MissingFile(path.display().to_string()).into());
    }
    Ok(read_corpus_jsonl(BufReader::new(File::open(path)?), fallback)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn done(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn prepare(ctx: &Ctx, s: settings::Prepare) -> Result<()> {
    let input = ctx.path(&required(&s.input, "in")?);
    let format = match &s.format {
        Some(f) => f.parse().map_err(UsageError)?,
        None => DatasetFormat::from_path(&input)
            .ok_or_else(|| UsageError(format!("cannot tell the format of {}; pass --format", input.display())))?,
    };
    let name = s.name.clone().unwrap_or_else(|| dataset_name(&input));
    let loaded = load_dataset(&input, format, &name)?;
    if loaded.dropped_empty > 0 {
        log::warn!("{name}: dropped {} examples empty after normalization", loaded.dropped_empty);
    }
    let split = split_dataset(&loaded.dataset, s.split, ctx.seed)?;
    let out = ctx.path(&s.out);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let train = out.join(format!("{name}.train.jsonl"));
    let test = out.join(format!("{name}.test.jsonl"));
    write_jsonl(&split.train, &train)?;
    write_jsonl(&split.test, &test)?;
    eprintln!(
        "{name}: {} train ({} hate), {} test ({} hate)",
        split.train.len(),
        split.train.count(Label::Hate),
        split.test.len(),
        split.test.count(Label::Hate)
    );
    done(&[train, test]);
    Ok(())
}

fn train_lm_cmd(ctx: &Ctx, s: settings::TrainLm) -> Result<()> {
    let data = ctx.path(&required(&s.data, "data")?);
    let name = dataset_name(&data);
    let train = load_jsonl(&data, &name)?;
    let subset = class_subset(&train, s.class);
    let vocab = Vocabulary::from_sequences(subset.token_sequences(), s.lm.min_count);
    let lm = train_lm(&subset, &vocab, s.lm.order, s.lm.alpha)?.with_metadata(name.clone(), Some(s.class));
    let out = ctx.path(&s.out.clone().unwrap_or_else(|| format!("{name}.{}.lm", s.class.as_str()).into()));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    lm.save(&out)?;
    eprintln!(
        "{name} {}: {} examples, {} tokens in vocabulary, {} contexts",
        s.class,
        subset.len(),
        vocab.len(),
        lm.context_count()
    );
    done(&[out]);
    Ok(())
}

fn generate(ctx: &Ctx, s: settings::Generate) -> Result<()> {
    let lm_path = ctx.path(&required(&s.lm, "lm")?);
    let lm = GenerativeLM::load(&lm_path)?;
    let class = lm.class().unwrap_or(Label::Hate);
    let sampler = synthaug::langmodel::SamplerConfig {
        temperature: s.temperature,
        top_p: s.top_p,
        max_tokens: s.max_tokens,
        seed: derive_seed(ctx.seed, &format!("sample/{class}")),
    };
    let corpus = generate_corpus(&lm, s.count, &sampler, class, ctx.jobs)?;
    let out = ctx.path(
        &s.out
            .clone()
            .unwrap_or_else(|| format!("{}.{}.generated.jsonl", lm.source(), class.as_str()).into()),
    );
    let mut w = create(&out)?;
    write_corpus_jsonl(&corpus, &mut w)?;
    w.flush()?;
    done(&[out]);
    Ok(())
}

fn train_filter_cmd(ctx: &Ctx, s: settings::TrainFilter) -> Result<()> {
    if s.data.is_empty() {
        bail!(UsageError("missing required option --data".into()));
    }
    let splits = s.data.iter().map(|p| train_only(&ctx.path(p))).collect::<Result<Vec<_>>>()?;
    let target = balanced_combined(&splits, derive_seed(ctx.seed, "balanced"))?;
    let pretrain = match &s.pretrain {
        Some(p) => {
            let p = ctx.path(p);
            Some(load_jsonl(&p, &dataset_name(&p))?.with_side(Side::Train))
        }
        None => None,
    };
    let filter = train_filter(&StagedTrainingPlan {
        pretrain,
        target,
        pretrain_stage: s.stage.clone(),
        target_stage: s.stage.clone(),
        seed: derive_seed(ctx.seed, "filter"),
    })?;
    for stage in filter.history() {
        eprintln!(
            "stage {} on {}: loss {:.4} -> {:.4}",
            stage.name,
            stage.corpus,
            stage.losses.first().copied().unwrap_or(f64::NAN),
            stage.losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    let out = ctx.path(&s.out);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    filter.save(&out)?;
    done(&[out]);
    Ok(())
}

fn filter(ctx: &Ctx, s: settings::Filter) -> Result<()> {
    let corpus_path = ctx.path(&required(&s.corpus, "corpus")?);
    let filter_path = ctx.path(&required(&s.filter, "filter")?);
    let corpus = read_corpus(&corpus_path, s.class.unwrap_or(Label::Hate))?;
    let model = FilterClassifier::load(&filter_path)?;
    let class = s.class.unwrap_or(corpus.class_label);
    let cfg = SelectionConfig {
        threshold: s.threshold,
        top_k: s.top_k,
    };
    let (kept, report) = filter_and_select(&corpus, &model, class, &cfg, ctx.jobs);
    if let Some(w) = &report.warning {
        log::warn!("{w}");
    }
    eprintln!(
        "kept {} of {} ({} below threshold, {} over budget)",
        report.retained, report.total, report.below_threshold, report.over_budget
    );
    let out = match &s.out {
        Some(o) => ctx.path(o),
        None => {
            let stem = corpus_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            corpus_path.with_file_name(format!("{stem}.filtered.jsonl"))
        }
    };
    let mut w = create(&out)?;
    write_corpus_jsonl(&kept, &mut w)?;
    w.flush()?;
    let mut written = vec![out];
    if let Some(r) = &s.report {
        let r = ctx.path(r);
        let mut w = create(&r)?;
        report.write_csv(&mut w)?;
        w.flush()?;
        written.push(r);
    }
    done(&written);
    Ok(())
}

fn train_detector_cmd(ctx: &Ctx, s: settings::TrainDetector) -> Result<()> {
    let data = ctx.path(&required(&s.data, "data")?);
    let name = dataset_name(&data);
    let base = load_jsonl(&data, &name)?.with_side(Side::Train);
    let (mut hate, mut non_hate) = (Vec::new(), Vec::new());
    for p in &s.generated {
        let c = read_corpus(&ctx.path(p), Label::Hate)?;
        match c.class_label {
            Label::Hate => hate.push(c),
            Label::NonHate => non_hate.push(c),
        }
    }
    let merge = |parts: Vec<GeneratedCorpus>, label: Label| GeneratedCorpus {
        source_dataset: name.clone(),
        class_label: label,
        items: parts.into_iter().flat_map(|c| c.items).collect(),
    };
    let aug = augment_training_set(&base, &merge(hate, Label::Hate), &merge(non_hate, Label::NonHate), s.cap)?;
    eprintln!(
        "{name}: {} base examples, {} generated hate, {} generated non-hate",
        aug.base_len, aug.injected_hate, aug.injected_non_hate
    );
    let vocab = Vocabulary::from_sequences(aug.dataset.token_sequences(), s.min_count);
    let mut tcfg = s.train.clone();
    tcfg.seed = derive_seed(ctx.seed, "detector");
    let (model, history) = train_detector(&aug.dataset, &vocab, &s.detector, &tcfg, ctx.jobs)?;
    eprintln!(
        "best epoch {} of {}{}",
        history.best_epoch,
        history.epochs.len(),
        if history.stopped_early { " (stopped early)" } else { "" }
    );
    let out = ctx.path(&s.out);
    let mut w = create(&out)?;
    write_checkpoint(&model, &mut w)?;
    w.flush()?;
    let mut written = vec![out];
    if let Some(h) = &s.history {
        let h = ctx.path(h);
        let mut w = create(&h)?;
        write_history_csv(&history, &mut w)?;
        w.flush()?;
        written.push(h);
    }
    done(&written);
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    model: PathBuf,
    data: PathBuf,
    threshold: f64,
    examples: usize,
    confusion: ConfusionMatrix,
    #[serde(flatten)]
    metrics: synthaug::metrics::ClassificationMetrics,
}

fn evaluate(ctx: &Ctx, s: settings::Evaluate) -> Result<()> {
    let model_path = ctx.path(&required(&s.model, "model")?);
    let data = ctx.path(&required(&s.data, "data")?);
    if !model_path.is_file() {
        return Err(synthaug::corpus::CorpusError::MissingFile(model_path.display().to_string()).into());
    }
    let model = read_checkpoint(BufReader::new(File::open(&model_path)?))?;
    let test = load_jsonl(&data, &dataset_name(&data))?;
    let scored: Vec<(f64, Label)> = test.examples.iter().map(|e| (model.posterior(&e.text), e.label)).collect();
    let predict = |p: f64| if p > s.threshold { Label::Hate } else { Label::NonHate };
    let confusion = ConfusionMatrix::from_pairs(scored.iter().map(|&(p, y)| (predict(p), y)));
    let metrics = classification_metrics(&confusion)?;
    let eval = Evaluation {
        model: model_path,
        data,
        threshold: s.threshold,
        examples: scored.len(),
        confusion,
        metrics,
    };
    let mut written = Vec::new();
    match &s.out {
        Some(o) => {
            let o = ctx.path(o);
            write_json(&eval, &o)?;
            written.push(o);
        }
        None => {
            serde_json::to_writer_pretty(io::stdout().lock(), &eval)?;
            println!();
        }
    }
    if let Some(pr) = &s.pr {
        let pr = ctx.path(pr);
        let mut w = create(&pr)?;
        pr_curve(&scored)?.write_csv(&mut w)?;
        w.flush()?;
        written.push(pr);
    }
    done(&written);
    Ok(())
}

fn experiment(ctx: &Ctx, s: settings::Experiment) -> Result<()> {
    if s.datasets.is_empty() {
        bail!(UsageError("no datasets: pass --dataset NAME=TRAIN,TEST or list them in the manifest".into()));
    }
    let formats = s
        .formats
        .iter()
        .map(|f| f.parse::<ReportFormat>().map_err(UsageError))
        .collect::<Result<Vec<_>, _>>()?;

    let mut splits = Vec::new();
    for d in &s.datasets {
        let train = load_jsonl(&ctx.path(&d.train), &d.name)?.with_side(Side::Train);
        let test = load_jsonl(&ctx.path(&d.test), &d.name)?.with_side(Side::Test);
        splits.push(SplitDataset {
            train,
            test,
            seed: ctx.seed,
            ratio: 0.0,
        });
    }
    let cache = s.cache.then(|| ArtifactCache::new(ctx.path(Path::new("cache"))));

    let mut generated = BTreeMap::new();
    let needs_generation = s.arms.contains(&synthaug::pipeline::Arm::Augmented);
    for d in &s.datasets {
        let pair = match s.generated.get(&d.name) {
            Some(c) => GeneratedPair {
                hate: read_corpus(&ctx.path(&c.hate), Label::Hate)?,
                non_hate: read_corpus(&ctx.path(&c.non_hate), Label::NonHate)?,
            },
            None if needs_generation => generate_pair(ctx, &s.generation, &d.name, &splits, cache.as_ref())?,
            None => continue,
        };
        generated.insert(d.name.clone(), pair);
    }

    let plan = ExperimentPlan {
        mode: s.mode,
        datasets: s.datasets.iter().map(|d| d.name.clone()).collect(),
        include_combined: s.include_combined,
        cross_pairs: s.cross_pairs.clone(),
        arms: s.arms.clone(),
        detector: s.detector.clone(),
        train: s.train.clone(),
        threshold: s.threshold,
        injection_cap: s.injection_cap,
        vocab_min_count: s.vocab_min_count,
        seed: ctx.seed,
    };
    let report = run_experiment(&plan, &splits, &generated, cache.as_ref(), ctx.jobs)?;
    let out = ctx.path(&s.out);
    let mut written = Vec::new();
    for f in formats {
        let ext = match f {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        };
        written.extend(emit_report(&report, f, &out.with_extension(ext))?);
    }
    done(&written);
    Ok(())
}

/// Runs generation for one dataset, reusing a cached result built from the
/// same training data and settings.
fn generate_pair(
    ctx: &Ctx,
    g: &settings::GenerationSettings,
    name: &str,
    splits: &[SplitDataset],
    cache: Option<&ArtifactCache>,
) -> Result<GeneratedPair, PipelineError> {
    let plan = GenerationPlan {
        dataset: name.to_owned(),
        hate_lm: g.lm.clone(),
        non_hate_lm: g.lm.clone(),
        sampler: g.sampler.clone(),
        count: g.count,
        selection: SelectionConfig {
            threshold: g.threshold,
            top_k: g.top_k,
        },
        filter_pretrain_stage: g.filter_stage.clone(),
        filter_target_stage: g.filter_stage.clone(),
        filter_datasets: Vec::new(),
        filter_non_hate: g.filter_non_hate,
        seed: derive_seed(ctx.seed, &format!("generate/{name}")),
    };
    let build = || -> Result<GeneratedPair, PipelineError> {
        let out = run_generation(&plan, splits, None, ctx.jobs)?;
        for line in &out.logs {
            eprintln!("{line}");
        }
        Ok(GeneratedPair {
            hate: out.hate,
            non_hate: out.non_hate,
        })
    };
    let Some(cache) = cache else {
        return build();
    };
    let mut parts = vec![
        "generation".to_owned(),
        name.to_owned(),
        serde_json::to_string(g)?,
        plan.seed.to_string(),
    ];
    for s in splits {
        parts.push(s.name().to_owned());
        parts.push(serde_json::to_string(&s.train.examples)?);
    }
    let key = content_key(&parts);
    cache.get_or_build(
        "generated",
        &key,
        "json",
        |p| {
            let (hate, non_hate) = serde_json::from_reader(BufReader::new(File::open(p)?))?;
            Ok(GeneratedPair { hate, non_hate })
        },
        |pair, p| {
            let mut w = BufWriter::new(File::create(p)?);
            serde_json::to_writer(&mut w, &(&pair.hate, &pair.non_hate))?;
            w.flush()?;
            Ok(())
        },
        build,
    )
}

fn rouge(ctx: &Ctx, s: settings::Rouge) -> Result<()> {
    if s.generated.is_empty() || s.source.is_empty() {
        bail!(UsageError("rouge needs --generated and --source".into()));
    }
    let mut sources = BTreeMap::new();
    for p in &s.source {
        let p = ctx.path(p);
        let name = dataset_name(&p);
        sources.insert(name.clone(), load_jsonl(&p, &name)?);
    }
    let cap = (s.sample_cap > 0).then_some(s.sample_cap);
    let mut rows: BTreeMap<String, RougeTableRow> = BTreeMap::new();
    let mut written = Vec::new();
    for p in &s.generated {
        let corpus = read_corpus(&ctx.path(p), Label::Hate)?;
        let name = corpus.source_dataset.clone();
        let source = sources
            .get(&name)
            .ok_or_else(|| UsageError(format!("no --source file for dataset {name:?} of {}", p.display())))?;
        let class = corpus.class_label;
        let seed = derive_seed(ctx.seed, &format!("rouge/{name}/{class}"));
        let report = corpus_rouge(&corpus, source, cap, seed, ctx.jobs)?;
        eprintln!("{name} {class}: mean ROUGE-L {:.4} over {} sequences", report.mean, report.pairs.len());
        let row = rows.entry(name.clone()).or_insert_with(|| RougeTableRow {
            dataset: name.clone(),
            hate: None,
            non_hate: None,
        });
        match class {
            Label::Hate => row.hate = Some(report.mean),
            Label::NonHate => row.non_hate = Some(report.mean),
        }
        if let Some(prefix) = &s.pairs {
            let prefix = ctx.path(prefix);
            let file = format!("{}{name}.{}.csv", prefix.file_name().map(|f| f.to_string_lossy()).unwrap_or_default(), class.as_str());
            let path = prefix.with_file_name(file);
            let mut w = create(&path)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            written.push(path);
        }
    }
    let table = RougeTable {
        rows: rows.into_values().collect(),
    };
    let out = ctx.path(&s.out);
    let mut w = create(&out)?;
    if out.extension().is_some_and(|e| e == "csv") {
        table.write_csv(&mut w)?;
    } else {
        w.write_all(table.to_markdown().as_bytes())?;
    }
    w.flush()?;
    written.insert(0, out);
    done(&written);
    Ok(())
}

fn annotate(ctx: &Ctx, s: settings::Annotate) -> Result<()> {
    let hate = read_corpus(&ctx.path(&required(&s.hate, "hate")?), Label::Hate)?;
    let non_hate = read_corpus(&ctx.path(&required(&s.non_hate, "non-hate")?), Label::NonHate)?;
    let seed = derive_seed(ctx.seed, "annotate");
    let report = match &s.replay {
        Some(r) => {
            let mut answers = ReplayAnswers::from_path(&ctx.path(r))?;
            annotation_session(&hate, &non_hate, s.items, s.overlap, &s.annotators, &mut answers, seed)?
        }
        None => {
            let mut answers = PromptAnswers::new(io::stdin().lock(), io::stderr());
            annotation_session(&hate, &non_hate, s.items, s.overlap, &s.annotators, &mut answers, seed)?
        }
    };
    if let Some(k) = report.kappa.as_ref().and_then(|k| k.kappa) {
        eprintln!("kappa {k:.3}");
    }
    match &s.out {
        Some(o) => {
            let o = ctx.path(o);
            write_json(&report, &o)?;
            done(&[o]);
        }
        None => {
            serde_json::to_writer_pretty(io::stdout().lock(), &report)?;
            println!();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_names_drop_the_side_suffix() {
        assert_eq!(dataset_name(Path::new("work/WS.train.jsonl")), "WS");
        assert_eq!(dataset_name(Path::new("SE.test.jsonl")), "SE");
        assert_eq!(dataset_name(Path::new("raw.csv")), "raw");
    }

    #[test]
    fn relative_paths_resolve_against_workdir() {
        let ctx = Ctx {
            seed: 0,
            jobs: 1,
            workdir: PathBuf::from("/w"),
        };
        assert_eq!(ctx.path(Path::new("a/b")), PathBuf::from("/w/a/b"));
        assert_eq!(ctx.path(Path::new("/abs")), PathBuf::from("/abs"));
    }
}
