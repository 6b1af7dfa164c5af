use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{balanced_combined, class_subset, Dataset, Label, LabeledExample, Provenance, Side, SplitDataset, Vocabulary};
use crate::filter::{filter_and_select, train_filter, SelectionConfig, SelectionReport, StageParams, StagedTrainingPlan};
use crate::langmodel::{generate_corpus, train_lm, GeneratedCorpus, SamplerConfig, DEFAULT_ALPHA, DEFAULT_ORDER};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmParams {
    pub order: usize,
    pub alpha: f64,
    pub min_count: u32,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams {
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            min_count: 1,
        }
    }
}

/// Everything needed to generate the two synthetic corpora of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationPlan {
    pub dataset: String,
    pub hate_lm: LmParams,
    pub non_hate_lm: LmParams,
    pub sampler: SamplerConfig,
    pub count: usize,
    pub selection: SelectionConfig,
    pub filter_pretrain_stage: StageParams,
    pub filter_target_stage: StageParams,
    /// Splits whose training sides form the filter's balanced corpus. Empty
    /// means every split handed to [`run_generation`].
    pub filter_datasets: Vec<String>,
    /// Score and select the non-hate corpus too. When off, the first
    /// `selection.top_k` sequences are kept unscored.
    pub filter_non_hate: bool,
    pub seed: u64,
}

impl Default for GenerationPlan {
    fn default() -> Self {
        GenerationPlan {
            dataset: String::new(),
            hate_lm: LmParams::default(),
            non_hate_lm: LmParams::default(),
            sampler: SamplerConfig::default(),
            count: 600_000,
            selection: SelectionConfig::default(),
            filter_pretrain_stage: StageParams::default(),
            filter_target_stage: StageParams::default(),
            filter_datasets: Vec::new(),
            filter_non_hate: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenerationOutput {
    pub hate: GeneratedCorpus,
    pub non_hate: GeneratedCorpus,
    pub hate_report: SelectionReport,
    pub non_hate_report: Option<SelectionReport>,
    pub logs: Vec<String>,
}

fn find<'a>(splits: &'a [SplitDataset], name: &str) -> Result<&'a SplitDataset, PipelineError> {
    splits
        .iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| PipelineError::UnknownDataset(name.to_owned()))
}

fn class_lm_corpus(
    split: &SplitDataset,
    label: Label,
    params: &LmParams,
    sampler: &SamplerConfig,
    count: usize,
    seed: u64,
    jobs: usize,
) -> Result<GeneratedCorpus, PipelineError> {
    let subset = class_subset(&split.train, label);
    let vocab = Vocabulary::from_sequences(subset.token_sequences(), params.min_count);
    let lm = train_lm(&subset, &vocab, params.order, params.alpha)?.with_metadata(split.name(), Some(label));
    let cfg = sampler.with_seed(derive_seed(seed, &format!("sample/{label}")));
    Ok(generate_corpus(&lm, count, &cfg, label, jobs)?)
}

/// Trains the hate generator, samples, trains the filter (optional
/// pretraining corpus first, then the balanced combined training data),
/// selects confident hate sequences, then repeats generation for non-hate.
/// Only training sides are read.
pub fn run_generation(
    plan: &GenerationPlan,
    splits: &[SplitDataset],
    pretrain: Option<&Dataset>,
    jobs: usize,
) -> Result<GenerationOutput, PipelineError> {
    let split = find(splits, &plan.dataset)?;
    split.train.ensure_no_test_side("run_generation")?;
    let mut logs = Vec::new();
    let mut log = |m: String| {
        log::info!("{m}");
        logs.push(m);
    };

    let raw_hate = class_lm_corpus(split, Label::Hate, &plan.hate_lm, &plan.sampler, plan.count, plan.seed, jobs)?;
    log(format!(
        "{}: hate generator trained on {} examples, {} sequences sampled",
        plan.dataset,
        split.train.count(Label::Hate),
        raw_hate.len()
    ));

    let filter_splits: Vec<SplitDataset> = if plan.filter_datasets.is_empty() {
        splits.to_vec()
    } else {
        plan.filter_datasets
            .iter()
            .map(|n| find(splits, n).cloned())
            .collect::<Result<_, _>>()?
    };
    let combined = balanced_combined(&filter_splits, derive_seed(plan.seed, "balanced"))?;
    let filter = train_filter(&StagedTrainingPlan {
        pretrain: pretrain.cloned(),
        target: combined,
        pretrain_stage: plan.filter_pretrain_stage.clone(),
        target_stage: plan.filter_target_stage.clone(),
        seed: derive_seed(plan.seed, "filter"),
    })?;
    for stage in filter.history() {
        log(format!(
            "filter stage {} on {}: loss {:.4} -> {:.4}",
            stage.name,
            stage.corpus,
            stage.losses.first().copied().unwrap_or(f64::NAN),
            stage.losses.last().copied().unwrap_or(f64::NAN)
        ));
    }

    let (hate, hate_report) = filter_and_select(&raw_hate, &filter, Label::Hate, &plan.selection, jobs);
    log(format!(
        "{}: kept {} of {} hate sequences ({} below threshold, {} over budget)",
        plan.dataset, hate_report.retained, hate_report.total, hate_report.below_threshold, hate_report.over_budget
    ));

    let raw_non_hate =
        class_lm_corpus(split, Label::NonHate, &plan.non_hate_lm, &plan.sampler, plan.count, plan.seed, jobs)?;
    log(format!(
        "{}: non-hate generator trained on {} examples, {} sequences sampled",
        plan.dataset,
        split.train.count(Label::NonHate),
        raw_non_hate.len()
    ));
    let (non_hate, non_hate_report) = if plan.filter_non_hate {
        let (c, r) = filter_and_select(&raw_non_hate, &filter, Label::NonHate, &plan.selection, jobs);
        log(format!("{}: kept {} of {} non-hate sequences", plan.dataset, r.retained, r.total));
        (c, Some(r))
    } else {
        let mut c = raw_non_hate;
        c.items.truncate(plan.selection.top_k);
        log(format!("{}: kept the first {} non-hate sequences unfiltered", plan.dataset, c.len()));
        (c, None)
    };

    Ok(GenerationOutput {
        hate,
        non_hate,
        hate_report,
        non_hate_report,
        logs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTrainSet {
    /// Base examples first, then injected hate, then injected non-hate.
    pub dataset: Dataset,
    pub base_len: usize,
    pub injected_hate: usize,
    pub injected_non_hate: usize,
}

fn injected(corpus: &GeneratedCorpus, cap: usize) -> Vec<LabeledExample> {
    let mut items: Vec<_> = corpus.items.iter().filter(|s| !s.tokens.is_empty()).collect();
    // unscored sequences keep generation order after the scored ones
    items.sort_by(|a, b| match (a.confidence, b.confidence) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    items
        .into_iter()
        .take(cap)
        .map(|s| LabeledExample {
            text: s.text(),
            label: corpus.class_label,
            provenance: Provenance {
                source: corpus.source_dataset.clone(),
                split: Side::Train,
                generated: true,
                seed: Some(s.seed),
            },
        })
        .collect()
}

/// Appends up to `cap` generated sequences per class to `base`, highest
/// confidence first. Empty sequences are skipped.
pub fn augment_training_set(
    base: &Dataset,
    gen_hate: &GeneratedCorpus,
    gen_non_hate: &GeneratedCorpus,
    cap: usize,
) -> Result<AugmentedTrainSet, PipelineError> {
    base.ensure_no_test_side("augment_training_set")?;
    let hate = injected(gen_hate, cap);
    let non_hate = injected(gen_non_hate, cap);
    let (injected_hate, injected_non_hate) = (hate.len(), non_hate.len());
    let mut examples = base.examples.clone();
    examples.extend(hate);
    examples.extend(non_hate);
    Ok(AugmentedTrainSet {
        dataset: Dataset::new(format!("{}+generated", base.name), examples),
        base_len: base.len(),
        injected_hate,
        injected_non_hate,
    })
}
