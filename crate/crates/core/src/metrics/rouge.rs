use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::Dataset;
use crate::langmodel::GeneratedCorpus;
use crate::parallel::with_jobs;
use crate::seed::rng_from_seed;

pub const PAIRING_MAX_THEN_MEAN: &str = "max-over-references-then-mean";

/// Length of the longest common subsequence, two-row DP.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// ROUGE-L F-measure (β = 1).
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return Ok(0.0);
    }
    // F1 of l/|c| and l/|r| simplifies to 2l/(|c|+|r|)
    Ok(2.0 * l as f64 / (candidate.len() + reference.len()) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougePair {
    pub generated_index: usize,
    pub source_index: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub pairs: Vec<RougePair>,
    pub mean: f64,
    pub pairing: String,
    pub sample_cap: Option<usize>,
    /// Generated sequences skipped because they were empty.
    pub skipped_empty: usize,
}

impl RougeReport {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["generated_index", "source_index", "score"])?;
        for p in &self.pairs {
            out.write_record([p.generated_index.to_string(), p.source_index.to_string(), p.score.to_string()])?;
        }
        out.flush()
    }
}

/// Scores each generated sequence by its best ROUGE-L against the source
/// sequences, then averages. With `sample_cap`, a seed-keyed sample of that
/// many generated sequences is scored instead of all of them.
pub fn corpus_rouge(
    generated: &GeneratedCorpus,
    source: &Dataset,
    sample_cap: Option<usize>,
    seed: u64,
    jobs: usize,
) -> Result<RougeReport, MetricsError> {
    let refs: Vec<Vec<String>> = source.token_sequences().filter(|t| !t.is_empty()).collect();
    let candidates: Vec<usize> = (0..generated.items.len()).filter(|&i| !generated.items[i].tokens.is_empty()).collect();
    let skipped_empty = generated.items.len() - candidates.len();
    if refs.is_empty() || candidates.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let chosen: Vec<usize> = match sample_cap {
        Some(cap) if cap < candidates.len() => {
            let mut picked: Vec<usize> = sample(&mut rng_from_seed(seed), candidates.len(), cap)
                .into_iter()
                .map(|k| candidates[k])
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => candidates,
    };
    let pairs: Vec<RougePair> = with_jobs(jobs, || {
        chosen
            .par_iter()
            .map(|&gi| {
                let cand = &generated.items[gi].tokens;
                let mut best = RougePair {
                    generated_index: gi,
                    source_index: 0,
                    score: -1.0,
                };
                for (si, r) in refs.iter().enumerate() {
                    let s = rouge_l(cand, r).expect("non-empty");
                    if s > best.score {
                        best.score = s;
                        best.source_index = si;
                        if s == 1.0 {
                            break;
                        }
                    }
                }
                best
            })
            .collect()
    });
    let mean = pairs.iter().map(|p| p.score).sum::<f64>() / pairs.len() as f64;
    Ok(RougeReport {
        pairs,
        mean,
        pairing: PAIRING_MAX_THEN_MEAN.to_owned(),
        sample_cap,
        skipped_empty,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeTableRow {
    pub dataset: String,
    pub hate: Option<f64>,
    pub non_hate: Option<f64>,
}

/// Per-dataset, per-class ROUGE-L summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeTable {
    pub rows: Vec<RougeTableRow>,
}

/// Shortest of two to four decimals that represents `v` exactly, else two
/// decimals: 0.12 stays `0.12`, 0.052 stays `0.052`.
fn short_score(v: f64) -> String {
    (2..=4)
        .map(|places| format!("{v:.places$}"))
        .find(|s| s.parse::<f64>().is_ok_and(|p| (p - v).abs() < 1e-9))
        .unwrap_or_else(|| format!("{v:.2}"))
}

impl RougeTable {
    pub fn to_markdown(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), short_score);
        let mut out = String::from("| Dataset | Hate | Non-Hate |\n|---|---|---|\n");
        for r in &self.rows {
            out.push_str(&format!("| {} | {} | {} |\n", r.dataset, cell(r.hate), cell(r.non_hate)));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dataset", "hate", "non_hate"])?;
        let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &self.rows {
            out.write_record([r.dataset.clone(), cell(r.hate), cell(r.non_hate)])?;
        }
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, LabeledExample};
    use crate::langmodel::GeneratedSequence;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn corpus(texts: &[&str]) -> GeneratedCorpus {
        GeneratedCorpus {
            source_dataset: "src".into(),
            class_label: Label::Hate,
            items: texts
                .iter()
                .enumerate()
                .map(|(i, t)| GeneratedSequence {
                    tokens: t.split_whitespace().map(str::to_owned).collect(),
                    seed: i as u64,
                    confidence: None,
                })
                .collect(),
        }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(rouge_l(&toks("the cat sat"), &toks("the dog sat")).unwrap(), 2.0 / 3.0);
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")).unwrap(), 1.0);
        assert_eq!(rouge_l(&toks("a b"), &toks("c d")).unwrap(), 0.0);
        assert_eq!(rouge_l::<&str>(&[], &toks("a")), Err(MetricsError::EmptySequence));
    }

    #[test]
    fn corpus_level() {
        let src = Dataset::new("s", vec![LabeledExample::new("x y z", Label::Hate, "s")]);
        let r = corpus_rouge(&corpus(&["x y z", "x y z"]), &src, None, 1, 1).unwrap();
        assert_eq!(r.mean, 1.0);
        let r = corpus_rouge(&corpus(&["p q", "", "r"]), &src, None, 1, 1).unwrap();
        assert_eq!((r.mean, r.skipped_empty, r.pairs.len()), (0.0, 1, 2));
        assert_eq!(corpus_rouge(&corpus(&[""]), &src, None, 1, 1), Err(MetricsError::EmptyCorpus));
    }

    #[test]
    fn sampling_is_seeded_and_jobs_independent() {
        let src = Dataset::new(
            "s",
            vec![LabeledExample::new("a b c d", Label::Hate, "s"), LabeledExample::new("e f a", Label::Hate, "s")],
        );
        let texts: Vec<String> = (0..50).map(|i| format!("a w{i} c e")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let g = corpus(&refs);
        let a = corpus_rouge(&g, &src, Some(10), 7, 1).unwrap();
        let b = corpus_rouge(&g, &src, Some(10), 7, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pairs.len(), 10);
        let c = corpus_rouge(&g, &src, Some(10), 8, 1).unwrap();
        assert_ne!(
            a.pairs.iter().map(|p| p.generated_index).collect::<Vec<_>>(),
            c.pairs.iter().map(|p| p.generated_index).collect::<Vec<_>>()
        );
    }

    #[test]
    fn table_rendering() {
        let t = RougeTable {
            rows: vec![
                RougeTableRow { dataset: "WS".into(), hate: Some(0.12), non_hate: Some(0.05) },
                RougeTableRow { dataset: "X".into(), hate: Some(0.052), non_hate: None },
            ],
        };
        assert_eq!(
            t.to_markdown(),
            "| Dataset | Hate | Non-Hate |\n|---|---|---|\n| WS | 0.12 | 0.05 |\n| X | 0.052 | - |\n"
        );
        assert_eq!(short_score(0.0), "0.00");
        assert_eq!(short_score(1.0), "1.00");
        assert_eq!(short_score(0.125), "0.125");
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(0u8..4, 1..12), b in prop::collection::vec(0u8..4, 1..12)) {
            let ab = rouge_l(&a, &b).unwrap();
            prop_assert_eq!(ab, rouge_l(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
