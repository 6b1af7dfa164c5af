//! Evaluation metrics: confusion-matrix scores, precision/recall curves,
//! ROUGE-L similarity, Fleiss' kappa and the relative-change column used in
//! result tables.

mod classification;
mod kappa;
mod rouge;

use thiserror::Error;

pub use classification::{classification_metrics, pr_curve, ClassificationMetrics, ConfusionMatrix, PrCurve, PrPoint, PR_THRESHOLDS};
pub use kappa::{fleiss_kappa, interpret_kappa, KappaReport};
pub use rouge::{corpus_rouge, lcs_len, rouge_l, RougePair, RougeReport, RougeTable, RougeTableRow};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("ROUGE-L needs non-empty sequences")]
    EmptySequence,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("row {row} sums to {sum}, expected {expected} ratings")]
    RowSumMismatch { row: usize, sum: u32, expected: u32 },
    #[error("at least two raters per item are required, got {0}")]
    TooFewRaters(u32),
    #[error("baseline is zero")]
    ZeroBaseline,
}

/// `100 * (augmented - baseline) / baseline`.
pub fn relative_change(baseline: f64, augmented: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (augmented - baseline) / baseline)
}

/// Signed, two-decimal, thousands-grouped rendering: `+315.48`,
/// `-17.27`, `+1,847.06`. Zero baselines render as `n/a`.
pub fn render_change(baseline: f64, augmented: f64) -> String {
    match relative_change(baseline, augmented) {
        Ok(v) => signed_two_decimals(v),
        Err(_) => "n/a".to_owned(),
    }
}

/// [`render_change`] with a trailing percent sign.
pub fn render_percent(baseline: f64, augmented: f64) -> String {
    match relative_change(baseline, augmented) {
        Ok(v) => format!("{}%", signed_two_decimals(v)),
        Err(_) => "n/a".to_owned(),
    }
}

/// Renders an already computed percent change like [`render_change`].
pub fn format_change(v: f64) -> String {
    signed_two_decimals(v)
}

fn signed_two_decimals(v: f64) -> String {
    let body = format!("{:.2}", v.abs());
    let (int, frac) = body.split_once('.').unwrap_or((&body, "00"));
    let mut grouped = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    let sign = if v < 0.0 && body.chars().any(|c| c.is_ascii_digit() && c != '0') { '-' } else { '+' };
    format!("{sign}{grouped}.{frac}")
}
