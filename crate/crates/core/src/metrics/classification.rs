use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::Label;

/// Decision thresholds of a precision/recall curve: 0.50 to 0.95 in steps
/// of 0.05.
pub const PR_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Counts with hate as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix {
            true_positive: tp,
            false_positive: fp,
            true_negative: tn,
            false_negative: fn_,
        }
    }

    /// From `(predicted, actual)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (pred, actual) in pairs {
            cm.record(pred, actual);
        }
        cm
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Hate, Label::Hate) => self.true_positive += 1,
            (Label::Hate, Label::NonHate) => self.false_positive += 1,
            (Label::NonHate, Label::NonHate) => self.true_negative += 1,
            (Label::NonHate, Label::Hate) => self.false_negative += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

/// Accuracy, precision, recall and F1. Undefined ratios are reported as 0
/// and flagged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate_precision: bool,
    pub degenerate_recall: bool,
    pub degenerate_f1: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    let tp = cm.true_positive;
    let (precision, degenerate_precision) = ratio(tp, tp + cm.false_positive);
    let (recall, degenerate_recall) = ratio(tp, tp + cm.false_negative);
    // 2PR/(P+R) rewritten as 2TP/(2TP+FP+FN): one rounding instead of four
    let (f1, degenerate_f1) = ratio(2 * tp, 2 * tp + cm.false_positive + cm.false_negative);
    Ok(ClassificationMetrics {
        accuracy: (tp + cm.true_negative) as f64 / total as f64,
        precision,
        recall,
        f1,
        degenerate_precision,
        degenerate_recall,
        degenerate_f1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Point at `threshold`, if it is one of [`PR_THRESHOLDS`].
    pub fn at(&self, threshold: f64) -> Option<&PrPoint> {
        self.points.iter().find(|p| (p.threshold - threshold).abs() < 1e-12)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["threshold", "precision", "recall"])?;
        for p in &self.points {
            out.write_record([format!("{:.2}", p.threshold), p.precision.to_string(), p.recall.to_string()])?;
        }
        out.flush()
    }
}

/// Precision and recall at each of [`PR_THRESHOLDS`], labeling hate when the
/// posterior is strictly above the threshold.
pub fn pr_curve(posteriors: &[(f64, Label)]) -> Result<PrCurve, MetricsError> {
    if posteriors.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let points = PR_THRESHOLDS
        .iter()
        .map(|&tau| {
            let cm = ConfusionMatrix::from_pairs(
                posteriors
                    .iter()
                    .map(|&(p, actual)| (if p > tau { Label::Hate } else { Label::NonHate }, actual)),
            );
            let m = classification_metrics(&cm).expect("non-empty");
            PrPoint {
                threshold: tau,
                precision: m.precision,
                recall: m.recall,
            }
        })
        .collect();
    Ok(PrCurve { points })
}
