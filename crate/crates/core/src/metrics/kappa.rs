use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    /// `None` when expected agreement is 1 and kappa is undefined.
    pub kappa: Option<f64>,
    pub per_item_agreement: Vec<f64>,
    pub mean_agreement: f64,
    pub expected_agreement: f64,
    pub category_proportions: Vec<f64>,
    pub items: usize,
    pub raters_per_item: u32,
    pub degenerate: bool,
    pub interpretation: String,
}

/// Verbal band for a kappa value.
pub fn interpret_kappa(kappa: f64) -> &'static str {
    match kappa {
        k if k < 0.0 => "poor",
        k if k <= 0.20 => "slight",
        k if k <= 0.40 => "fair",
        k if k <= 0.60 => "moderate",
        k if k <= 0.80 => "strong",
        _ => "almost perfect",
    }
}

/// Fleiss' kappa over an item × category count matrix where every row sums
/// to `raters`.
pub fn fleiss_kappa(ratings: &[Vec<u32>], raters: u32) -> Result<KappaReport, MetricsError> {
    if raters < 2 {
        return Err(MetricsError::TooFewRaters(raters));
    }
    if ratings.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let categories = ratings.iter().map(Vec::len).max().unwrap_or(0);
    for (row, r) in ratings.iter().enumerate() {
        let sum: u32 = r.iter().sum();
        if sum != raters {
            return Err(MetricsError::RowSumMismatch { row, sum, expected: raters });
        }
    }
    let n = raters as f64;
    let items = ratings.len();
    let per_item_agreement: Vec<f64> = ratings
        .iter()
        .map(|r| {
            let sq: u64 = r.iter().map(|&c| c as u64 * c as u64).sum();
            (sq as f64 - n) / (n * (n - 1.0))
        })
        .collect();
    let mean_agreement = per_item_agreement.iter().sum::<f64>() / items as f64;
    let total = items as f64 * n;
    let category_proportions: Vec<f64> = (0..categories)
        .map(|j| ratings.iter().map(|r| r.get(j).copied().unwrap_or(0) as u64).sum::<u64>() as f64 / total)
        .collect();
    let expected_agreement: f64 = category_proportions.iter().map(|p| p * p).sum();
    let degenerate = expected_agreement >= 1.0;
    let kappa = (!degenerate).then(|| (mean_agreement - expected_agreement) / (1.0 - expected_agreement));
    let interpretation = match kappa {
        Some(k) => interpret_kappa(k).to_owned(),
        None => "undefined".to_owned(),
    };
    Ok(KappaReport {
        kappa,
        per_item_agreement,
        mean_agreement,
        expected_agreement,
        category_proportions,
        items,
        raters_per_item: raters,
        degenerate,
        interpretation,
    })
}
