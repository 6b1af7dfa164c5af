//! Independent oracles shared by the integration tests and the acceptance
//! runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::Deserialize;

use synthaug::detector::network::{backward, bce, forward, Params};
use synthaug::detector::{DetectorConfig, TrainConfig};
use synthaug::metrics::relative_change;
use synthaug::pipeline::{Arm, ReportRow, RunProvenance, RunReport, Scope};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Every sequence over `0..alphabet` with length in `0..=max_len`, shortest
/// first.
pub fn all_sequences(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..alphabet).map(move |t| {
                    let mut next = s.clone();
                    next.push(t);
                    next
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn is_subsequence(needle: &[u8], hay: &[u8]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}

/// LCS by brute force: the longest subsequence of the shorter input that is
/// also a subsequence of the longer one.
pub fn lcs_oracle(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    let mut picked = Vec::with_capacity(short.len());
    for mask in 0u32..(1 << short.len()) {
        let bits = mask.count_ones() as usize;
        if bits <= best {
            continue;
        }
        picked.clear();
        picked.extend((0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| short[i]));
        if is_subsequence(&picked, long) {
            best = bits;
        }
    }
    best
}

fn exact(v: f64) -> Ratio<i128> {
    assert!(v.is_finite() && v >= 0.0);
    if v == 0.0 {
        return Ratio::from_integer(0);
    }
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mantissa = (bits & ((1 << 52) - 1)) | (1 << 52);
    let e = exp - 1075;
    assert!((-110..=60).contains(&e), "{v} is outside the exact range of the oracle");
    if e >= 0 {
        Ratio::from_integer((mantissa as i128) << e)
    } else {
        Ratio::new(mantissa as i128, 1i128 << -e)
    }
}

/// True when `v` is the double nearest to `num/den`.
pub fn is_nearest(v: f64, num: u64, den: u64) -> bool {
    if num == 0 || v == 0.0 {
        return num == 0 && v == 0.0;
    }
    let r = Ratio::new(num as i128, den as i128);
    let dist = |x: f64| {
        let d = exact(x) - r;
        if d < Ratio::from_integer(0) {
            -d
        } else {
            d
        }
    };
    let here = dist(v);
    let up = dist(v.next_up());
    let down = dist(v.next_down());
    here <= up && here <= down
}

/// The small network used for gradient checks.
pub fn tiny_config() -> DetectorConfig {
    DetectorConfig {
        vocab_size: 12,
        embed_dim: 4,
        dropout: 0.0,
        filters: 3,
        kernel: 2,
        pool: 2,
        hidden: 3,
        max_len: 6,
    }
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares backpropagated gradients of the BCE loss against central
/// differences with step `h`, for every scalar parameter.
pub fn gradcheck(c: &DetectorConfig, p: &Params, ids: &[u32], target: f64, dropout_seed: u64, h: f64) -> GradCheck {
    let train_mode = c.dropout > 0.0;
    let loss = |q: &Params| bce(&forward(q, c, ids, train_mode, dropout_seed), target);
    let cache = forward(p, c, ids, train_mode, dropout_seed);
    let grads = backward(p, c, &cache, cache.prob - target);
    let mut analytic: Vec<Vec<f64>> = grads.dense.tensors().iter().map(|t| t.to_vec()).collect();
    analytic[0] = grads.embedding_dense(c.vocab_size, c.embed_dim);

    let names = synthaug::detector::network::TENSOR_NAMES;
    let mut out = GradCheck {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut q = p.clone();
    for (t, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.len(), p.tensors()[t].len(), "{} gradient shape", names[t]);
        for (i, &g) in grad.iter().enumerate() {
            let orig = q.tensors()[t][i];
            q.tensors_mut()[t][i] = orig + h;
            let plus = loss(&q);
            q.tensors_mut()[t][i] = orig - h;
            let minus = loss(&q);
            q.tensors_mut()[t][i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-7);
            if rel > out.max_rel_err {
                out.max_rel_err = rel;
                out.worst = format!("{}[{i}]: analytic {g:e}, numeric {numeric:e}", names[t]);
            }
            out.checked += 1;
        }
    }
    out
}

#[derive(Debug, Deserialize)]
pub struct CrossFixtureRow {
    pub train_set: String,
    pub test_set: String,
    pub accuracy_baseline: f64,
    pub accuracy_augmented: f64,
    pub accuracy_change: String,
    pub precision_baseline: f64,
    pub precision_augmented: f64,
    pub precision_change: String,
    pub recall_baseline: f64,
    pub recall_augmented: f64,
    pub recall_change: String,
    pub f1_baseline: f64,
    pub f1_augmented: f64,
    pub f1_change: String,
}

impl CrossFixtureRow {
    pub fn baseline(&self) -> [f64; 4] {
        [self.accuracy_baseline, self.precision_baseline, self.recall_baseline, self.f1_baseline]
    }

    pub fn augmented(&self) -> [f64; 4] {
        [self.accuracy_augmented, self.precision_augmented, self.recall_augmented, self.f1_augmented]
    }

    /// Printed relative changes, parsed back to numbers.
    pub fn printed_changes(&self) -> [f64; 4] {
        [&self.accuracy_change, &self.precision_change, &self.recall_change, &self.f1_change]
            .map(|s| s.replace(',', "").parse().expect("numeric change"))
    }
}

pub fn cross_fixture() -> Vec<CrossFixtureRow> {
    csv::Reader::from_path(fixture("cross_table.csv"))
        .expect("fixture")
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("fixture rows")
}

fn report_row(train: &str, test: &str, arm: Arm, m: [f64; 4], base: Option<[f64; 4]>) -> ReportRow {
    let ch = |i: usize| base.and_then(|b| relative_change(b[i], m[i]).ok());
    ReportRow {
        scope: Scope::Cross,
        train_set: train.into(),
        test_set: test.into(),
        arm,
        accuracy: m[0],
        precision: m[1],
        recall: m[2],
        f1: m[3],
        change_accuracy: ch(0),
        change_precision: ch(1),
        change_recall: ch(2),
        change_f1: ch(3),
    }
}

/// A cross-dataset report holding the fixture's metric values.
pub fn fixture_report(rows: &[CrossFixtureRow]) -> RunReport {
    RunReport {
        rows: rows
            .iter()
            .flat_map(|r| {
                [
                    report_row(&r.train_set, &r.test_set, Arm::Baseline, r.baseline(), None),
                    report_row(&r.train_set, &r.test_set, Arm::Augmented, r.augmented(), Some(r.baseline())),
                ]
            })
            .collect(),
        pr_curves: Vec::new(),
        provenance: RunProvenance {
            master_seed: 0,
            threshold: 0.7,
            injection_cap: 100_000,
            vocab_min_count: 1,
            detector: DetectorConfig::default(),
            train: TrainConfig::default(),
            detector_seeds: BTreeMap::new(),
            training_sizes: BTreeMap::new(),
        },
    }
}
