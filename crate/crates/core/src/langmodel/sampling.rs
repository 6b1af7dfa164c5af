use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GenerativeLM, LmError};
use crate::corpus::{Label, EOS};
use crate::parallel::with_jobs;
use crate::seed::{mix_seed, rng_from_seed};

/// Decoding parameters. Defaults are temperature 0.9, nucleus 0.9 and at
/// most 30 tokens per sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: 0.9,
            top_p: 0.9,
            max_tokens: 30,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LmError::InvalidSampler(format!("temperature {} must be > 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LmError::InvalidSampler(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(LmError::InvalidSampler("max_tokens must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplerConfig { seed, ..self.clone() }
    }
}

/// Applies temperature, then nucleus truncation, to a normalized
/// distribution.
///
/// Temperature raises each probability to `1/T` and renormalizes. The
/// nucleus keeps the smallest prefix of the descending order (ties by
/// index) whose mass reaches `top_p`. Dropped entries are zero in the output.
pub fn shape_distribution(dist: &[f64], temperature: f64, top_p: f64) -> Vec<f64> {
    let mut q = if temperature == 1.0 {
        dist.to_vec()
    } else {
        let max_ln = dist
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = dist
            .iter()
            .map(|&p| if p > 0.0 { ((p.ln() - max_ln) / temperature).exp() } else { 0.0 })
            .collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        w
    };
    if top_p >= 1.0 {
        return q;
    }

    let mut order: Vec<usize> = (0..q.len()).filter(|&i| q[i] > 0.0).collect();
    order.sort_unstable_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
    let mut cumulative = 0.0;
    let mut keep = order.len();
    for (rank, &i) in order.iter().enumerate() {
        cumulative += q[i];
        if cumulative >= top_p - 1e-12 {
            keep = rank + 1;
            break;
        }
    }
    let kept_mass: f64 = order[..keep].iter().map(|&i| q[i]).sum();
    for &i in &order[keep..] {
        q[i] = 0.0;
    }
    for &i in &order[..keep] {
        q[i] /= kept_mass;
    }
    q
}

/// Inverse-CDF draw of an index from a normalized distribution.
pub fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last_positive = i;
        if u < cumulative {
            return i;
        }
    }
    last_positive
}

/// Samples one sequence from the `BOS` context until `EOS` or
/// `config.max_tokens`. `EOS` is not part of the output.
pub fn sample_sequence(lm: &GenerativeLM, config: &SamplerConfig) -> Vec<String> {
    lm.vocabulary().decode(&sample_ids(lm, config))
}

pub(crate) fn sample_ids(lm: &GenerativeLM, config: &SamplerConfig) -> Vec<u32> {
    let mut rng = rng_from_seed(config.seed);
    let mut out = Vec::with_capacity(config.max_tokens);
    while out.len() < config.max_tokens {
        let shaped = shape_distribution(&lm.next_probs(&out), config.temperature, config.top_p);
        let id = lm.candidates()[draw_index(&shaped, &mut rng)];
        if id == EOS {
            break;
        }
        out.push(id);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSequence {
    pub tokens: Vec<String>,
    pub seed: u64,
    /// Class confidence assigned by a filter, once scored.
    pub confidence: Option<f64>,
}

impl GeneratedSequence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCorpus {
    pub source_dataset: String,
    pub class_label: Label,
    pub items: Vec<GeneratedSequence>,
}

impl GeneratedCorpus {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Samples `count` sequences; item `i` uses seed `mix_seed(config.seed, i)`,
/// so the corpus is identical for every `jobs` value.
pub fn generate_corpus(
    lm: &GenerativeLM,
    count: usize,
    config: &SamplerConfig,
    class_label: Label,
    jobs: usize,
) -> Result<GeneratedCorpus, LmError> {
    config.validate()?;
    let items = with_jobs(jobs, || {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = mix_seed(config.seed, i as u64);
                GeneratedSequence {
                    tokens: sample_sequence(lm, &config.with_seed(seed)),
                    seed,
                    confidence: None,
                }
            })
            .collect()
    });
    Ok(GeneratedCorpus {
        source_dataset: lm.source().to_owned(),
        class_label,
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, LabeledExample, Vocabulary};
    use crate::langmodel::train_lm;

    fn chain_lm() -> GenerativeLM {
        let d = Dataset::new("chain", vec![LabeledExample::new("a b c", Label::Hate, "chain")]);
        let v = Vocabulary::from_sequences(d.token_sequences(), 1);
        train_lm(&d, &v, 1, 1e-12).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn identity_shaping() {
        let p = [0.5, 0.3, 0.2];
        assert_eq!(shape_distribution(&p, 1.0, 1.0), p.to_vec());
    }

    #[test]
    fn nucleus_enumeration_example() {
        let out = shape_distribution(&[0.5, 0.3, 0.2], 1.0, 0.7);
        assert!(close(&out, &[0.625, 0.375, 0.0]));
        // ties broken by index
        let tie = shape_distribution(&[0.25, 0.25, 0.25, 0.25], 1.0, 0.5);
        assert!(close(&tie, &[0.5, 0.5, 0.0, 0.0]));
    }

    #[test]
    fn cold_temperature_concentrates_on_argmax() {
        let out = shape_distribution(&[0.2, 0.45, 0.35], 1e-6, 1.0);
        assert!(out[1] >= 1.0 - 1e-9);
    }

    #[test]
    fn temperature_matches_power_rule() {
        let p = [0.5, 0.3, 0.2];
        let t = 0.9;
        let w: Vec<f64> = p.iter().map(|x: &f64| x.powf(1.0 / t)).collect();
        let z: f64 = w.iter().sum();
        let expected: Vec<f64> = w.iter().map(|x| x / z).collect();
        assert!(close(&shape_distribution(&p, t, 1.0), &expected));
    }

    #[test]
    fn chain_model_is_deterministic() {
        let lm = chain_lm();
        for seed in 0..20 {
            let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
            assert_eq!(sample_sequence(&lm, &cfg), vec!["a", "b", "c"]);
        }
    }

    #[test]
    fn default_cap_and_seed_determinism() {
        let d = Dataset::new(
            "loop",
            vec![LabeledExample::new("x x x x x x x x x x y x x x x", Label::NonHate, "loop")],
        );
        let v = Vocabulary::from_sequences(d.token_sequences(), 1);
        let lm = train_lm(&d, &v, 1, 0.1).unwrap();
        for seed in 0..50 {
            let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
            let s = sample_sequence(&lm, &cfg);
            assert!(s.len() <= 30);
            assert_eq!(s, sample_sequence(&lm, &cfg));
        }
    }

    #[test]
    fn corpus_is_independent_of_jobs() {
        let lm = chain_lm();
        let d = Dataset::new(
            "mix",
            ["p q r", "q r p s", "s p", "r r q p"]
                .iter()
                .map(|t| LabeledExample::new(*t, Label::Hate, "mix"))
                .collect(),
        );
        let v = Vocabulary::from_sequences(d.token_sequences(), 1);
        let lm2 = train_lm(&d, &v, 2, 0.5).unwrap();
        let cfg = SamplerConfig { seed: 99, ..SamplerConfig::default() };
        let serial = generate_corpus(&lm2, 200, &cfg, Label::Hate, 1).unwrap();
        let parallel = generate_corpus(&lm2, 200, &cfg, Label::Hate, 4).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.len(), 200);
        assert_eq!(serial.source_dataset, "mix");
        assert_eq!(generate_corpus(&lm, 5, &cfg, Label::Hate, 0).unwrap().len(), 5);
    }

    #[test]
    fn invalid_sampler_is_rejected() {
        let lm = chain_lm();
        let bad = SamplerConfig { top_p: 0.0, ..SamplerConfig::default() };
        assert!(generate_corpus(&lm, 1, &bad, Label::Hate, 1).is_err());
        let bad = SamplerConfig { temperature: 0.0, ..SamplerConfig::default() };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn normalized() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..1.0, 1..12).prop_filter_map("non-zero mass", |w| {
                let z: f64 = w.iter().sum();
                (z > 1e-6).then(|| w.iter().map(|x| x / z).collect())
            })
        }

        proptest! {
            #[test]
            fn shaped_is_normalized_with_smaller_support(p in normalized(), t in 0.05f64..3.0, top_p in 0.01f64..=1.0) {
                let q = shape_distribution(&p, t, top_p);
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let support = |v: &[f64]| v.iter().filter(|&&x| x > 0.0).count();
                prop_assert!(support(&q) <= support(&p));
            }

            #[test]
            fn nucleus_is_monotone_in_top_p(p in normalized(), a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let small = shape_distribution(&p, 1.0, lo);
                let large = shape_distribution(&p, 1.0, hi);
                for i in 0..p.len() {
                    prop_assert!(small[i] == 0.0 || large[i] > 0.0);
                }
            }
        }
    }
}
