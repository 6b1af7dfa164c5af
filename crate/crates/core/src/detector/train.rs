use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{self, Gradients, Params};
use super::{DetectorConfig, DetectorError, DetectorModel};
use crate::corpus::{Dataset, Vocabulary};
use crate::parallel::with_jobs;
use crate::seed::{derive_seed, mix_seed, rng_from_seed};

/// Examples per gradient partial sum. Fixed so that the summation order,
/// and therefore every bit of the result, does not depend on thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_owned()));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must be in [0, 1)");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub step: u64,
}

impl AdamState {
    pub fn new(like: &Params) -> Self {
        let mut zeros = like.clone();
        for t in zeros.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

fn adam_update(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], cfg: &TrainConfig, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One Adam step. `scratch` is a zeroed V×E buffer, returned zeroed.
fn adam_step(model: &mut DetectorModel, grads: &Gradients, scratch: &mut [f64], cfg: &TrainConfig) {
    let e = model.config.embed_dim;
    let adam = &mut model.adam;
    adam.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(adam.step as i32);
    let c2 = 1.0 - cfg.beta2.powi(adam.step as i32);

    for (row, g) in &grads.embedding_rows {
        let base = *row as usize * e;
        for (s, x) in scratch[base..base + e].iter_mut().zip(g) {
            *s += x;
        }
    }
    adam_update(&mut model.params.embedding, &mut adam.m.embedding, &mut adam.v.embedding, scratch, cfg, c1, c2);
    for (row, _) in &grads.embedding_rows {
        let base = *row as usize * e;
        scratch[base..base + e].iter_mut().for_each(|x| *x = 0.0);
    }

    let params = model.params.tensors_mut();
    let ms = adam.m.tensors_mut();
    let vs = adam.v.tensors_mut();
    let gs = grads.dense.tensors();
    for (i, (((p, m), v), g)) in params.into_iter().zip(ms).zip(vs).zip(gs).enumerate() {
        if i == 0 {
            continue;
        }
        adam_update(p, m, v, g, cfg, c1, c2);
    }
}

pub(crate) type Encoded = (Vec<u32>, f64);

/// Mean-BCE gradient over `batch`, with per-example dropout seeds.
pub(crate) fn batch_gradient(params: &Params, config: &DetectorConfig, batch: &[&Encoded], seeds: &[u64], train_mode: bool) -> (Gradients, Vec<f64>) {
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<(Gradients, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .zip(seeds.par_chunks(GRAD_CHUNK))
        .map(|(chunk, chunk_seeds)| {
            let mut acc = Gradients::zeros(config);
            let mut losses = Vec::with_capacity(chunk.len());
            for ((ids, y), &seed) in chunk.iter().map(|e| (&e.0, e.1)).zip(chunk_seeds) {
                let cache = network::forward(params, config, ids, train_mode, seed);
                losses.push(network::bce(&cache, y));
                acc.accumulate(network::backward(params, config, &cache, (cache.prob - y) * scale));
            }
            (acc, losses)
        })
        .collect();
    let mut total = Gradients::zeros(config);
    let mut losses = Vec::with_capacity(batch.len());
    for (g, l) in partials {
        total.accumulate(g);
        losses.extend(l);
    }
    (total, losses)
}

/// Order-independent sum: values are sorted before adding.
fn stable_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn encoded_loss(model: &DetectorModel, data: &[&Encoded]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let losses: Vec<f64> = data
        .par_iter()
        .map(|(ids, y)| network::bce(&network::forward(&model.params, &model.config, ids, false, 0), *y))
        .collect();
    stable_sum(losses) / data.len() as f64
}

/// Mean binary cross-entropy of `model` on `data` (dropout off). The result
/// does not depend on example order.
pub fn evaluate_loss(model: &DetectorModel, data: &Dataset) -> f64 {
    let encoded: Vec<Encoded> = data
        .examples
        .iter()
        .map(|e| (model.encode_text(&e.text), e.label.target()))
        .collect();
    encoded_loss(model, &encoded.iter().collect::<Vec<_>>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_examples: usize,
    pub validation_examples: usize,
}

/// CSV with columns `epoch,train_loss,val_loss`.
pub fn write_history_csv<W: Write>(history: &TrainingHistory, mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss")?;
    for r in &history.epochs {
        writeln!(w, "{},{},{}", r.epoch, r.train_loss, r.val_loss)?;
    }
    Ok(())
}

/// Mini-batch Adam on binary cross-entropy with early stopping on a
/// seed-keyed validation slice. Returns the best-validation parameters.
pub fn train_detector(
    train: &Dataset,
    vocab: &Vocabulary,
    dcfg: &DetectorConfig,
    tcfg: &TrainConfig,
    jobs: usize,
) -> Result<(DetectorModel, TrainingHistory), DetectorError> {
    train.ensure_no_test_side("train_detector")?;
    if !train.has_both_classes() {
        return Err(DetectorError::SingleClassCorpus(train.name.clone()));
    }
    tcfg.validate()?;
    let mut model = DetectorModel::new(dcfg.clone(), vocab.clone(), derive_seed(tcfg.seed, "init"))?;

    let encoded: Vec<Encoded> = train
        .examples
        .iter()
        .map(|e| (model.encode_text(&e.text), e.label.target()))
        .collect();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(tcfg.seed, "validation")));
    let n_val = if tcfg.validation_fraction > 0.0 {
        ((tcfg.validation_fraction * encoded.len() as f64).round() as usize).clamp(1, encoded.len() - 1)
    } else {
        0
    };
    let val: Vec<&Encoded> = order[..n_val].iter().map(|&i| &encoded[i]).collect();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    train_idx.sort_unstable();
    // without a validation slice the training set itself is monitored
    let monitor: Vec<&Encoded> = if val.is_empty() {
        train_idx.iter().map(|&i| &encoded[i]).collect()
    } else {
        val
    };

    let dropout_base = derive_seed(tcfg.seed, "dropout");
    let shuffle_base = derive_seed(tcfg.seed, "shuffle");
    let mut scratch = vec![0.0; model.params.embedding.len()];
    let mut history = TrainingHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        train_examples: train_idx.len(),
        validation_examples: n_val,
    };
    let mut best: Option<(f64, Params, super::AdamState)> = None;
    let mut since_best = 0;

    with_jobs(jobs, || -> Result<(), DetectorError> {
        for epoch in 1..=tcfg.max_epochs {
            let mut idx = train_idx.clone();
            idx.shuffle(&mut rng_from_seed(mix_seed(shuffle_base, epoch as u64)));
            let epoch_seed = mix_seed(dropout_base, epoch as u64);
            let mut epoch_losses = Vec::with_capacity(idx.len());
            for (b, batch_idx) in idx.chunks(tcfg.batch_size).enumerate() {
                let batch: Vec<&Encoded> = batch_idx.iter().map(|&i| &encoded[i]).collect();
                let seeds: Vec<u64> = (0..batch.len())
                    .map(|j| mix_seed(epoch_seed, (b * tcfg.batch_size + j) as u64))
                    .collect();
                let (grads, losses) = batch_gradient(&model.params, &model.config, &batch, &seeds, true);
                adam_step(&mut model, &grads, &mut scratch, tcfg);
                if !model.params.all_finite() {
                    return Err(DetectorError::NonFinite(model.adam.step as usize));
                }
                epoch_losses.extend(losses);
            }
            let train_loss = stable_sum(epoch_losses) / idx.len().max(1) as f64;
            let val_loss = encoded_loss(&model, &monitor);
            history.epochs.push(EpochRecord {
                epoch,
                train_loss,
                val_loss,
            });
            log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");

            if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
                best = Some((val_loss, model.params.clone(), model.adam.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= tcfg.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
        Ok(())
    })?;

    if let Some((_, params, adam)) = best {
        model.params = params;
        model.adam = adam;
    }
    Ok((model, history))
}
