//! Parameters, forward pass and backpropagation of the CNN-GRU network.
//!
//! Layout: embedding → (dropout) → valid 1-D convolution + ReLU →
//! non-overlapping max-pool → GRU → global max-pool over time → affine →
//! sigmoid. GRU update: `z = σ(W_z x + U_z h + b_z)`,
//! `r = σ(W_r x + U_r h + b_r)`, `ĥ = tanh(W_h x + U_h (r ⊙ h) + b_h)`,
//! `h' = z ⊙ h + (1 - z) ⊙ ĥ`, starting from `h = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::corpus::UNK;
use crate::seed::rng_from_seed;

pub const TENSOR_NAMES: [&str; 14] = [
    "embedding", "conv_w", "conv_b", "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h", "out_w", "out_b",
];

/// All trainable tensors, row-major.
///
/// Shapes: `embedding` V×E, `conv_w` F×K×E, `conv_b` F, `w_*` H×F,
/// `u_*` H×H, `b_*` H, `out_w` H, `out_b` 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub embedding: Vec<f64>,
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub w_z: Vec<f64>,
    pub u_z: Vec<f64>,
    pub b_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub u_r: Vec<f64>,
    pub b_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub u_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-s..s)).collect()
}

impl Params {
    /// Zero tensors with the shapes implied by `c`.
    pub fn zeros(c: &DetectorConfig) -> Self {
        let (v, e, f, k, h) = (c.vocab_size, c.embed_dim, c.filters, c.kernel, c.hidden);
        Params {
            embedding: vec![0.0; v * e],
            conv_w: vec![0.0; f * k * e],
            conv_b: vec![0.0; f],
            w_z: vec![0.0; h * f],
            u_z: vec![0.0; h * h],
            b_z: vec![0.0; h],
            w_r: vec![0.0; h * f],
            u_r: vec![0.0; h * h],
            b_r: vec![0.0; h],
            w_h: vec![0.0; h * f],
            u_h: vec![0.0; h * h],
            b_h: vec![0.0; h],
            out_w: vec![0.0; h],
            out_b: vec![0.0; 1],
        }
    }

    /// Glorot-uniform weights, uniform(±0.05) embeddings, zero biases. The
    /// `UNK` row starts at zero so unseen words carry no signal until the
    /// training data contains some.
    pub fn init(c: &DetectorConfig, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let (v, e, f, k, h) = (c.vocab_size, c.embed_dim, c.filters, c.kernel, c.hidden);
        let mut p = Params::zeros(c);
        p.embedding = (0..v * e).map(|_| rng.random_range(-0.05..0.05)).collect();
        let unk = UNK as usize * e;
        if unk + e <= p.embedding.len() {
            p.embedding[unk..unk + e].fill(0.0);
        }
        p.conv_w = glorot(&mut rng, k * e, f, f * k * e);
        p.w_z = glorot(&mut rng, f, h, h * f);
        p.u_z = glorot(&mut rng, h, h, h * h);
        p.w_r = glorot(&mut rng, f, h, h * f);
        p.u_r = glorot(&mut rng, h, h, h * h);
        p.w_h = glorot(&mut rng, f, h, h * f);
        p.u_h = glorot(&mut rng, h, h, h * h);
        p.out_w = glorot(&mut rng, h, 1, h);
        p
    }

    pub fn tensors(&self) -> [&Vec<f64>; 14] {
        [
            &self.embedding, &self.conv_w, &self.conv_b, &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r,
            &self.b_r, &self.w_h, &self.u_h, &self.b_h, &self.out_w, &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 14] {
        [
            &mut self.embedding, &mut self.conv_w, &mut self.conv_b, &mut self.w_z, &mut self.u_z, &mut self.b_z,
            &mut self.w_r, &mut self.u_r, &mut self.b_r, &mut self.w_h, &mut self.u_h, &mut self.b_h,
            &mut self.out_w, &mut self.out_b,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Gradient of the loss. The embedding gradient is kept as one row per
/// input position (duplicates allowed) instead of a dense V×E matrix.
#[derive(Clone, Debug)]
pub struct Gradients {
    /// Dense gradients; `embedding` is left empty.
    pub dense: Params,
    pub embedding_rows: Vec<(u32, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros(c: &DetectorConfig) -> Self {
        let mut dense = Params::zeros(&DetectorConfig { vocab_size: 0, ..c.clone() });
        dense.embedding.clear();
        Gradients {
            dense,
            embedding_rows: Vec::new(),
        }
    }

    /// Adds `other` into `self`, in order.
    pub fn accumulate(&mut self, other: Gradients) {
        for (dst, src) in self.dense.tensors_mut().into_iter().zip(other.dense.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += s;
            }
        }
        self.embedding_rows.extend(other.embedding_rows);
    }

    /// Dense V×E embedding gradient.
    pub fn embedding_dense(&self, vocab_size: usize, embed_dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab_size * embed_dim];
        for (row, g) in &self.embedding_rows {
            let base = *row as usize * embed_dim;
            for (o, x) in out[base..base + embed_dim].iter_mut().zip(g) {
                *o += x;
            }
        }
        out
    }
}

/// Activations kept for backpropagation.
pub struct Cache {
    ids: Vec<u32>,
    /// Embedded (and dropped-out) input, L×E.
    x: Vec<f64>,
    /// Dropout multipliers, L×E; empty when dropout is off.
    mask: Vec<f64>,
    /// Post-ReLU convolution output, T1×F.
    conv: Vec<f64>,
    /// Pooled sequence, T2×F, and the conv frame each value came from.
    pooled: Vec<f64>,
    pool_arg: Vec<usize>,
    /// GRU gates and states per step, T2×H each; `h` has T2+1 rows (h_0 = 0).
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    h: Vec<f64>,
    /// Global max over time per hidden unit and its step.
    global: Vec<f64>,
    global_arg: Vec<usize>,
    pub logit: f64,
    pub prob: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `out[i] += Σ_j m[i*cols + j] * v[j]`
fn matvec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(&m[i * cols..(i + 1) * cols], v);
    }
}

/// `out[j] += Σ_i m[i*cols + j] * v[i]`
fn matvec_t_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
            *o += w * vi;
        }
    }
}

/// `g[i*cols + j] += a[i] * b[j]`
fn outer_add(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (gij, bj) in g[i * cols..(i + 1) * cols].iter_mut().zip(b) {
            *gij += ai * bj;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the network on exactly `c.max_len` ids. `dropout_seed` is used only
/// when `c.dropout > 0` and `train_mode` is set.
pub fn forward(p: &Params, c: &DetectorConfig, ids: &[u32], train_mode: bool, dropout_seed: u64) -> Cache {
    let (e, f, k, h) = (c.embed_dim, c.filters, c.kernel, c.hidden);
    let l = ids.len();
    let t1 = l + 1 - k;
    let t2 = t1 / c.pool;

    let mut x = Vec::with_capacity(l * e);
    for &id in ids {
        let base = id as usize * e;
        x.extend_from_slice(&p.embedding[base..base + e]);
    }
    let mut mask = Vec::new();
    if train_mode && c.dropout > 0.0 {
        let keep = 1.0 - c.dropout;
        let mut rng = rng_from_seed(dropout_seed);
        mask = (0..l * e)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        for (xi, m) in x.iter_mut().zip(&mask) {
            *xi *= m;
        }
    }

    let window = k * e;
    let mut conv = vec![0.0; t1 * f];
    for t in 0..t1 {
        let input = &x[t * e..t * e + window];
        for fi in 0..f {
            let pre = p.conv_b[fi] + dot(&p.conv_w[fi * window..(fi + 1) * window], input);
            conv[t * f + fi] = pre.max(0.0);
        }
    }

    let mut pooled = vec![0.0; t2 * f];
    let mut pool_arg = vec![0usize; t2 * f];
    for s in 0..t2 {
        for fi in 0..f {
            let mut best = s * c.pool;
            for t in s * c.pool + 1..(s + 1) * c.pool {
                if conv[t * f + fi] > conv[best * f + fi] {
                    best = t;
                }
            }
            pooled[s * f + fi] = conv[best * f + fi];
            pool_arg[s * f + fi] = best;
        }
    }

    let mut z = vec![0.0; t2 * h];
    let mut r = vec![0.0; t2 * h];
    let mut cand = vec![0.0; t2 * h];
    let mut hs = vec![0.0; (t2 + 1) * h];
    let mut rh = vec![0.0; h];
    for s in 0..t2 {
        let xs = &pooled[s * f..(s + 1) * f];
        let (prev, next) = hs.split_at_mut((s + 1) * h);
        let h_prev = &prev[s * h..];
        let h_next = &mut next[..h];

        let zs = &mut z[s * h..(s + 1) * h];
        zs.copy_from_slice(&p.b_z);
        matvec_add(&p.w_z, xs, zs);
        matvec_add(&p.u_z, h_prev, zs);
        zs.iter_mut().for_each(|v| *v = sigmoid(*v));

        let rs = &mut r[s * h..(s + 1) * h];
        rs.copy_from_slice(&p.b_r);
        matvec_add(&p.w_r, xs, rs);
        matvec_add(&p.u_r, h_prev, rs);
        rs.iter_mut().for_each(|v| *v = sigmoid(*v));

        for j in 0..h {
            rh[j] = rs[j] * h_prev[j];
        }
        let cs = &mut cand[s * h..(s + 1) * h];
        cs.copy_from_slice(&p.b_h);
        matvec_add(&p.w_h, xs, cs);
        matvec_add(&p.u_h, &rh, cs);
        cs.iter_mut().for_each(|v| *v = v.tanh());

        for j in 0..h {
            h_next[j] = zs[j] * h_prev[j] + (1.0 - zs[j]) * cs[j];
        }
    }

    let mut global = vec![f64::NEG_INFINITY; h];
    let mut global_arg = vec![0usize; h];
    for s in 0..t2 {
        for j in 0..h {
            let v = hs[(s + 1) * h + j];
            if v > global[j] {
                global[j] = v;
                global_arg[j] = s;
            }
        }
    }
    let logit = p.out_b[0] + dot(&p.out_w, &global);
    Cache {
        ids: ids.to_vec(),
        x,
        mask,
        conv,
        pooled,
        pool_arg,
        z,
        r,
        cand,
        h: hs,
        global,
        global_arg,
        logit,
        prob: sigmoid(logit),
    }
}

/// Binary cross-entropy of `cache` against `target`, from the logit.
pub fn bce(cache: &Cache, target: f64) -> f64 {
    let z = cache.logit;
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - target * z
}

/// Backpropagates `d_logit` (the loss gradient w.r.t. the output logit)
/// through the cached forward pass.
pub fn backward(p: &Params, c: &DetectorConfig, cache: &Cache, d_logit: f64) -> Gradients {
    let (e, f, k, h) = (c.embed_dim, c.filters, c.kernel, c.hidden);
    let l = cache.ids.len();
    let t1 = l + 1 - k;
    let t2 = t1 / c.pool;
    let mut g = Gradients::zeros(c);
    let gd = &mut g.dense;

    gd.out_b[0] = d_logit;
    let mut dh = vec![0.0; t2 * h];
    for j in 0..h {
        gd.out_w[j] = d_logit * cache.global[j];
        dh[cache.global_arg[j] * h + j] += d_logit * p.out_w[j];
    }

    let mut d_pooled = vec![0.0; t2 * f];
    let mut carry = vec![0.0; h];
    let mut da_z = vec![0.0; h];
    let mut da_r = vec![0.0; h];
    let mut da_h = vec![0.0; h];
    let mut d_rh = vec![0.0; h];
    let mut rh = vec![0.0; h];
    for s in (0..t2).rev() {
        let h_prev = &cache.h[s * h..(s + 1) * h];
        let zs = &cache.z[s * h..(s + 1) * h];
        let rs = &cache.r[s * h..(s + 1) * h];
        let cs = &cache.cand[s * h..(s + 1) * h];
        let xs = &cache.pooled[s * f..(s + 1) * f];

        let mut d_prev = vec![0.0; h];
        for j in 0..h {
            let dt = dh[s * h + j] + carry[j];
            let dz = dt * (h_prev[j] - cs[j]);
            let dc = dt * (1.0 - zs[j]);
            d_prev[j] = dt * zs[j];
            da_z[j] = dz * zs[j] * (1.0 - zs[j]);
            da_h[j] = dc * (1.0 - cs[j] * cs[j]);
            rh[j] = rs[j] * h_prev[j];
        }
        d_rh.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_add(&p.u_h, &da_h, &mut d_rh);
        for j in 0..h {
            da_r[j] = d_rh[j] * h_prev[j] * rs[j] * (1.0 - rs[j]);
            d_prev[j] += d_rh[j] * rs[j];
        }

        outer_add(&mut gd.w_z, &da_z, xs);
        outer_add(&mut gd.u_z, &da_z, h_prev);
        outer_add(&mut gd.w_r, &da_r, xs);
        outer_add(&mut gd.u_r, &da_r, h_prev);
        outer_add(&mut gd.w_h, &da_h, xs);
        outer_add(&mut gd.u_h, &da_h, &rh);
        for j in 0..h {
            gd.b_z[j] += da_z[j];
            gd.b_r[j] += da_r[j];
            gd.b_h[j] += da_h[j];
        }
        matvec_t_add(&p.u_z, &da_z, &mut d_prev);
        matvec_t_add(&p.u_r, &da_r, &mut d_prev);

        let dx = &mut d_pooled[s * f..(s + 1) * f];
        matvec_t_add(&p.w_z, &da_z, dx);
        matvec_t_add(&p.w_r, &da_r, dx);
        matvec_t_add(&p.w_h, &da_h, dx);
        carry = d_prev;
    }

    // max-pool routes each gradient to its argmax frame; ReLU gates it
    let mut d_conv = vec![0.0; t1 * f];
    for (i, &d) in d_pooled.iter().enumerate() {
        let fi = i % f;
        let t = cache.pool_arg[i];
        if cache.conv[t * f + fi] > 0.0 {
            d_conv[t * f + fi] += d;
        }
    }

    let window = k * e;
    let mut dx = vec![0.0; l * e];
    for t in 0..t1 {
        let input = &cache.x[t * e..t * e + window];
        for fi in 0..f {
            let d = d_conv[t * f + fi];
            if d == 0.0 {
                continue;
            }
            gd.conv_b[fi] += d;
            let w_row = &p.conv_w[fi * window..(fi + 1) * window];
            for ((gw, xi), (dxi, w)) in gd.conv_w[fi * window..(fi + 1) * window]
                .iter_mut()
                .zip(input)
                .zip(dx[t * e..t * e + window].iter_mut().zip(w_row))
            {
                *gw += d * xi;
                *dxi += d * w;
            }
        }
    }
    if !cache.mask.is_empty() {
        for (d, m) in dx.iter_mut().zip(&cache.mask) {
            *d *= m;
        }
    }
    g.embedding_rows = cache
        .ids
        .iter()
        .enumerate()
        .filter_map(|(pos, &id)| {
            let row = dx[pos * e..(pos + 1) * e].to_vec();
            row.iter().any(|&v| v != 0.0).then_some((id, row))
        })
        .collect();
    g
}
