//! Encoder-decoder forward pass with exact reverse-mode gradients.
//!
//! Post-norm Transformer blocks: multi-head attention and position-wise FFN
//! sublayers, each wrapped as `LayerNorm(x + Dropout(sublayer(x)))`, with
//! sinusoidal positional encoding, a causal mask on decoder self-attention
//! and encoder-decoder cross-attention. The backward pass walks cached
//! activations in reverse; there is no autodiff tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::params::ParameterSet;
use super::tensor::{dot, gemm_nn, gemm_tn};
use super::vocab::{BOS, EOS, PAD};
use super::{ModelConfig, ModelError};

/// One training pair of token ids; `tgt` carries neither BOS nor EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

/// Token-summed cross-entropy in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub token_count: usize,
    pub mean: f64,
}

impl LossValue {
    fn from_total(total: f64, token_count: usize) -> Self {
        LossValue {
            total,
            token_count,
            mean: total / token_count as f64,
        }
    }

    pub fn perplexity(&self) -> f64 {
        self.mean.exp()
    }
}

/// Deterministic dropout for one optimizer step. Masks depend only on
/// (seed, sample index within the batch), never on thread scheduling.
#[derive(Debug, Clone, Copy)]
pub struct DropoutPlan {
    pub rate: f64,
    pub seed: u64,
}

/// Samples per gradient work unit. Chunk results reduce in chunk order, so
/// gradients are identical for any worker-thread count.
const GRAD_CHUNK: usize = 4;

pub fn sinusoidal_position(pos: usize, d: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), d);
    thread_local! {
        static RATES: std::cell::RefCell<std::collections::HashMap<usize, Vec<f64>>> =
            std::cell::RefCell::new(std::collections::HashMap::new());
    }
    RATES.with(|cell| {
        let mut map = cell.borrow_mut();
        let rates = map.entry(d).or_insert_with(|| {
            (0..d)
                .step_by(2)
                .map(|i| 1.0 / 10000f64.powf(i as f64 / d as f64))
                .collect()
        });
        for (slot, &rate) in rates.iter().enumerate() {
            let i = slot * 2;
            let angle = pos as f64 * rate;
            out[i] += angle.sin();
            if i + 1 < d {
                out[i + 1] += angle.cos();
            }
        }
    });
}

pub fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &x in row {
        sum += (x - max).exp();
    }
    let lse = max + sum.ln();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}

fn check_ids(cfg: &ModelConfig, ids: &[usize]) {
    debug_assert!(
        ids.iter().all(|&i| i < cfg.vocab_size),
        "token id out of vocabulary range"
    );
}

fn check_len(cfg: &ModelConfig, len: usize) -> Result<(), ModelError> {
    if len > cfg.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len,
            max: cfg.max_seq_len,
        });
    }
    Ok(())
}

/// Transposed copies of every 2-D weight matrix the backward pass multiplies
/// by, built once per batch and shared read-only across samples.
struct TransposedWeights {
    map: std::collections::HashMap<String, Vec<f64>>,
}

impl TransposedWeights {
    fn build(params: &ParameterSet) -> Self {
        let mut map = std::collections::HashMap::new();
        for (name, t) in params.iter() {
            if t.shape().len() != 2 || name == "embed.tok" {
                continue;
            }
            let (r, c) = (t.shape()[0], t.shape()[1]);
            let src = t.data();
            let mut out = vec![0.0f64; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = src[i * c + j];
                }
            }
            map.insert(name.clone(), out);
        }
        TransposedWeights { map }
    }

    fn get(&self, name: &str) -> &[f64] {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing transposed weight {name}"))
    }
}

// ---------------------------------------------------------------------------
// Caches
// ---------------------------------------------------------------------------

struct AttnCache {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// [heads][tq][tk], masked entries zero.
    probs: Vec<f64>,
    ctx: Vec<f64>,
}

struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct FfnCache {
    pre: Vec<f64>,
    act: Vec<f64>,
}

type DropMask = Option<Vec<f64>>;

struct BlockCache {
    x_in: Vec<f64>,
    attn: AttnCache,
    attn_drop: DropMask,
    ln1: LnCache,
    x_mid: Vec<f64>,
    // Decoder-only cross-attention stage.
    cross: Option<(AttnCache, DropMask, LnCache, Vec<f64>)>,
    ffn: FfnCache,
    ffn_drop: DropMask,
    ln_f: LnCache,
    x_out: Vec<f64>,
}

struct SampleCache {
    src: Vec<usize>,
    tgt_in: Vec<usize>,
    enc_embed_drop: DropMask,
    enc_layers: Vec<BlockCache>,
    dec_embed_drop: DropMask,
    dec_layers: Vec<BlockCache>,
    logits: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Forward pieces
// ---------------------------------------------------------------------------

fn embed(
    params: &ParameterSet,
    cfg: &ModelConfig,
    ids: &[usize],
    rng: Option<&mut ChaCha20Rng>,
    rate: f64,
) -> (Vec<f64>, DropMask) {
    let d = cfg.model_dim;
    let table = params.get("embed.tok").data();
    let scale = (d as f64).sqrt();
    let mut x = vec![0.0f64; ids.len() * d];
    for (t, &id) in ids.iter().enumerate() {
        let row = &mut x[t * d..(t + 1) * d];
        for (o, e) in row.iter_mut().zip(&table[id * d..(id + 1) * d]) {
            *o = e * scale;
        }
        sinusoidal_position(t, d, row);
    }
    let mask = apply_dropout(&mut x, rng, rate);
    (x, mask)
}

fn apply_dropout(x: &mut [f64], rng: Option<&mut ChaCha20Rng>, rate: f64) -> DropMask {
    let rng = rng?;
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    for (xi, m) in x.iter_mut().zip(&mask) {
        *xi *= m;
    }
    Some(mask)
}

fn layer_norm(
    x: &[f64],
    rows: usize,
    d: usize,
    scale: &[f64],
    offset: &[f64],
    eps: f64,
) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0f64; rows * d];
    let mut xhat = vec![0.0f64; rows * d];
    let mut inv_std = vec![0.0f64; rows];
    for t in 0..rows {
        let row = &x[t * d..(t + 1) * d];
        let mut mean = 0.0;
        for &v in row {
            mean += v;
        }
        mean /= d as f64;
        let mut var = 0.0;
        for &v in row {
            var += (v - mean) * (v - mean);
        }
        var /= d as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[t] = istd;
        for j in 0..d {
            let xh = (row[j] - mean) * istd;
            xhat[t * d + j] = xh;
            y[t * d + j] = xh * scale[j] + offset[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn attention(
    params: &ParameterSet,
    cfg: &ModelConfig,
    prefix: &str,
    q_in: &[f64],
    tq: usize,
    kv_in: &[f64],
    tk: usize,
    causal: bool,
) -> (Vec<f64>, AttnCache) {
    let d = cfg.model_dim;
    let heads = cfg.num_heads;
    let dk = cfg.head_dim();
    let rsqrt = 1.0 / (dk as f64).sqrt();

    let mut q = vec![0.0f64; tq * d];
    let mut k = vec![0.0f64; tk * d];
    let mut v = vec![0.0f64; tk * d];
    gemm_nn(tq, d, d, q_in, params.get(&format!("{prefix}.wq")).data(), &mut q);
    gemm_nn(tk, d, d, kv_in, params.get(&format!("{prefix}.wk")).data(), &mut k);
    gemm_nn(tk, d, d, kv_in, params.get(&format!("{prefix}.wv")).data(), &mut v);

    let mut probs = vec![0.0f64; heads * tq * tk];
    let mut ctx = vec![0.0f64; tq * d];
    let mut scores = vec![0.0f64; tk];
    for h in 0..heads {
        let hoff = h * dk;
        for t in 0..tq {
            let visible = if causal { t + 1 } else { tk };
            let qrow = &q[t * d + hoff..t * d + hoff + dk];
            for u in 0..visible {
                scores[u] = dot(qrow, &k[u * d + hoff..u * d + hoff + dk]) * rsqrt;
            }
            let prow = &mut probs[(h * tq + t) * tk..(h * tq + t) * tk + tk];
            softmax_into(&scores[..visible], &mut prow[..visible]);
            let crow = &mut ctx[t * d + hoff..t * d + hoff + dk];
            for (u, &p) in prow[..visible].iter().enumerate() {
                let vrow = &v[u * d + hoff..u * d + hoff + dk];
                for (c, &vv) in crow.iter_mut().zip(vrow) {
                    *c += p * vv;
                }
            }
        }
    }

    let mut out = vec![0.0f64; tq * d];
    gemm_nn(tq, d, d, &ctx, params.get(&format!("{prefix}.wo")).data(), &mut out);
    (out, AttnCache { q, k, v, probs, ctx })
}

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        let e = (s - max).exp();
        *o = e;
        sum += e;
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

fn ffn(
    params: &ParameterSet,
    cfg: &ModelConfig,
    prefix: &str,
    x: &[f64],
    t: usize,
) -> (Vec<f64>, FfnCache) {
    let d = cfg.model_dim;
    let f = cfg.ffn_dim;
    let w1 = params.get(&format!("{prefix}.w1")).data();
    let b1 = params.get(&format!("{prefix}.b1")).data();
    let w2 = params.get(&format!("{prefix}.w2")).data();
    let b2 = params.get(&format!("{prefix}.b2")).data();

    let mut pre = vec![0.0f64; t * f];
    for row in 0..t {
        pre[row * f..(row + 1) * f].copy_from_slice(b1);
    }
    gemm_nn(t, d, f, x, w1, &mut pre);
    let act: Vec<f64> = pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let mut out = vec![0.0f64; t * d];
    for row in 0..t {
        out[row * d..(row + 1) * d].copy_from_slice(b2);
    }
    gemm_nn(t, f, d, &act, w2, &mut out);
    (out, FfnCache { pre, act })
}

fn block_forward(
    params: &ParameterSet,
    cfg: &ModelConfig,
    side: &str,
    layer: usize,
    x: Vec<f64>,
    t: usize,
    enc_out: Option<(&[f64], usize)>,
    rng: &mut Option<&mut ChaCha20Rng>,
) -> BlockCache {
    let d = cfg.model_dim;
    let eps = cfg.layernorm_eps;
    let rate = cfg.dropout_rate;
    let p = |name: &str| format!("{side}{layer}.{name}");
    let causal = side == "dec";

    let (mut attn_out, attn) = attention(params, cfg, &p("sa"), &x, t, &x, t, causal);
    let attn_drop = apply_dropout(&mut attn_out, rng.as_deref_mut(), rate);
    let mut res1 = x.clone();
    for (r, a) in res1.iter_mut().zip(&attn_out) {
        *r += a;
    }
    let (x_mid, ln1) = layer_norm(
        &res1,
        t,
        d,
        params.get(&p("ln1.scale")).data(),
        params.get(&p("ln1.offset")).data(),
        eps,
    );

    let (ffn_input, cross) = if let Some((enc, s)) = enc_out {
        let (mut ca_out, ca) = attention(params, cfg, &p("ca"), &x_mid, t, enc, s, false);
        let ca_drop = apply_dropout(&mut ca_out, rng.as_deref_mut(), rate);
        let mut res2 = x_mid.clone();
        for (r, a) in res2.iter_mut().zip(&ca_out) {
            *r += a;
        }
        let (x2, ln2) = layer_norm(
            &res2,
            t,
            d,
            params.get(&p("ln2.scale")).data(),
            params.get(&p("ln2.offset")).data(),
            eps,
        );
        let _ = res2;
        (x2.clone(), Some((ca, ca_drop, ln2, x2)))
    } else {
        (x_mid.clone(), None)
    };

    let (mut ffn_out, ffn_cache) = ffn(params, cfg, &p("ffn"), &ffn_input, t);
    let ffn_drop = apply_dropout(&mut ffn_out, rng.as_deref_mut(), rate);
    let mut res_f = ffn_input;
    for (r, a) in res_f.iter_mut().zip(&ffn_out) {
        *r += a;
    }
    let ln_f_name = if causal { "ln3" } else { "ln2" };
    let (x_out, ln_f) = layer_norm(
        &res_f,
        t,
        d,
        params.get(&p(&format!("{ln_f_name}.scale"))).data(),
        params.get(&p(&format!("{ln_f_name}.offset"))).data(),
        eps,
    );

    BlockCache {
        x_in: x,
        attn,
        attn_drop,
        ln1,
        x_mid,
        cross,
        ffn: ffn_cache,
        ffn_drop,
        ln_f,
        x_out,
    }
}

fn forward_sample(
    params: &ParameterSet,
    cfg: &ModelConfig,
    src: &[usize],
    tgt_in: &[usize],
    mut rng: Option<&mut ChaCha20Rng>,
) -> Result<SampleCache, ModelError> {
    check_len(cfg, src.len())?;
    check_len(cfg, tgt_in.len())?;
    check_ids(cfg, src);
    check_ids(cfg, tgt_in);
    let d = cfg.model_dim;
    let rate = cfg.dropout_rate;

    let (enc_x, enc_embed_drop) = embed(params, cfg, src, rng.as_deref_mut(), rate);
    let mut x = enc_x;
    let mut enc_layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let cache = block_forward(params, cfg, "enc", l, x, src.len(), None, &mut rng);
        x = cache.x_out.clone();
        enc_layers.push(cache);
    }
    let enc_out = x;

    let (dec_x, dec_embed_drop) = embed(params, cfg, tgt_in, rng.as_deref_mut(), rate);
    let mut y = dec_x;
    let mut dec_layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let cache = block_forward(
            params,
            cfg,
            "dec",
            l,
            y,
            tgt_in.len(),
            Some((&enc_out, src.len())),
            &mut rng,
        );
        y = cache.x_out.clone();
        dec_layers.push(cache);
    }

    let v = cfg.vocab_size;
    let t = tgt_in.len();
    let mut logits = vec![0.0f64; t * v];
    let out_b = params.get("out.b").data();
    for row in 0..t {
        logits[row * v..(row + 1) * v].copy_from_slice(out_b);
    }
    gemm_nn(t, d, v, &y, params.get("out.w").data(), &mut logits);

    Ok(SampleCache {
        src: src.to_vec(),
        tgt_in: tgt_in.to_vec(),
        enc_embed_drop,
        enc_layers,
        dec_embed_drop,
        dec_layers,
        logits,
    })
}

/// Evaluation-mode forward: logits for every target position, dropout off,
/// bitwise deterministic for fixed inputs and parameters.
pub fn forward(
    params: &ParameterSet,
    cfg: &ModelConfig,
    src: &[usize],
    tgt_in: &[usize],
) -> Result<Vec<f64>, ModelError> {
    Ok(forward_sample(params, cfg, src, tgt_in, None)?.logits)
}

// ---------------------------------------------------------------------------
// Backward pieces
// ---------------------------------------------------------------------------

fn layer_norm_bwd(
    grads: &mut ParameterSet,
    scale_name: &str,
    offset_name: &str,
    scale: &[f64],
    cache: &LnCache,
    dy: &[f64],
    rows: usize,
    d: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0f64; rows * d];
    {
        let dscale = grads.get_mut(scale_name).data_mut();
        for t in 0..rows {
            let dyr = &dy[t * d..(t + 1) * d];
            let xhr = &cache.xhat[t * d..(t + 1) * d];
            for j in 0..d {
                dscale[j] += dyr[j] * xhr[j];
            }
        }
    }
    {
        let doffset = grads.get_mut(offset_name).data_mut();
        for t in 0..rows {
            let dyr = &dy[t * d..(t + 1) * d];
            for j in 0..d {
                doffset[j] += dyr[j];
            }
        }
    }
    for t in 0..rows {
        let dyr = &dy[t * d..(t + 1) * d];
        let xhr = &cache.xhat[t * d..(t + 1) * d];
        let istd = cache.inv_std[t];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            let dxh = dyr[j] * scale[j];
            m1 += dxh;
            m2 += dxh * xhr[j];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let dxr = &mut dx[t * d..(t + 1) * d];
        for j in 0..d {
            let dxh = dyr[j] * scale[j];
            dxr[j] = istd * (dxh - m1 - xhr[j] * m2);
        }
    }
    dx
}

fn drop_bwd(dy: &mut [f64], mask: &DropMask) {
    if let Some(m) = mask {
        for (d, &f) in dy.iter_mut().zip(m) {
            *d *= f;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_bwd(
    wt: &TransposedWeights,
    grads: &mut ParameterSet,
    cfg: &ModelConfig,
    prefix: &str,
    cache: &AttnCache,
    q_in: &[f64],
    tq: usize,
    kv_in: &[f64],
    tk: usize,
    causal: bool,
    d_out: &[f64],
    d_q_in: &mut [f64],
    d_kv_in: &mut [f64],
) {
    let d = cfg.model_dim;
    let heads = cfg.num_heads;
    let dk = cfg.head_dim();
    let rsqrt = 1.0 / (dk as f64).sqrt();

    // Output projection.
    gemm_tn(
        tq,
        d,
        d,
        &cache.ctx,
        d_out,
        grads.get_mut(&format!("{prefix}.wo")).data_mut(),
    );
    let mut d_ctx = vec![0.0f64; tq * d];
    gemm_nn(tq, d, d, d_out, wt.get(&format!("{prefix}.wo")), &mut d_ctx);

    let mut dq = vec![0.0f64; tq * d];
    let mut dk_ = vec![0.0f64; tk * d];
    let mut dv = vec![0.0f64; tk * d];
    let mut d_probs = vec![0.0f64; tk];
    for h in 0..heads {
        let hoff = h * dk;
        for t in 0..tq {
            let visible = if causal { t + 1 } else { tk };
            let prow = &cache.probs[(h * tq + t) * tk..(h * tq + t) * tk + tk];
            let dctx_row = &d_ctx[t * d + hoff..t * d + hoff + dk];
            // Gradients into values and attention probabilities.
            for u in 0..visible {
                d_probs[u] = dot(dctx_row, &cache.v[u * d + hoff..u * d + hoff + dk]);
                let dvrow = &mut dv[u * d + hoff..u * d + hoff + dk];
                let p = prow[u];
                for (dv_j, &dc) in dvrow.iter_mut().zip(dctx_row) {
                    *dv_j += p * dc;
                }
            }
            // Softmax backward.
            let mut inner = 0.0;
            for u in 0..visible {
                inner += prow[u] * d_probs[u];
            }
            let qrow = &cache.q[t * d + hoff..t * d + hoff + dk];
            let dqrow = &mut dq[t * d + hoff..t * d + hoff + dk];
            for u in 0..visible {
                let dscore = prow[u] * (d_probs[u] - inner) * rsqrt;
                let krow = &cache.k[u * d + hoff..u * d + hoff + dk];
                for (dq_j, &kv) in dqrow.iter_mut().zip(krow) {
                    *dq_j += dscore * kv;
                }
                let dkrow = &mut dk_[u * d + hoff..u * d + hoff + dk];
                for (dk_j, &qv) in dkrow.iter_mut().zip(qrow) {
                    *dk_j += dscore * qv;
                }
            }
        }
    }

    // Projections back to the inputs.
    gemm_tn(
        tq,
        d,
        d,
        q_in,
        &dq,
        grads.get_mut(&format!("{prefix}.wq")).data_mut(),
    );
    gemm_nn(tq, d, d, &dq, wt.get(&format!("{prefix}.wq")), d_q_in);
    gemm_tn(
        tk,
        d,
        d,
        kv_in,
        &dk_,
        grads.get_mut(&format!("{prefix}.wk")).data_mut(),
    );
    gemm_nn(tk, d, d, &dk_, wt.get(&format!("{prefix}.wk")), d_kv_in);
    gemm_tn(
        tk,
        d,
        d,
        kv_in,
        &dv,
        grads.get_mut(&format!("{prefix}.wv")).data_mut(),
    );
    gemm_nn(tk, d, d, &dv, wt.get(&format!("{prefix}.wv")), d_kv_in);
}

#[allow(clippy::too_many_arguments)]
fn ffn_bwd(
    wt: &TransposedWeights,
    grads: &mut ParameterSet,
    cfg: &ModelConfig,
    prefix: &str,
    cache: &FfnCache,
    x: &[f64],
    t: usize,
    d_out: &[f64],
) -> Vec<f64> {
    let d = cfg.model_dim;
    let f = cfg.ffn_dim;

    // Second linear.
    gemm_tn(
        t,
        f,
        d,
        &cache.act,
        d_out,
        grads.get_mut(&format!("{prefix}.w2")).data_mut(),
    );
    {
        let db2 = grads.get_mut(&format!("{prefix}.b2")).data_mut();
        for row in 0..t {
            for j in 0..d {
                db2[j] += d_out[row * d + j];
            }
        }
    }
    let mut d_act = vec![0.0f64; t * f];
    gemm_nn(t, d, f, d_out, wt.get(&format!("{prefix}.w2")), &mut d_act);
    // ReLU.
    for (da, &pre) in d_act.iter_mut().zip(&cache.pre) {
        if pre <= 0.0 {
            *da = 0.0;
        }
    }
    // First linear.
    gemm_tn(
        t,
        d,
        f,
        x,
        &d_act,
        grads.get_mut(&format!("{prefix}.w1")).data_mut(),
    );
    {
        let db1 = grads.get_mut(&format!("{prefix}.b1")).data_mut();
        for row in 0..t {
            for j in 0..f {
                db1[j] += d_act[row * f + j];
            }
        }
    }
    let mut dx = vec![0.0f64; t * d];
    gemm_nn(t, f, d, &d_act, wt.get(&format!("{prefix}.w1")), &mut dx);
    dx
}

/// Returns d(x_in) and, for decoder blocks, accumulates d(enc_out) into
/// `d_enc`.
#[allow(clippy::too_many_arguments)]
fn block_bwd(
    params: &ParameterSet,
    wt: &TransposedWeights,
    grads: &mut ParameterSet,
    cfg: &ModelConfig,
    side: &str,
    layer: usize,
    cache: &BlockCache,
    t: usize,
    enc: Option<(&[f64], usize, &mut [f64])>,
    d_x_out: &[f64],
) -> Vec<f64> {
    let d = cfg.model_dim;
    let p = |name: &str| format!("{side}{layer}.{name}");
    let causal = side == "dec";
    let ln_f_name = if causal { "ln3" } else { "ln2" };

    // Final LayerNorm of the block.
    let d_res_f = layer_norm_bwd(
        grads,
        &p(&format!("{ln_f_name}.scale")),
        &p(&format!("{ln_f_name}.offset")),
        params.get(&p(&format!("{ln_f_name}.scale"))).data(),
        &cache.ln_f,
        d_x_out,
        t,
        d,
    );

    // res_f = ffn_input + drop(ffn(ffn_input))
    let ffn_input: &[f64] = match &cache.cross {
        Some((_, _, _, x2)) => x2,
        None => &cache.x_mid,
    };
    let mut d_ffn_out = d_res_f.clone();
    drop_bwd(&mut d_ffn_out, &cache.ffn_drop);
    let mut d_ffn_input = ffn_bwd(
        wt, grads, cfg, &p("ffn"), &cache.ffn, ffn_input, t, &d_ffn_out,
    );
    for (a, b) in d_ffn_input.iter_mut().zip(&d_res_f) {
        *a += b;
    }

    // Cross-attention stage (decoder only).
    let d_x_mid_total = if let Some((ca, ca_drop, ln2, _x2)) = &cache.cross {
        let (enc_out, s, d_enc) = enc.expect("decoder block needs encoder output");
        let d_res2 = layer_norm_bwd(
            grads,
            &p("ln2.scale"),
            &p("ln2.offset"),
            params.get(&p("ln2.scale")).data(),
            ln2,
            &d_ffn_input,
            t,
            d,
        );
        let mut d_ca_out = d_res2.clone();
        drop_bwd(&mut d_ca_out, ca_drop);
        let mut d_x_mid = vec![0.0f64; t * d];
        attention_bwd(
            wt, grads, cfg, &p("ca"), ca, &cache.x_mid, t, enc_out, s, false,
            &d_ca_out, &mut d_x_mid, d_enc,
        );
        for (a, b) in d_x_mid.iter_mut().zip(&d_res2) {
            *a += b;
        }
        d_x_mid
    } else {
        d_ffn_input
    };

    // First LayerNorm.
    let d_res1 = layer_norm_bwd(
        grads,
        &p("ln1.scale"),
        &p("ln1.offset"),
        params.get(&p("ln1.scale")).data(),
        &cache.ln1,
        &d_x_mid_total,
        t,
        d,
    );

    // res1 = x_in + drop(self_attn(x_in))
    let mut d_sa_out = d_res1.clone();
    drop_bwd(&mut d_sa_out, &cache.attn_drop);
    let mut d_x_in = vec![0.0f64; t * d];
    let mut d_x_in_kv = vec![0.0f64; t * d];
    attention_bwd(
        wt, grads, cfg, &p("sa"), &cache.attn, &cache.x_in, t, &cache.x_in, t, causal,
        &d_sa_out, &mut d_x_in, &mut d_x_in_kv,
    );
    for ((a, b), c) in d_x_in.iter_mut().zip(&d_x_in_kv).zip(&d_res1) {
        *a += b + c;
    }
    d_x_in
}

fn embed_bwd(
    grads: &mut ParameterSet,
    cfg: &ModelConfig,
    ids: &[usize],
    mask: &DropMask,
    mut d_x: Vec<f64>,
) {
    let d = cfg.model_dim;
    let scale = (d as f64).sqrt();
    drop_bwd(&mut d_x, mask);
    let table = grads.get_mut("embed.tok").data_mut();
    for (t, &id) in ids.iter().enumerate() {
        let drow = &d_x[t * d..(t + 1) * d];
        let trow = &mut table[id * d..(id + 1) * d];
        for j in 0..d {
            trow[j] += drow[j] * scale;
        }
    }
}

fn backward_sample(
    params: &ParameterSet,
    wt: &TransposedWeights,
    grads: &mut ParameterSet,
    cfg: &ModelConfig,
    cache: &SampleCache,
    d_logits: &[f64],
) {
    let d = cfg.model_dim;
    let v = cfg.vocab_size;
    let t = cache.tgt_in.len();
    let s = cache.src.len();

    let dec_out: &[f64] = &cache.dec_layers.last().expect("layers").x_out;
    gemm_tn(t, d, v, dec_out, d_logits, grads.get_mut("out.w").data_mut());
    {
        let db = grads.get_mut("out.b").data_mut();
        for row in 0..t {
            for j in 0..v {
                db[j] += d_logits[row * v + j];
            }
        }
    }
    let mut d_y = vec![0.0f64; t * d];
    gemm_nn(t, v, d, d_logits, wt.get("out.w"), &mut d_y);

    let enc_out: &[f64] = &cache.enc_layers.last().expect("layers").x_out;
    let mut d_enc_out = vec![0.0f64; s * d];
    for l in (0..cfg.num_layers).rev() {
        d_y = block_bwd(
            params,
            wt,
            grads,
            cfg,
            "dec",
            l,
            &cache.dec_layers[l],
            t,
            Some((enc_out, s, &mut d_enc_out)),
            &d_y,
        );
    }
    embed_bwd(grads, cfg, &cache.tgt_in, &cache.dec_embed_drop, d_y);

    let mut d_e = d_enc_out;
    for l in (0..cfg.num_layers).rev() {
        d_e = block_bwd(
            params,
            wt,
            grads,
            cfg,
            "enc",
            l,
            &cache.enc_layers[l],
            s,
            None,
            &d_e,
        );
    }
    embed_bwd(grads, cfg, &cache.src, &cache.enc_embed_drop, d_e);
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

fn teacher_pairs(pair: &SamplePair) -> (Vec<usize>, Vec<usize>) {
    let mut tgt_in = Vec::with_capacity(pair.tgt.len() + 1);
    tgt_in.push(BOS);
    tgt_in.extend_from_slice(&pair.tgt);
    let mut tgt_out = pair.tgt.clone();
    tgt_out.push(EOS);
    (tgt_in, tgt_out)
}

/// Cross-entropy of `logits` against `tgt_out`; also fills `d_logits` with
/// the gradient of the token-summed loss when provided. PAD targets are
/// excluded from both.
fn ce_loss(
    cfg: &ModelConfig,
    logits: &[f64],
    tgt_out: &[usize],
    mut d_logits: Option<&mut [f64]>,
) -> (f64, usize) {
    let v = cfg.vocab_size;
    let ls = cfg.label_smoothing;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut lsm = vec![0.0f64; v];
    for (row, &y) in tgt_out.iter().enumerate() {
        if y == PAD {
            continue;
        }
        count += 1;
        let lrow = &logits[row * v..(row + 1) * v];
        log_softmax_row(lrow, &mut lsm);
        if ls == 0.0 {
            total -= lsm[y];
        } else {
            let mut smooth_sum = 0.0;
            for &l in lsm.iter() {
                smooth_sum += l;
            }
            total -= (1.0 - ls) * lsm[y] + ls / v as f64 * smooth_sum;
        }
        if let Some(dl) = d_logits.as_deref_mut() {
            let drow = &mut dl[row * v..(row + 1) * v];
            for j in 0..v {
                let p = lsm[j].exp();
                let target = if j == y { 1.0 - ls } else { 0.0 } + ls / v as f64;
                drow[j] = p - target;
            }
        }
    }
    (total, count)
}

/// Token-summed loss and exact gradients over a batch. Samples are processed
/// in fixed-size chunks that reduce in order, independent of thread count.
pub fn loss_and_grad(
    params: &ParameterSet,
    cfg: &ModelConfig,
    batch: &[SamplePair],
    dropout: Option<&DropoutPlan>,
) -> Result<(LossValue, ParameterSet), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Config("empty batch".into()));
    }
    cfg.validate()?;
    let wt = TransposedWeights::build(params);

    let chunks: Vec<(usize, &[SamplePair])> = batch
        .chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(i, c)| (i * GRAD_CHUNK, c))
        .collect();

    let results: Vec<Result<(f64, usize, ParameterSet), ModelError>> = chunks
        .par_iter()
        .map(|&(base, chunk)| {
            let mut grads = params.zeros_like();
            let mut total = 0.0;
            let mut tokens = 0usize;
            for (off, pair) in chunk.iter().enumerate() {
                let (tgt_in, tgt_out) = teacher_pairs(pair);
                let mut rng = dropout.map(|p| {
                    ChaCha20Rng::seed_from_u64(
                        p.seed ^ ((base + off) as u64).wrapping_mul(0x9E3779B97F4A7C15),
                    )
                });
                let cache = forward_sample(params, cfg, &pair.src, &tgt_in, rng.as_mut())?;
                let mut d_logits = vec![0.0f64; tgt_in.len() * cfg.vocab_size];
                let (loss, count) = ce_loss(cfg, &cache.logits, &tgt_out, Some(&mut d_logits));
                total += loss;
                tokens += count;
                backward_sample(params, &wt, &mut grads, cfg, &cache, &d_logits);
            }
            Ok((total, tokens, grads))
        })
        .collect();

    let mut grads = params.zeros_like();
    let mut total = 0.0;
    let mut tokens = 0usize;
    for r in results {
        let (t, c, g) = r?;
        total += t;
        tokens += c;
        grads.add_scaled(&g, 1.0);
    }
    if tokens == 0 {
        return Err(ModelError::Config("batch contains no loss tokens".into()));
    }
    Ok((LossValue::from_total(total, tokens), grads))
}

/// Evaluation-mode loss over a batch (no gradients, no dropout).
pub fn batch_loss(
    params: &ParameterSet,
    cfg: &ModelConfig,
    batch: &[SamplePair],
) -> Result<LossValue, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Config("empty batch".into()));
    }
    let chunks: Vec<&[SamplePair]> = batch.chunks(GRAD_CHUNK).collect();
    let partial: Vec<Result<(f64, usize), ModelError>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut total = 0.0;
            let mut tokens = 0usize;
            for pair in chunk.iter() {
                let (tgt_in, tgt_out) = teacher_pairs(pair);
                let logits = forward(params, cfg, &pair.src, &tgt_in)?;
                let (loss, count) = ce_loss(cfg, &logits, &tgt_out, None);
                total += loss;
                tokens += count;
            }
            Ok((total, tokens))
        })
        .collect();
    let mut total = 0.0;
    let mut tokens = 0usize;
    for r in partial {
        let (t, c) = r?;
        total += t;
        tokens += c;
    }
    if tokens == 0 {
        return Err(ModelError::Config("batch contains no loss tokens".into()));
    }
    Ok(LossValue::from_total(total, tokens))
}
