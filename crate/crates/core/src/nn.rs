//! Transformer building blocks shared by the audio encoder and the text
//! decoder: sinusoidal positions, multi-head attention, pre-norm blocks,
//! and low-rank (LoRA) deltas on attention projections.
//!
//! Parameters are plain arrays in a [`ParamStore`]; the `bind_*` helpers
//! register them on a tape for one forward pass. All linear layers use the
//! `y = x · Wᵀ` convention with `W: (d_out × d_in)`.

use ndarray::{Array2, ArrayD};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{DiffArray, Tape};
use crate::error::{CoreError, Result};
use crate::params::{ones, xavier_uniform, zeros, ParamStore};

/// Additive fill for masked attention logits. Large enough that softmax
/// underflows to exactly 0 in f64, which is what makes the causality
/// guarantee bit-exact.
const MASKED_LOGIT: f64 = -1e30;

/// Sinusoidal position table of shape `(max_len × d_model)`.
///
/// Row `p`, column `2i` is `sin(p / 10000^(2i/d))` and column `2i+1` the
/// matching cosine. Used as the *initialization* of a trainable table.
pub fn sinusoidal_table(max_len: usize, d_model: usize) -> ArrayD<f64> {
    let mut table = Array2::<f64>::zeros((max_len, d_model));
    for p in 0..max_len {
        for i in 0..d_model.div_ceil(2) {
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            let angle = p as f64 * rate;
            table[[p, 2 * i]] = angle.sin();
            if 2 * i + 1 < d_model {
                table[[p, 2 * i + 1]] = angle.cos();
            }
        }
    }
    table.into_dyn()
}

/// One LoRA delta bound on a tape: `scale · x·Aᵀ·Bᵀ` added to a base layer.
#[derive(Clone, Copy)]
pub struct LoraVars {
    pub a: DiffArray,
    pub b: DiffArray,
    pub scale: f64,
}

/// Attention weights bound on a tape, with optional LoRA deltas on the
/// query and value projections.
pub struct AttentionVars {
    pub wq: DiffArray,
    pub wk: DiffArray,
    pub wv: DiffArray,
    pub wo: DiffArray,
    pub n_heads: usize,
    pub lora_q: Option<LoraVars>,
    pub lora_v: Option<LoraVars>,
}

/// Pre-norm transformer block parameters bound on a tape.
pub struct BlockVars {
    pub ln1_gain: DiffArray,
    pub ln1_bias: DiffArray,
    pub attn: AttentionVars,
    pub ln2_gain: DiffArray,
    pub ln2_bias: DiffArray,
    pub w_ff1: DiffArray,
    pub b_ff1: DiffArray,
    pub w_ff2: DiffArray,
    pub b_ff2: DiffArray,
}

/// `x · Wᵀ` with optional row-broadcast bias.
pub fn linear(tape: &mut Tape, x: DiffArray, w: DiffArray, b: Option<DiffArray>) -> Result<DiffArray> {
    let wt = tape.transpose(w)?;
    let y = tape.matmul(x, wt)?;
    match b {
        Some(b) => tape.add(y, b),
        None => Ok(y),
    }
}

/// Base projection plus low-rank delta: `x·Wᵀ + scale · (x·Aᵀ)·Bᵀ`.
///
/// With `B = 0` (the initialization) the delta term is an exact zero matrix,
/// so the output equals the base projection bit-for-bit.
pub fn lora_forward(tape: &mut Tape, x: DiffArray, w_base: DiffArray, adapter: &LoraVars) -> Result<DiffArray> {
    let base = linear(tape, x, w_base, None)?;
    let at = tape.transpose(adapter.a)?;
    let down = tape.matmul(x, at)?;
    let bt = tape.transpose(adapter.b)?;
    let up = tape.matmul(down, bt)?;
    let delta = tape.scale(up, adapter.scale)?;
    tape.add(base, delta)
}

fn project(tape: &mut Tape, x: DiffArray, w: DiffArray, lora: Option<&LoraVars>) -> Result<DiffArray> {
    match lora {
        Some(l) => lora_forward(tape, x, w, l),
        None => linear(tape, x, w, None),
    }
}

/// Scaled dot-product multi-head self-attention over `x (T × d_model)`.
///
/// With `causal` set, position `t` cannot attend to positions `> t`.
pub fn multi_head_attention(tape: &mut Tape, x: DiffArray, params: &AttentionVars, causal: bool) -> Result<DiffArray> {
    attention_with_probs(tape, x, params, causal).map(|(out, _)| out)
}

/// As [`multi_head_attention`], additionally returning each head's
/// attention rows for inspection.
pub fn attention_with_probs(
    tape: &mut Tape,
    x: DiffArray,
    params: &AttentionVars,
    causal: bool,
) -> Result<(DiffArray, Vec<DiffArray>)> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(CoreError::shape("attention", &shape, &[]));
    }
    let (t_len, d_model) = (shape[0], shape[1]);
    if d_model % params.n_heads != 0 {
        return Err(CoreError::config(format!(
            "d_model {d_model} not divisible by n_heads {}",
            params.n_heads
        )));
    }
    let d_head = d_model / params.n_heads;

    let q = project(tape, x, params.wq, params.lora_q.as_ref())?;
    let k = linear(tape, x, params.wk, None)?;
    let v = project(tape, x, params.wv, params.lora_v.as_ref())?;

    let mask = causal.then(|| causal_mask_consts(tape, t_len)).transpose()?;

    let mut heads = Vec::with_capacity(params.n_heads);
    let mut all_probs = Vec::with_capacity(params.n_heads);
    for h in 0..params.n_heads {
        let (lo, hi) = (h * d_head, (h + 1) * d_head);
        let qh = tape.slice(q, 1, lo, hi)?;
        let kh = tape.slice(k, 1, lo, hi)?;
        let vh = tape.slice(v, 1, lo, hi)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let mut scaled = tape.scale(scores, 1.0 / (d_head as f64).sqrt())?;
        if let Some((keep, fill)) = mask {
            let kept = tape.mul(scaled, keep)?;
            scaled = tape.add(kept, fill)?;
        }
        let probs = tape.softmax(scaled)?;
        let out = tape.matmul(probs, vh)?;
        heads.push(out);
        all_probs.push(probs);
    }
    let cat = tape.concat(&heads, 1)?;
    let out = linear(tape, cat, params.wo, None)?;
    Ok((out, all_probs))
}

/// Constant (keep, fill) pair implementing the causal mask: masked logits
/// become exactly `MASKED_LOGIT` regardless of their input value.
fn causal_mask_consts(tape: &mut Tape, t_len: usize) -> Result<(DiffArray, DiffArray)> {
    let mut keep = Array2::<f64>::zeros((t_len, t_len));
    let mut fill = Array2::<f64>::zeros((t_len, t_len));
    for i in 0..t_len {
        for j in 0..t_len {
            if j <= i {
                keep[[i, j]] = 1.0;
            } else {
                fill[[i, j]] = MASKED_LOGIT;
            }
        }
    }
    let keep = tape.constant(keep.into_dyn())?;
    let fill = tape.constant(fill.into_dyn())?;
    Ok((keep, fill))
}

/// Pre-norm transformer block: `x + Attn(LN(x))`, then `+ FFN(LN(·))` with
/// a `linear → ReLU → linear` feed-forward of hidden width `4·d_model`.
pub fn transformer_block(tape: &mut Tape, x: DiffArray, params: &BlockVars, causal: bool) -> Result<DiffArray> {
    let normed = tape.layer_norm(x, params.ln1_gain, params.ln1_bias)?;
    let attn = multi_head_attention(tape, normed, &params.attn, causal)?;
    let h = tape.add(x, attn)?;

    let normed2 = tape.layer_norm(h, params.ln2_gain, params.ln2_bias)?;
    let ff1 = linear(tape, normed2, params.w_ff1, Some(params.b_ff1))?;
    let act = tape.relu(ff1)?;
    let ff2 = linear(tape, act, params.w_ff2, Some(params.b_ff2))?;
    tape.add(h, ff2)
}

// ---- parameter construction and binding ----

/// Insert attention weights `{prefix}.{wq,wk,wv,wo}` (Xavier-uniform).
pub fn init_attention(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d_model: usize) {
    for name in ["wq", "wk", "wv", "wo"] {
        store.insert(format!("{prefix}.{name}"), xavier_uniform(rng, d_model, d_model));
    }
}

/// Insert a LoRA pair `{prefix}_lora_a` (Xavier, r×d_in) and
/// `{prefix}_lora_b` (zeros, d_out×r), making the delta a no-op at init.
pub fn init_lora(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d_in: usize, d_out: usize, rank: usize) {
    store.insert(format!("{prefix}_lora_a"), xavier_uniform(rng, rank, d_in));
    store.insert(format!("{prefix}_lora_b"), zeros(&[d_out, rank]));
}

/// Insert all parameters of one transformer block under `prefix`.
pub fn init_block(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, d_model: usize, lora_rank: Option<usize>) {
    store.insert(format!("{prefix}.ln1_gain"), ones(&[d_model]));
    store.insert(format!("{prefix}.ln1_bias"), zeros(&[d_model]));
    init_attention(store, rng, &format!("{prefix}.attn"), d_model);
    if let Some(rank) = lora_rank {
        init_lora(store, rng, &format!("{prefix}.attn.wq"), d_model, d_model, rank);
        init_lora(store, rng, &format!("{prefix}.attn.wv"), d_model, d_model, rank);
    }
    store.insert(format!("{prefix}.ln2_gain"), ones(&[d_model]));
    store.insert(format!("{prefix}.ln2_bias"), zeros(&[d_model]));
    store.insert(format!("{prefix}.w_ff1"), xavier_uniform(rng, 4 * d_model, d_model));
    store.insert(format!("{prefix}.b_ff1"), zeros(&[4 * d_model]));
    store.insert(format!("{prefix}.w_ff2"), xavier_uniform(rng, d_model, 4 * d_model));
    store.insert(format!("{prefix}.b_ff2"), zeros(&[d_model]));
}

/// Bind `{prefix}.{wq,..}` (and LoRA pairs when `lora_scale` is given) onto a tape.
pub fn bind_attention(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    n_heads: usize,
    lora_scale: Option<f64>,
) -> Result<AttentionVars> {
    let bindp = |tape: &mut Tape, suffix: &str| store.bind(tape, &format!("{prefix}.{suffix}"));
    let wq = bindp(tape, "wq")?;
    let wk = bindp(tape, "wk")?;
    let wv = bindp(tape, "wv")?;
    let wo = bindp(tape, "wo")?;
    let mut lora_q = None;
    let mut lora_v = None;
    if let Some(scale) = lora_scale {
        lora_q = Some(LoraVars {
            a: bindp(tape, "wq_lora_a")?,
            b: bindp(tape, "wq_lora_b")?,
            scale,
        });
        lora_v = Some(LoraVars {
            a: bindp(tape, "wv_lora_a")?,
            b: bindp(tape, "wv_lora_b")?,
            scale,
        });
    }
    Ok(AttentionVars { wq, wk, wv, wo, n_heads, lora_q, lora_v })
}

/// Bind one block's parameters onto a tape.
pub fn bind_block(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    n_heads: usize,
    lora_scale: Option<f64>,
) -> Result<BlockVars> {
    let bindp = |tape: &mut Tape, suffix: &str| store.bind(tape, &format!("{prefix}.{suffix}"));
    Ok(BlockVars {
        ln1_gain: bindp(tape, "ln1_gain")?,
        ln1_bias: bindp(tape, "ln1_bias")?,
        attn: bind_attention(tape, store, &format!("{prefix}.attn"), n_heads, lora_scale)?,
        ln2_gain: bindp(tape, "ln2_gain")?,
        ln2_bias: bindp(tape, "ln2_bias")?,
        w_ff1: bindp(tape, "w_ff1")?,
        b_ff1: bindp(tape, "b_ff1")?,
        w_ff2: bindp(tape, "w_ff2")?,
        b_ff2: bindp(tape, "b_ff2")?,
    })
}
