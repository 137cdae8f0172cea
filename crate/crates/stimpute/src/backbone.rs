//! Pre-norm transformer blocks with causal self-attention, processed per
//! node along the time axis, plus the linear output head.
//!
//! Freeze policy: attention and feed-forward tensors are frozen; the two
//! layer-norm parameter pairs per block are trainable. Causality is exact:
//! position `t` attends to positions `<= t` only, so perturbing the input at
//! `t` cannot change outputs at earlier steps.

use crate::error::{Error, Result};
use crate::linalg::{dot, matmul_nn, matmul_nt, matmul_tn};
use crate::model::Param;

const LN_EPS: f64 = 1e-5;

/// One transformer block. Attention projections and feed-forward maps are
/// frozen; layer-norm scale/shift pairs are trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub attn_q_w: Param,
    pub attn_q_b: Param,
    pub attn_k_w: Param,
    pub attn_k_b: Param,
    pub attn_v_w: Param,
    pub attn_v_b: Param,
    pub attn_o_w: Param,
    pub attn_o_b: Param,
    pub ff1_w: Param,
    pub ff1_b: Param,
    pub ff2_w: Param,
    pub ff2_b: Param,
    pub ln1_scale: Param,
    pub ln1_shift: Param,
    pub ln2_scale: Param,
    pub ln2_shift: Param,
}

impl BlockParams {
    pub fn zeros(d_model: usize) -> Self {
        let hidden = 4 * d_model;
        let frozen_mat = |r: usize, c: usize| Param::zeros(vec![r, c], true);
        let frozen_vec = |n: usize| Param::zeros(vec![n], true);
        let mut ln_scale1 = Param::zeros(vec![d_model], false);
        ln_scale1.data.fill(1.0);
        let mut ln_scale2 = Param::zeros(vec![d_model], false);
        ln_scale2.data.fill(1.0);
        Self {
            attn_q_w: frozen_mat(d_model, d_model),
            attn_q_b: frozen_vec(d_model),
            attn_k_w: frozen_mat(d_model, d_model),
            attn_k_b: frozen_vec(d_model),
            attn_v_w: frozen_mat(d_model, d_model),
            attn_v_b: frozen_vec(d_model),
            attn_o_w: frozen_mat(d_model, d_model),
            attn_o_b: frozen_vec(d_model),
            ff1_w: frozen_mat(d_model, hidden),
            ff1_b: frozen_vec(hidden),
            ff2_w: frozen_mat(hidden, d_model),
            ff2_b: frozen_vec(d_model),
            ln1_scale: ln_scale1,
            ln1_shift: Param::zeros(vec![d_model], false),
            ln2_scale: ln_scale2,
            ln2_shift: Param::zeros(vec![d_model], false),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockGrads {
    pub attn_q_w: Vec<f64>,
    pub attn_q_b: Vec<f64>,
    pub attn_k_w: Vec<f64>,
    pub attn_k_b: Vec<f64>,
    pub attn_v_w: Vec<f64>,
    pub attn_v_b: Vec<f64>,
    pub attn_o_w: Vec<f64>,
    pub attn_o_b: Vec<f64>,
    pub ff1_w: Vec<f64>,
    pub ff1_b: Vec<f64>,
    pub ff2_w: Vec<f64>,
    pub ff2_b: Vec<f64>,
    pub ln1_scale: Vec<f64>,
    pub ln1_shift: Vec<f64>,
    pub ln2_scale: Vec<f64>,
    pub ln2_shift: Vec<f64>,
}

impl BlockGrads {
    pub fn zeros(p: &BlockParams) -> Self {
        Self {
            attn_q_w: vec![0.0; p.attn_q_w.data.len()],
            attn_q_b: vec![0.0; p.attn_q_b.data.len()],
            attn_k_w: vec![0.0; p.attn_k_w.data.len()],
            attn_k_b: vec![0.0; p.attn_k_b.data.len()],
            attn_v_w: vec![0.0; p.attn_v_w.data.len()],
            attn_v_b: vec![0.0; p.attn_v_b.data.len()],
            attn_o_w: vec![0.0; p.attn_o_w.data.len()],
            attn_o_b: vec![0.0; p.attn_o_b.data.len()],
            ff1_w: vec![0.0; p.ff1_w.data.len()],
            ff1_b: vec![0.0; p.ff1_b.data.len()],
            ff2_w: vec![0.0; p.ff2_w.data.len()],
            ff2_b: vec![0.0; p.ff2_b.data.len()],
            ln1_scale: vec![0.0; p.ln1_scale.data.len()],
            ln1_shift: vec![0.0; p.ln1_shift.data.len()],
            ln2_scale: vec![0.0; p.ln2_scale.data.len()],
            ln2_shift: vec![0.0; p.ln2_shift.data.len()],
        }
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654;
    let u = C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LnCache {
    mean: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], rows: usize, d: usize, scale: &[f64], shift: &[f64]) -> (Vec<f64>, LnCache) {
    let mut out = vec![0.0; rows * d];
    let mut mean = vec![0.0; rows];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let m = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        mean[r] = m;
        rstd[r] = rs;
        let out_row = &mut out[r * d..(r + 1) * d];
        for i in 0..d {
            out_row[i] = (row[i] - m) * rs * scale[i] + shift[i];
        }
    }
    (out, LnCache { mean, rstd })
}

/// Layer-norm backward; accumulates scale/shift gradients and adds the input
/// gradient into `dx`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    dy: &[f64],
    x: &[f64],
    rows: usize,
    d: usize,
    scale: &[f64],
    cache: &LnCache,
    d_scale: &mut [f64],
    d_shift: &mut [f64],
    dx: &mut [f64],
) {
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let dy_row = &dy[r * d..(r + 1) * d];
        let m = cache.mean[r];
        let rs = cache.rstd[r];
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for i in 0..d {
            let xhat = (row[i] - m) * rs;
            let g = dy_row[i] * scale[i];
            d_scale[i] += dy_row[i] * xhat;
            d_shift[i] += dy_row[i];
            sum_g += g;
            sum_gx += g * xhat;
        }
        let inv_d = 1.0 / d as f64;
        let dx_row = &mut dx[r * d..(r + 1) * d];
        for i in 0..d {
            let xhat = (row[i] - m) * rs;
            let g = dy_row[i] * scale[i];
            dx_row[i] += rs * (g - inv_d * sum_g - xhat * inv_d * sum_gx);
        }
    }
}

/// Saved activations of one block for the backward pass.
pub struct BlockCache {
    x_in: Vec<f64>,
    ln1: LnCache,
    ln1_out: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `[node][head][t][s]`, zero above the diagonal.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    x_mid: Vec<f64>,
    ln2: LnCache,
    ln2_out: Vec<f64>,
    ff_pre: Vec<f64>,
    ff_act: Vec<f64>,
}

impl BlockCache {
    /// Attention rows for inspection: `[node][head][t][s]`.
    pub fn attention_probs(&self) -> &[f64] {
        &self.probs
    }
}

fn affine_rows(x: &[f64], rows: usize, d_in: usize, d_out: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        out[r * d_out..(r + 1) * d_out].copy_from_slice(b);
    }
    matmul_nn(x, w, rows, d_in, d_out, &mut out);
    out
}

/// Causal multi-head attention over one node's `[t][d]` sequence, writing
/// context rows and, when given, the probability cache.
#[allow(clippy::too_many_arguments)]
fn causal_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    n_steps: usize,
    d: usize,
    n_heads: usize,
    ctx: &mut [f64],
    mut probs_out: Option<&mut [f64]>,
) {
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut scores = vec![0.0; n_steps];
    for h in 0..n_heads {
        let off = h * dh;
        for t in 0..n_steps {
            let q_row = &q[t * d + off..t * d + off + dh];
            for s in 0..=t {
                let k_row = &k[s * d + off..s * d + off + dh];
                scores[s] = dot(q_row, k_row) * scale;
            }
            crate::linalg::softmax_inplace(&mut scores[..=t]);
            let ctx_row = &mut ctx[t * d + off..t * d + off + dh];
            ctx_row.iter_mut().for_each(|c| *c = 0.0);
            for s in 0..=t {
                let p = scores[s];
                let v_row = &v[s * d + off..s * d + off + dh];
                for (c, &vv) in ctx_row.iter_mut().zip(v_row) {
                    *c += p * vv;
                }
            }
            if let Some(buf) = probs_out.as_deref_mut() {
                let base = (h * n_steps + t) * n_steps;
                buf[base..base + t + 1].copy_from_slice(&scores[..=t]);
            }
        }
    }
}

fn block_forward(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    d: usize,
    n_heads: usize,
    p: &BlockParams,
    keep_cache: bool,
) -> (Vec<f64>, Option<BlockCache>) {
    let rows = n_nodes * n_steps;
    let hidden = 4 * d;

    let (ln1_out, ln1) = layer_norm(x, rows, d, &p.ln1_scale.data, &p.ln1_shift.data);
    let q = affine_rows(&ln1_out, rows, d, d, &p.attn_q_w.data, &p.attn_q_b.data);
    let k = affine_rows(&ln1_out, rows, d, d, &p.attn_k_w.data, &p.attn_k_b.data);
    let v = affine_rows(&ln1_out, rows, d, d, &p.attn_v_w.data, &p.attn_v_b.data);

    let mut ctx = vec![0.0; rows * d];
    let mut probs = if keep_cache {
        vec![0.0; n_nodes * n_heads * n_steps * n_steps]
    } else {
        Vec::new()
    };
    for n in 0..n_nodes {
        let span = n * n_steps * d..(n + 1) * n_steps * d;
        let probs_node = if keep_cache {
            let per_node = n_heads * n_steps * n_steps;
            Some(&mut probs[n * per_node..(n + 1) * per_node])
        } else {
            None
        };
        causal_attention(
            &q[span.clone()],
            &k[span.clone()],
            &v[span.clone()],
            n_steps,
            d,
            n_heads,
            &mut ctx[span],
            probs_node,
        );
    }

    let attn_out = affine_rows(&ctx, rows, d, d, &p.attn_o_w.data, &p.attn_o_b.data);
    let mut x_mid = x.to_vec();
    for (m, &a) in x_mid.iter_mut().zip(&attn_out) {
        *m += a;
    }

    let (ln2_out, ln2) = layer_norm(&x_mid, rows, d, &p.ln2_scale.data, &p.ln2_shift.data);
    let ff_pre = affine_rows(&ln2_out, rows, d, hidden, &p.ff1_w.data, &p.ff1_b.data);
    let ff_act: Vec<f64> = ff_pre.iter().map(|&u| gelu(u)).collect();
    let ff_out = affine_rows(&ff_act, rows, hidden, d, &p.ff2_w.data, &p.ff2_b.data);

    let mut out = x_mid.clone();
    for (o, &f) in out.iter_mut().zip(&ff_out) {
        *o += f;
    }

    let cache = keep_cache.then(|| BlockCache {
        x_in: x.to_vec(),
        ln1,
        ln1_out,
        q,
        k,
        v,
        probs,
        ctx,
        x_mid,
        ln2,
        ln2_out,
        ff_pre,
        ff_act,
    });
    (out, cache)
}

#[allow(clippy::too_many_arguments)]
fn block_backward(
    d_out: &[f64],
    n_nodes: usize,
    n_steps: usize,
    d: usize,
    n_heads: usize,
    p: &BlockParams,
    cache: &BlockCache,
    grads: &mut BlockGrads,
) -> Vec<f64> {
    let rows = n_nodes * n_steps;
    let hidden = 4 * d;

    // Feed-forward path.
    let mut d_ff_act = vec![0.0; rows * hidden];
    matmul_nt(d_out, &p.ff2_w.data, rows, d, hidden, &mut d_ff_act);
    matmul_tn(&cache.ff_act, d_out, rows, hidden, d, &mut grads.ff2_w);
    for r in 0..rows {
        for i in 0..d {
            grads.ff2_b[i] += d_out[r * d + i];
        }
    }
    let mut d_ff_pre = d_ff_act;
    for (g, &u) in d_ff_pre.iter_mut().zip(&cache.ff_pre) {
        *g *= gelu_prime(u);
    }
    let mut d_ln2_out = vec![0.0; rows * d];
    matmul_nt(&d_ff_pre, &p.ff1_w.data, rows, hidden, d, &mut d_ln2_out);
    matmul_tn(&cache.ln2_out, &d_ff_pre, rows, d, hidden, &mut grads.ff1_w);
    for r in 0..rows {
        for i in 0..hidden {
            grads.ff1_b[i] += d_ff_pre[r * hidden + i];
        }
    }

    // d x_mid collects the residual path plus the LN2 path.
    let mut d_x_mid = d_out.to_vec();
    layer_norm_backward(
        &d_ln2_out,
        &cache.x_mid,
        rows,
        d,
        &p.ln2_scale.data,
        &cache.ln2,
        &mut grads.ln2_scale,
        &mut grads.ln2_shift,
        &mut d_x_mid,
    );

    // Attention output projection.
    let mut d_ctx = vec![0.0; rows * d];
    matmul_nt(&d_x_mid, &p.attn_o_w.data, rows, d, d, &mut d_ctx);
    matmul_tn(&cache.ctx, &d_x_mid, rows, d, d, &mut grads.attn_o_w);
    for r in 0..rows {
        for i in 0..d {
            grads.attn_o_b[i] += d_x_mid[r * d + i];
        }
    }

    // Attention core, per node and head.
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; rows * d];
    let mut dk = vec![0.0; rows * d];
    let mut dv = vec![0.0; rows * d];
    let mut dprobs = vec![0.0; 0];
    for n in 0..n_nodes {
        let base = n * n_steps * d;
        let probs_node =
            &cache.probs[n * n_heads * n_steps * n_steps..(n + 1) * n_heads * n_steps * n_steps];
        for h in 0..n_heads {
            let off = h * dh;
            let probs_head = &probs_node[h * n_steps * n_steps..(h + 1) * n_steps * n_steps];
            for t in 0..n_steps {
                let d_ctx_row = &d_ctx[base + t * d + off..base + t * d + off + dh];
                dprobs.clear();
                dprobs.resize(t + 1, 0.0);
                for s in 0..=t {
                    let v_row = &cache.v[base + s * d + off..base + s * d + off + dh];
                    dprobs[s] = dot(d_ctx_row, v_row);
                    let p_ts = probs_head[t * n_steps + s];
                    let dv_row = &mut dv[base + s * d + off..base + s * d + off + dh];
                    for (g, &c) in dv_row.iter_mut().zip(d_ctx_row) {
                        *g += p_ts * c;
                    }
                }
                let mut weighted = 0.0;
                for s in 0..=t {
                    weighted += probs_head[t * n_steps + s] * dprobs[s];
                }
                for s in 0..=t {
                    let p_ts = probs_head[t * n_steps + s];
                    let dscore = p_ts * (dprobs[s] - weighted) * scale;
                    let k_row = &cache.k[base + s * d + off..base + s * d + off + dh];
                    let q_row = &cache.q[base + t * d + off..base + t * d + off + dh];
                    let dq_row = &mut dq[base + t * d + off..base + t * d + off + dh];
                    for (g, &kk) in dq_row.iter_mut().zip(k_row) {
                        *g += dscore * kk;
                    }
                    let dk_row = &mut dk[base + s * d + off..base + s * d + off + dh];
                    for (g, &qq) in dk_row.iter_mut().zip(q_row) {
                        *g += dscore * qq;
                    }
                }
            }
        }
    }

    // Back through the q/k/v projections into LN1 output.
    let mut d_ln1_out = vec![0.0; rows * d];
    matmul_nt(&dq, &p.attn_q_w.data, rows, d, d, &mut d_ln1_out);
    matmul_nt(&dk, &p.attn_k_w.data, rows, d, d, &mut d_ln1_out);
    matmul_nt(&dv, &p.attn_v_w.data, rows, d, d, &mut d_ln1_out);
    matmul_tn(&cache.ln1_out, &dq, rows, d, d, &mut grads.attn_q_w);
    matmul_tn(&cache.ln1_out, &dk, rows, d, d, &mut grads.attn_k_w);
    matmul_tn(&cache.ln1_out, &dv, rows, d, d, &mut grads.attn_v_w);
    for r in 0..rows {
        for i in 0..d {
            grads.attn_q_b[i] += dq[r * d + i];
            grads.attn_k_b[i] += dk[r * d + i];
            grads.attn_v_b[i] += dv[r * d + i];
        }
    }

    // Residual: d x_in starts as d x_mid, plus the LN1 path.
    let mut d_x_in = d_x_mid;
    layer_norm_backward(
        &d_ln1_out,
        &cache.x_in,
        rows,
        d,
        &p.ln1_scale.data,
        &cache.ln1,
        &mut grads.ln1_scale,
        &mut grads.ln1_shift,
        &mut d_x_in,
    );
    d_x_in
}

fn check_backbone_input(x: &[f64], n_nodes: usize, n_steps: usize, d: usize) -> Result<()> {
    if x.len() != n_nodes * n_steps * d {
        return Err(Error::InvalidInput(format!(
            "backbone input length {} does not match N*T*d = {}",
            x.len(),
            n_nodes * n_steps * d
        )));
    }
    Ok(())
}

/// Run the block stack in inference mode. Input and output are
/// `[node][t][d_model]`; nodes are processed independently.
pub fn backbone_forward(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    d: usize,
    n_heads: usize,
    blocks: &[BlockParams],
) -> Result<Vec<f64>> {
    check_backbone_input(x, n_nodes, n_steps, d)?;
    let mut h = x.to_vec();
    for block in blocks {
        let (next, _) = block_forward(&h, n_nodes, n_steps, d, n_heads, block, false);
        h = next;
    }
    Ok(h)
}

/// Training-mode stack forward retaining per-block caches.
pub fn backbone_forward_train(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    d: usize,
    n_heads: usize,
    blocks: &[BlockParams],
) -> Result<(Vec<f64>, Vec<BlockCache>)> {
    check_backbone_input(x, n_nodes, n_steps, d)?;
    let mut h = x.to_vec();
    let mut caches = Vec::with_capacity(blocks.len());
    for block in blocks {
        let (next, cache) = block_forward(&h, n_nodes, n_steps, d, n_heads, block, true);
        h = next;
        caches.push(cache.expect("cache requested"));
    }
    Ok((h, caches))
}

/// Backward through the whole stack; returns the gradient w.r.t. the stack
/// input and accumulates per-block parameter gradients.
#[allow(clippy::too_many_arguments)]
pub fn backbone_backward(
    d_out: &[f64],
    n_nodes: usize,
    n_steps: usize,
    d: usize,
    n_heads: usize,
    blocks: &[BlockParams],
    caches: &[BlockCache],
    grads: &mut [BlockGrads],
) -> Vec<f64> {
    let mut grad = d_out.to_vec();
    for l in (0..blocks.len()).rev() {
        grad = block_backward(
            &grad, n_nodes, n_steps, d, n_heads, &blocks[l], &caches[l], &mut grads[l],
        );
    }
    grad
}

/// Pointwise affine head mapping `[.., d_model]` rows to `[.., c_out]`.
pub fn output_head(h: &[f64], rows: usize, d: usize, w: &Param, b: &Param) -> Result<Vec<f64>> {
    if h.len() != rows * d {
        return Err(Error::InvalidInput(format!(
            "output head input length {} does not match rows*d = {}",
            h.len(),
            rows * d
        )));
    }
    let c_out = b.data.len();
    Ok(affine_rows(h, rows, d, c_out, &w.data, &b.data))
}

/// Backward of [`output_head`]; returns the gradient w.r.t. `h`.
#[allow(clippy::too_many_arguments)]
pub fn output_head_backward(
    d_out: &[f64],
    h: &[f64],
    rows: usize,
    d: usize,
    w: &Param,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let c_out = db.len();
    let mut dh = vec![0.0; rows * d];
    matmul_nt(d_out, &w.data, rows, c_out, d, &mut dh);
    matmul_tn(h, d_out, rows, d, c_out, dw);
    for r in 0..rows {
        for c in 0..c_out {
            db[c] += d_out[r * c_out + c];
        }
    }
    dh
}
