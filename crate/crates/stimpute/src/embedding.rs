//! Input embedding: a 1-d convolution over time per node plus sinusoidal
//! positional encodings, summed.

use crate::error::{Error, Result};
use crate::model::Param;

/// Token-embedding convolution parameters.
///
/// `kernel` is `[d_model][c_in][k]` with odd width `k`; same-padding with
/// zeros preserves the sequence length. `d_model` must be even so the
/// sin/cos pairs of the positional encoding line up.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub kernel: Param,
    pub bias: Param,
    pub d_model: usize,
    pub c_in: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EmbeddingParams {
    pub fn zeros(d_model: usize, c_in: usize, width: usize) -> Result<Self> {
        if width.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "conv kernel width must be odd, got {width}"
            )));
        }
        if !d_model.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "d_model must be even, got {d_model}"
            )));
        }
        Ok(Self {
            kernel: Param::zeros(vec![d_model, c_in, width], false),
            bias: Param::zeros(vec![d_model], false),
            d_model,
            c_in,
            width,
        })
    }

    pub fn grads(&self) -> EmbeddingGrads {
        EmbeddingGrads {
            kernel: vec![0.0; self.kernel.data.len()],
            bias: vec![0.0; self.bias.data.len()],
        }
    }
}

/// Convolution along the time axis with zero same-padding, independently per
/// node. Input `[n][t][c_in]`, output `[n][t][d_model]`.
pub fn token_embed(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    p: &EmbeddingParams,
) -> Result<Vec<f64>> {
    if x.len() != n_nodes * n_steps * p.c_in {
        return Err(Error::InvalidInput(format!(
            "token_embed: input length {} does not match N*T*C = {}",
            x.len(),
            n_nodes * n_steps * p.c_in
        )));
    }
    let (d, c_in, k) = (p.d_model, p.c_in, p.width);
    let pad = k / 2;
    let mut out = vec![0.0; n_nodes * n_steps * d];
    for n in 0..n_nodes {
        let x_node = &x[n * n_steps * c_in..(n + 1) * n_steps * c_in];
        let out_node = &mut out[n * n_steps * d..(n + 1) * n_steps * d];
        for t in 0..n_steps {
            let out_row = &mut out_node[t * d..(t + 1) * d];
            out_row.copy_from_slice(&p.bias.data);
            for j in 0..k {
                let src = t as isize + j as isize - pad as isize;
                if src < 0 || src as usize >= n_steps {
                    continue;
                }
                let x_row = &x_node[src as usize * c_in..(src as usize + 1) * c_in];
                for (c, &xv) in x_row.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (dm, o) in out_row.iter_mut().enumerate() {
                        *o += xv * p.kernel.data[(dm * c_in + c) * k + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`token_embed`].
///
/// Accumulates kernel/bias gradients into `grads` and returns the gradient
/// with respect to the input.
pub fn token_embed_backward(
    d_out: &[f64],
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    p: &EmbeddingParams,
    grads: &mut EmbeddingGrads,
) -> Vec<f64> {
    let (d, c_in, k) = (p.d_model, p.c_in, p.width);
    let pad = k / 2;
    let mut dx = vec![0.0; x.len()];
    for n in 0..n_nodes {
        let x_node = &x[n * n_steps * c_in..(n + 1) * n_steps * c_in];
        let dx_node = &mut dx[n * n_steps * c_in..(n + 1) * n_steps * c_in];
        let dout_node = &d_out[n * n_steps * d..(n + 1) * n_steps * d];
        for t in 0..n_steps {
            let dout_row = &dout_node[t * d..(t + 1) * d];
            for (dm, &g) in dout_row.iter().enumerate() {
                grads.bias[dm] += g;
            }
            for j in 0..k {
                let src = t as isize + j as isize - pad as isize;
                if src < 0 || src as usize >= n_steps {
                    continue;
                }
                let s = src as usize;
                for c in 0..c_in {
                    let xv = x_node[s * c_in + c];
                    let dxv = &mut dx_node[s * c_in + c];
                    for (dm, &g) in dout_row.iter().enumerate() {
                        let widx = (dm * c_in + c) * k + j;
                        grads.kernel[widx] += g * xv;
                        *dxv += g * p.kernel.data[widx];
                    }
                }
            }
        }
    }
    dx
}

/// Sinusoidal positional encoding table `[t][d_model]`.
///
/// `PE[pos][2i] = sin(pos / 10000^(2i/d_model))` and
/// `PE[pos][2i+1] = cos(pos / 10000^(2i/d_model))`. Deterministic,
/// parameter-free, independent of the number of nodes.
pub fn positional_encoding(n_steps: usize, d_model: usize) -> Result<Vec<f64>> {
    if !d_model.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "positional encoding needs even d_model, got {d_model}"
        )));
    }
    let mut pe = vec![0.0; n_steps * d_model];
    for pos in 0..n_steps {
        for i in 0..d_model / 2 {
            let denom = 10000f64.powf(2.0 * i as f64 / d_model as f64);
            let angle = pos as f64 / denom;
            pe[pos * d_model + 2 * i] = angle.sin();
            pe[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Ok(pe)
}

/// Token embedding plus positional encoding broadcast across nodes.
pub fn embed(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    p: &EmbeddingParams,
) -> Result<Vec<f64>> {
    let mut out = token_embed(x, n_nodes, n_steps, p)?;
    let pe = positional_encoding(n_steps, p.d_model)?;
    for n in 0..n_nodes {
        let node = &mut out[n * n_steps * p.d_model..(n + 1) * n_steps * p.d_model];
        for (o, &e) in node.iter_mut().zip(pe.iter()) {
            *o += e;
        }
    }
    Ok(out)
}
