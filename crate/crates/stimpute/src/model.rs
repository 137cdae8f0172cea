//! Model assembly: named parameter tensors with freeze flags, deterministic
//! initialization, and the full forward/backward pipeline
//! (embedding -> graph attention -> frozen blocks -> output head).

use crate::adjacency::AdjacencyMatrix;
use crate::backbone::{
    backbone_backward, backbone_forward, backbone_forward_train, output_head,
    output_head_backward, BlockCache, BlockGrads, BlockParams,
};
use crate::embedding::{embed, token_embed_backward, EmbeddingGrads, EmbeddingParams};
use crate::error::{Error, Result};
use crate::gat::{
    drop_edge, gat_over_time, gat_over_time_backward, gat_over_time_train, GatGrads, GatParams,
    GatSequenceCache,
};
use crate::rng;
use crate::series::TimeSeriesTensor;

/// One named tensor with a freeze flag. Frozen tensors are never touched by
/// the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
    pub frozen: bool,
}

impl Param {
    pub fn zeros(shape: Vec<usize>, frozen: bool) -> Self {
        let len = shape.iter().product();
        Self {
            data: vec![0.0; len],
            shape,
            frozen,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Data channels per node; the observed-mask channel is appended
    /// internally, so the convolution consumes `c_in + 1` channels.
    pub c_in: usize,
    pub c_out: usize,
    pub d_model: usize,
    pub n_layers: usize,
    /// Attention heads inside each backbone block.
    pub n_heads: usize,
    /// Graph-attention heads; each has width `d_model / gat_heads`.
    pub gat_heads: usize,
    /// Token-embedding convolution width (odd).
    pub conv_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            c_in: 1,
            c_out: 1,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            gat_heads: 4,
            conv_width: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_in", self.c_in),
            ("c_out", self.c_out),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("gat_heads", self.gat_heads),
            ("conv_width", self.conv_width),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "d_model must be even, got {}",
                self.d_model
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidInput(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_model.is_multiple_of(self.gat_heads) {
            return Err(Error::InvalidInput(format!(
                "d_model {} must be divisible by gat_heads {}",
                self.d_model, self.gat_heads
            )));
        }
        if self.conv_width.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "conv_width must be odd, got {}",
                self.conv_width
            )));
        }
        Ok(())
    }

    /// Channels consumed by the embedding convolution (data + mask).
    pub fn in_channels(&self) -> usize {
        self.c_in + 1
    }
}

/// Every named tensor of the model: embedding and graph attention
/// (trainable), backbone blocks (attention/feed-forward frozen, layer norms
/// trainable), and the output head (trainable).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingParams,
    pub gat: GatParams,
    pub blocks: Vec<BlockParams>,
    pub head_w: Param,
    pub head_b: Param,
    pub config: ModelConfig,
}

/// Gradient buffers mirroring [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub embedding: EmbeddingGrads,
    pub gat: GatGrads,
    pub blocks: Vec<BlockGrads>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros(p: &ModelParams) -> Self {
        Self {
            embedding: p.embedding.grads(),
            gat: GatGrads::zeros(&p.gat),
            blocks: p.blocks.iter().map(BlockGrads::zeros).collect(),
            head_w: vec![0.0; p.head_w.len()],
            head_b: vec![0.0; p.head_b.len()],
        }
    }

    /// Accumulate `other` into `self`.
    pub fn add_assign(&mut self, other: &ModelGrads) {
        fn add(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        add(&mut self.embedding.kernel, &other.embedding.kernel);
        add(&mut self.embedding.bias, &other.embedding.bias);
        for (g, o) in self.gat.heads.iter_mut().zip(&other.gat.heads) {
            add(&mut g.w, &o.w);
            add(&mut g.a, &o.a);
        }
        for (g, o) in self.blocks.iter_mut().zip(&other.blocks) {
            add(&mut g.attn_q_w, &o.attn_q_w);
            add(&mut g.attn_q_b, &o.attn_q_b);
            add(&mut g.attn_k_w, &o.attn_k_w);
            add(&mut g.attn_k_b, &o.attn_k_b);
            add(&mut g.attn_v_w, &o.attn_v_w);
            add(&mut g.attn_v_b, &o.attn_v_b);
            add(&mut g.attn_o_w, &o.attn_o_w);
            add(&mut g.attn_o_b, &o.attn_o_b);
            add(&mut g.ff1_w, &o.ff1_w);
            add(&mut g.ff1_b, &o.ff1_b);
            add(&mut g.ff2_w, &o.ff2_w);
            add(&mut g.ff2_b, &o.ff2_b);
            add(&mut g.ln1_scale, &o.ln1_scale);
            add(&mut g.ln1_shift, &o.ln1_shift);
            add(&mut g.ln2_scale, &o.ln2_scale);
            add(&mut g.ln2_shift, &o.ln2_shift);
        }
        add(&mut self.head_w, &other.head_w);
        add(&mut self.head_b, &other.head_b);
    }

    /// Gradient slices in canonical tensor-name order.
    pub fn named(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out: Vec<(String, &Vec<f64>)> = vec![
            ("embed.conv.weight".into(), &self.embedding.kernel),
            ("embed.conv.bias".into(), &self.embedding.bias),
        ];
        for (k, head) in self.gat.heads.iter().enumerate() {
            out.push((format!("gat.h{k}.W"), &head.w));
            out.push((format!("gat.h{k}.a"), &head.a));
        }
        for (l, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{l}.attn.q.weight"), &b.attn_q_w));
            out.push((format!("block{l}.attn.q.bias"), &b.attn_q_b));
            out.push((format!("block{l}.attn.k.weight"), &b.attn_k_w));
            out.push((format!("block{l}.attn.k.bias"), &b.attn_k_b));
            out.push((format!("block{l}.attn.v.weight"), &b.attn_v_w));
            out.push((format!("block{l}.attn.v.bias"), &b.attn_v_b));
            out.push((format!("block{l}.attn.o.weight"), &b.attn_o_w));
            out.push((format!("block{l}.attn.o.bias"), &b.attn_o_b));
            out.push((format!("block{l}.ff.1.weight"), &b.ff1_w));
            out.push((format!("block{l}.ff.1.bias"), &b.ff1_b));
            out.push((format!("block{l}.ff.2.weight"), &b.ff2_w));
            out.push((format!("block{l}.ff.2.bias"), &b.ff2_b));
            out.push((format!("block{l}.ln1.scale"), &b.ln1_scale));
            out.push((format!("block{l}.ln1.shift"), &b.ln1_shift));
            out.push((format!("block{l}.ln2.scale"), &b.ln2_scale));
            out.push((format!("block{l}.ln2.shift"), &b.ln2_shift));
        }
        out.push(("head.weight".into(), &self.head_w));
        out.push(("head.bias".into(), &self.head_b));
        out
    }
}

impl ModelParams {
    /// Zero-valued parameter set with the configured shapes and freeze
    /// flags; used as the target structure when loading checkpoints.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let d_head = d / config.gat_heads;
        Ok(Self {
            embedding: EmbeddingParams::zeros(d, config.in_channels(), config.conv_width)?,
            gat: GatParams::zeros(config.gat_heads, d, d_head, 0.2)?,
            blocks: (0..config.n_layers).map(|_| BlockParams::zeros(d)).collect(),
            head_w: Param::zeros(vec![d, config.c_out], false),
            head_b: Param::zeros(vec![config.c_out], false),
            config: *config,
        })
    }

    /// All tensors in canonical name order.
    pub fn named(&self) -> Vec<(String, &Param)> {
        let mut out: Vec<(String, &Param)> = vec![
            ("embed.conv.weight".into(), &self.embedding.kernel),
            ("embed.conv.bias".into(), &self.embedding.bias),
        ];
        for (k, head) in self.gat.heads.iter().enumerate() {
            out.push((format!("gat.h{k}.W"), &head.w));
            out.push((format!("gat.h{k}.a"), &head.a));
        }
        for (l, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{l}.attn.q.weight"), &b.attn_q_w));
            out.push((format!("block{l}.attn.q.bias"), &b.attn_q_b));
            out.push((format!("block{l}.attn.k.weight"), &b.attn_k_w));
            out.push((format!("block{l}.attn.k.bias"), &b.attn_k_b));
            out.push((format!("block{l}.attn.v.weight"), &b.attn_v_w));
            out.push((format!("block{l}.attn.v.bias"), &b.attn_v_b));
            out.push((format!("block{l}.attn.o.weight"), &b.attn_o_w));
            out.push((format!("block{l}.attn.o.bias"), &b.attn_o_b));
            out.push((format!("block{l}.ff.1.weight"), &b.ff1_w));
            out.push((format!("block{l}.ff.1.bias"), &b.ff1_b));
            out.push((format!("block{l}.ff.2.weight"), &b.ff2_w));
            out.push((format!("block{l}.ff.2.bias"), &b.ff2_b));
            out.push((format!("block{l}.ln1.scale"), &b.ln1_scale));
            out.push((format!("block{l}.ln1.shift"), &b.ln1_shift));
            out.push((format!("block{l}.ln2.scale"), &b.ln2_scale));
            out.push((format!("block{l}.ln2.shift"), &b.ln2_shift));
        }
        out.push(("head.weight".into(), &self.head_w));
        out.push(("head.bias".into(), &self.head_b));
        out
    }

    /// Mutable variant of [`Self::named`], same order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out: Vec<(String, &mut Param)> = vec![
            ("embed.conv.weight".into(), &mut self.embedding.kernel),
            ("embed.conv.bias".into(), &mut self.embedding.bias),
        ];
        for (k, head) in self.gat.heads.iter_mut().enumerate() {
            out.push((format!("gat.h{k}.W"), &mut head.w));
            out.push((format!("gat.h{k}.a"), &mut head.a));
        }
        for (l, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{l}.attn.q.weight"), &mut b.attn_q_w));
            out.push((format!("block{l}.attn.q.bias"), &mut b.attn_q_b));
            out.push((format!("block{l}.attn.k.weight"), &mut b.attn_k_w));
            out.push((format!("block{l}.attn.k.bias"), &mut b.attn_k_b));
            out.push((format!("block{l}.attn.v.weight"), &mut b.attn_v_w));
            out.push((format!("block{l}.attn.v.bias"), &mut b.attn_v_b));
            out.push((format!("block{l}.attn.o.weight"), &mut b.attn_o_w));
            out.push((format!("block{l}.attn.o.bias"), &mut b.attn_o_b));
            out.push((format!("block{l}.ff.1.weight"), &mut b.ff1_w));
            out.push((format!("block{l}.ff.1.bias"), &mut b.ff1_b));
            out.push((format!("block{l}.ff.2.weight"), &mut b.ff2_w));
            out.push((format!("block{l}.ff.2.bias"), &mut b.ff2_b));
            out.push((format!("block{l}.ln1.scale"), &mut b.ln1_scale));
            out.push((format!("block{l}.ln1.shift"), &mut b.ln1_shift));
            out.push((format!("block{l}.ln2.scale"), &mut b.ln2_scale));
            out.push((format!("block{l}.ln2.shift"), &mut b.ln2_shift));
        }
        out.push(("head.weight".into(), &mut self.head_w));
        out.push(("head.bias".into(), &mut self.head_b));
        out
    }

    /// Total scalar count over tensors with `frozen == false`.
    pub fn trainable_parameter_count(&self) -> usize {
        self.named()
            .iter()
            .filter(|(_, p)| !p.frozen)
            .map(|(_, p)| p.len())
            .sum()
    }

    /// Total scalar count over frozen tensors.
    pub fn frozen_parameter_count(&self) -> usize {
        self.named()
            .iter()
            .filter(|(_, p)| p.frozen)
            .map(|(_, p)| p.len())
            .sum()
    }
}

/// Deterministically initialize a model for the given seed.
///
/// Embedding convolution and head use fan-in uniform ranges; graph-attention
/// projections likewise. Backbone weights draw from a 0.02-std normal with
/// residual output projections scaled down by `1/sqrt(2 L)`; layer norms
/// start at identity. Freeze flags follow the policy: attention and
/// feed-forward frozen, layer norms (plus embedding, graph attention, head)
/// trainable.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let d = config.d_model;
    let c_in = config.in_channels();
    let k = config.conv_width;
    let mut stream = rng::stream(seed);

    let uniform = |bound: f64, data: &mut [f64], rng: &mut rand_chacha::ChaCha8Rng| {
        use rand::Rng;
        for v in data.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
    };

    let mut embedding = EmbeddingParams::zeros(d, c_in, k)?;
    let conv_bound = 1.0 / ((c_in * k) as f64).sqrt();
    uniform(conv_bound, &mut embedding.kernel.data, &mut stream);

    let d_head = d / config.gat_heads;
    let mut gat = GatParams::zeros(config.gat_heads, d, d_head, 0.2)?;
    let w_bound = 1.0 / (d as f64).sqrt();
    let a_bound = 1.0 / ((2 * d_head) as f64).sqrt();
    for head in gat.heads.iter_mut() {
        uniform(w_bound, &mut head.w.data, &mut stream);
        uniform(a_bound, &mut head.a.data, &mut stream);
    }

    let residual_scale = 1.0 / ((2 * config.n_layers) as f64).sqrt();
    let mut blocks = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let mut b = BlockParams::zeros(d);
        for w in [&mut b.attn_q_w, &mut b.attn_k_w, &mut b.attn_v_w, &mut b.ff1_w] {
            for v in w.data.iter_mut() {
                *v = rng::gaussian(&mut stream) * 0.02;
            }
        }
        for w in [&mut b.attn_o_w, &mut b.ff2_w] {
            for v in w.data.iter_mut() {
                *v = rng::gaussian(&mut stream) * 0.02 * residual_scale;
            }
        }
        blocks.push(b);
    }

    let mut head_w = Param::zeros(vec![d, config.c_out], false);
    uniform(w_bound, &mut head_w.data, &mut stream);
    let head_b = Param::zeros(vec![config.c_out], false);

    Ok(ModelParams {
        embedding,
        gat,
        blocks,
        head_w,
        head_b,
        config: *config,
    })
}

/// Whether a forward pass is training (DropEdge active) or inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    Eval,
    Train { dropedge_p: f64, seed: u64 },
}

/// Model input `[n][t][c_in + 1]`: observed values (zero where missing) plus
/// the observed mask as the final channel.
pub fn build_input(t: &TimeSeriesTensor, config: &ModelConfig) -> Result<Vec<f64>> {
    if t.n_channels != config.c_in {
        return Err(Error::InvalidInput(format!(
            "tensor has {} channels but the model expects {}",
            t.n_channels, config.c_in
        )));
    }
    let c_total = config.in_channels();
    let mut input = vec![0.0; t.n_nodes * t.n_steps * c_total];
    for n in 0..t.n_nodes {
        for s in 0..t.n_steps {
            let base = (n * t.n_steps + s) * c_total;
            if t.is_observed(n, s) {
                for c in 0..config.c_in {
                    input[base + c] = t.value(n, s, c);
                }
                input[base + config.c_in] = 1.0;
            }
        }
    }
    Ok(input)
}

fn check_model_input(t: &TimeSeriesTensor, adj: &AdjacencyMatrix, p: &ModelParams) -> Result<()> {
    p.config.validate()?;
    if adj.n_nodes != t.n_nodes {
        return Err(Error::InvalidInput(format!(
            "adjacency is over {} nodes but the series has {}",
            adj.n_nodes, t.n_nodes
        )));
    }
    Ok(())
}

/// Full forward pass: normalized series in, predictions `[n][t][c_out]` in
/// normalized units out. DropEdge applies only in training mode, with one
/// edge mask shared across time steps and heads.
pub fn model_forward(
    t: &TimeSeriesTensor,
    adj: &AdjacencyMatrix,
    params: &ModelParams,
    mode: ForwardMode,
) -> Result<Vec<f64>> {
    check_model_input(t, adj, params)?;
    let cfg = &params.config;
    let (n, steps) = (t.n_nodes, t.n_steps);
    let input = build_input(t, cfg)?;
    let emb = embed(&input, n, steps, &params.embedding)?;
    let dropped;
    let adj_used = match mode {
        ForwardMode::Eval => adj,
        ForwardMode::Train { dropedge_p, seed } => {
            dropped = drop_edge(adj, dropedge_p, seed)?;
            &dropped
        }
    };
    let gat_out = gat_over_time(&emb, n, steps, adj_used, &params.gat)?;
    let hidden = backbone_forward(&gat_out, n, steps, cfg.d_model, cfg.n_heads, &params.blocks)?;
    output_head(&hidden, n * steps, cfg.d_model, &params.head_w, &params.head_b)
}

/// Saved activations from [`model_forward_train`].
pub struct ModelCache {
    input: Vec<f64>,
    emb: Vec<f64>,
    gat_cache: GatSequenceCache,
    block_caches: Vec<BlockCache>,
    hidden: Vec<f64>,
    n_nodes: usize,
    n_steps: usize,
}

/// Training forward pass retaining everything the backward pass needs.
pub fn model_forward_train(
    t: &TimeSeriesTensor,
    adj: &AdjacencyMatrix,
    params: &ModelParams,
    mode: ForwardMode,
) -> Result<(Vec<f64>, ModelCache)> {
    check_model_input(t, adj, params)?;
    let cfg = &params.config;
    let (n, steps) = (t.n_nodes, t.n_steps);
    let input = build_input(t, cfg)?;
    let emb = embed(&input, n, steps, &params.embedding)?;
    let dropped;
    let adj_used = match mode {
        ForwardMode::Eval => adj,
        ForwardMode::Train { dropedge_p, seed } => {
            dropped = drop_edge(adj, dropedge_p, seed)?;
            &dropped
        }
    };
    let (gat_out, gat_cache) = gat_over_time_train(&emb, n, steps, adj_used, &params.gat)?;
    let (hidden, block_caches) =
        backbone_forward_train(&gat_out, n, steps, cfg.d_model, cfg.n_heads, &params.blocks)?;
    let pred = output_head(&hidden, n * steps, cfg.d_model, &params.head_w, &params.head_b)?;
    Ok((
        pred,
        ModelCache {
            input,
            emb,
            gat_cache,
            block_caches,
            hidden,
            n_nodes: n,
            n_steps: steps,
        },
    ))
}

/// Backward pass from a prediction gradient; returns gradients for every
/// tensor (frozen ones included; the optimizer decides what to apply).
pub fn model_backward(
    d_pred: &[f64],
    cache: &ModelCache,
    params: &ModelParams,
) -> ModelGrads {
    let cfg = &params.config;
    let (n, steps) = (cache.n_nodes, cache.n_steps);
    let rows = n * steps;
    let mut grads = ModelGrads::zeros(params);

    let d_hidden = output_head_backward(
        d_pred,
        &cache.hidden,
        rows,
        cfg.d_model,
        &params.head_w,
        &mut grads.head_w,
        &mut grads.head_b,
    );
    let d_gat_out = backbone_backward(
        &d_hidden,
        n,
        steps,
        cfg.d_model,
        cfg.n_heads,
        &params.blocks,
        &cache.block_caches,
        &mut grads.blocks,
    );
    let d_emb = gat_over_time_backward(
        &d_gat_out,
        &cache.emb,
        n,
        steps,
        &params.gat,
        &cache.gat_cache,
        &mut grads.gat,
    );
    let _ = token_embed_backward(
        &d_emb,
        &cache.input,
        n,
        steps,
        &params.embedding,
        &mut grads.embedding,
    );
    grads
}
