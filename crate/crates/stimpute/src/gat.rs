//! Multi-head graph attention applied per time step across nodes, with
//! DropEdge regularization during training.
//!
//! Per head: `H = X W`, scores `e_ij = LeakyReLU(a^T [H_i || H_j])` over the
//! neighborhood `N(i) = { j : A[i][j] > 0 }`, attention `alpha_ij` softmax
//! over `N(i)`, and output `ELU(sum_j alpha_ij H_j)`. Heads concatenate in
//! declared order. Adjacency weights define topology only; they do not scale
//! the attention scores.

use rand::Rng;

use crate::adjacency::AdjacencyMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, matmul_nn, matmul_nt, matmul_tn};
use crate::model::Param;
use crate::rng;

/// One attention head: projection `w` of shape `[d_in][d_head]` and score
/// vector `a` of length `2 * d_head`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    pub w: Param,
    pub a: Param,
}

/// All heads plus the LeakyReLU slope. `K * d_head` is the output width.
#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub heads: Vec<GatHead>,
    pub d_in: usize,
    pub d_head: usize,
    pub leaky_slope: f64,
}

impl GatParams {
    pub fn zeros(n_heads: usize, d_in: usize, d_head: usize, leaky_slope: f64) -> Result<Self> {
        if n_heads == 0 || d_in == 0 || d_head == 0 {
            return Err(Error::InvalidInput(
                "graph attention dimensions must be positive".into(),
            ));
        }
        if !(0.0 < leaky_slope && leaky_slope < 1.0) {
            return Err(Error::InvalidInput(format!(
                "leaky slope must be in (0, 1), got {leaky_slope}"
            )));
        }
        let heads = (0..n_heads)
            .map(|_| GatHead {
                w: Param::zeros(vec![d_in, d_head], false),
                a: Param::zeros(vec![2 * d_head], false),
            })
            .collect();
        Ok(Self {
            heads,
            d_in,
            d_head,
            leaky_slope,
        })
    }

    pub fn d_out(&self) -> usize {
        self.heads.len() * self.d_head
    }
}

#[derive(Debug, Clone)]
pub struct GatHeadGrads {
    pub w: Vec<f64>,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GatGrads {
    pub heads: Vec<GatHeadGrads>,
}

impl GatGrads {
    pub fn zeros(p: &GatParams) -> Self {
        Self {
            heads: p
                .heads
                .iter()
                .map(|h| GatHeadGrads {
                    w: vec![0.0; h.w.data.len()],
                    a: vec![0.0; h.a.data.len()],
                })
                .collect(),
        }
    }
}

/// Zero out off-diagonal edges independently with probability `p`.
///
/// Self-loops are never dropped. Deterministic per seed; draws iterate the
/// full off-diagonal grid so the stream does not depend on sparsity.
pub fn drop_edge(adj: &AdjacencyMatrix, p: f64, seed: u64) -> Result<AdjacencyMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "drop probability must be in [0, 1], got {p}"
        )));
    }
    let mut out = adj.clone();
    if p == 0.0 {
        return Ok(out);
    }
    let mut stream = rng::stream(seed);
    let n = adj.n_nodes;
    for i in 0..n {
        for j in 0..n {
            let u: f64 = stream.random();
            if i != j && u < p {
                out.set_weight(i, j, 0.0);
            }
        }
    }
    Ok(out)
}

/// Neighbor lists under the adjacency; errors on any isolated node.
pub fn neighbor_lists(adj: &AdjacencyMatrix) -> Result<Vec<Vec<usize>>> {
    let mut lists = Vec::with_capacity(adj.n_nodes);
    for i in 0..adj.n_nodes {
        let neigh: Vec<usize> = adj.neighbors(i).collect();
        if neigh.is_empty() {
            return Err(Error::IsolatedNode(i));
        }
        lists.push(neigh);
    }
    Ok(lists)
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp() - 1.0
    }
}

fn elu_prime(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        v.exp()
    }
}

/// Intermediate state of one head at one time step, kept for backward.
pub struct GatHeadCache {
    /// Projected features `X W`, `[n][d_head]`.
    h: Vec<f64>,
    /// `a1 . h_i` per node.
    score_self: Vec<f64>,
    /// `a2 . h_j` per node.
    score_neigh: Vec<f64>,
    /// Dense `[n][n]` attention, zero outside the neighborhood.
    alpha: Vec<f64>,
    /// Pre-activation aggregate `sum_j alpha_ij h_j`, `[n][d_head]`.
    pre_act: Vec<f64>,
}

fn head_forward(
    x: &[f64],
    n_nodes: usize,
    neighbors: &[Vec<usize>],
    head: &GatHead,
    d_in: usize,
    d_head: usize,
    slope: f64,
) -> (Vec<f64>, GatHeadCache) {
    let mut h = vec![0.0; n_nodes * d_head];
    matmul_nn(x, &head.w.data, n_nodes, d_in, d_head, &mut h);

    let a1 = &head.a.data[..d_head];
    let a2 = &head.a.data[d_head..];
    let mut score_self = vec![0.0; n_nodes];
    let mut score_neigh = vec![0.0; n_nodes];
    for i in 0..n_nodes {
        let hi = &h[i * d_head..(i + 1) * d_head];
        score_self[i] = dot(a1, hi);
        score_neigh[i] = dot(a2, hi);
    }

    let mut alpha = vec![0.0; n_nodes * n_nodes];
    let mut pre_act = vec![0.0; n_nodes * d_head];
    let mut out = vec![0.0; n_nodes * d_head];
    let mut scores: Vec<f64> = Vec::new();
    for i in 0..n_nodes {
        let neigh = &neighbors[i];
        scores.clear();
        scores.extend(neigh.iter().map(|&j| {
            let e = score_self[i] + score_neigh[j];
            if e > 0.0 {
                e
            } else {
                slope * e
            }
        }));
        crate::linalg::softmax_inplace(&mut scores);
        let row = &mut pre_act[i * d_head..(i + 1) * d_head];
        for (&j, &a) in neigh.iter().zip(scores.iter()) {
            alpha[i * n_nodes + j] = a;
            let hj = &h[j * d_head..(j + 1) * d_head];
            for (r, &v) in row.iter_mut().zip(hj) {
                *r += a * v;
            }
        }
        let out_row = &mut out[i * d_head..(i + 1) * d_head];
        for (o, &v) in out_row.iter_mut().zip(row.iter()) {
            *o = elu(v);
        }
    }

    (
        out,
        GatHeadCache {
            h,
            score_self,
            score_neigh,
            alpha,
            pre_act,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn head_backward(
    d_out: &[f64],
    x: &[f64],
    n_nodes: usize,
    neighbors: &[Vec<usize>],
    head: &GatHead,
    cache: &GatHeadCache,
    d_in: usize,
    d_head: usize,
    slope: f64,
    grads: &mut GatHeadGrads,
    dx: &mut [f64],
) {
    let a1 = &head.a.data[..d_head];
    let a2 = &head.a.data[d_head..];

    let mut dh = vec![0.0; n_nodes * d_head];
    let mut d_score_self = vec![0.0; n_nodes];
    let mut d_score_neigh = vec![0.0; n_nodes];

    let mut ds = vec![0.0; d_head];
    for i in 0..n_nodes {
        // Through the ELU.
        for d in 0..d_head {
            ds[d] = d_out[i * d_head + d] * elu_prime(cache.pre_act[i * d_head + d]);
        }
        let neigh = &neighbors[i];
        // d alpha_ij and the direct path into h_j.
        let mut d_alpha: Vec<f64> = Vec::with_capacity(neigh.len());
        for &j in neigh {
            let a = cache.alpha[i * n_nodes + j];
            let hj = &cache.h[j * d_head..(j + 1) * d_head];
            d_alpha.push(dot(&ds, hj));
            let dhj = &mut dh[j * d_head..(j + 1) * d_head];
            for (g, &v) in dhj.iter_mut().zip(ds.iter()) {
                *g += a * v;
            }
        }
        // Softmax over the neighborhood.
        let mut weighted = 0.0;
        for (&j, &da) in neigh.iter().zip(d_alpha.iter()) {
            weighted += cache.alpha[i * n_nodes + j] * da;
        }
        for (&j, &da) in neigh.iter().zip(d_alpha.iter()) {
            let a = cache.alpha[i * n_nodes + j];
            let de = a * (da - weighted);
            // LeakyReLU on the raw score.
            let raw = cache.score_self[i] + cache.score_neigh[j];
            let dpre = de * if raw > 0.0 { 1.0 } else { slope };
            d_score_self[i] += dpre;
            d_score_neigh[j] += dpre;
        }
    }

    // Scores are dot products with halves of `a`.
    for i in 0..n_nodes {
        let hi = &cache.h[i * d_head..(i + 1) * d_head];
        let dhi = &mut dh[i * d_head..(i + 1) * d_head];
        for d in 0..d_head {
            grads.a[d] += d_score_self[i] * hi[d];
            grads.a[d_head + d] += d_score_neigh[i] * hi[d];
            dhi[d] += d_score_self[i] * a1[d] + d_score_neigh[i] * a2[d];
        }
    }

    // Projection: h = x w.
    matmul_tn(x, &dh, n_nodes, d_in, d_head, &mut grads.w);
    matmul_nt(&dh, &head.w.data, n_nodes, d_head, d_in, dx);
}

/// Single-head forward over one time step's node features `[n][d_in]`.
pub fn gat_head(
    x: &[f64],
    adj: &AdjacencyMatrix,
    head: &GatHead,
    d_in: usize,
    d_head: usize,
    slope: f64,
) -> Result<Vec<f64>> {
    Ok(gat_head_with_attention(x, adj, head, d_in, d_head, slope)?.0)
}

/// Like [`gat_head`] but also returns the dense `[n][n]` attention matrix
/// (zero outside the neighborhood).
pub fn gat_head_with_attention(
    x: &[f64],
    adj: &AdjacencyMatrix,
    head: &GatHead,
    d_in: usize,
    d_head: usize,
    slope: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = adj.n_nodes;
    if x.len() != n * d_in {
        return Err(Error::InvalidInput(format!(
            "gat_head: input length {} does not match N*d_in = {}",
            x.len(),
            n * d_in
        )));
    }
    let neighbors = neighbor_lists(adj)?;
    let (out, cache) = head_forward(x, n, &neighbors, head, d_in, d_head, slope);
    Ok((out, cache.alpha))
}

/// Concatenation of all heads in declared order, `[n][K * d_head]`.
pub fn gat_multi_head(x: &[f64], adj: &AdjacencyMatrix, p: &GatParams) -> Result<Vec<f64>> {
    let n = adj.n_nodes;
    if x.len() != n * p.d_in {
        return Err(Error::InvalidInput(format!(
            "gat_multi_head: input length {} does not match N*d_in = {}",
            x.len(),
            n * p.d_in
        )));
    }
    let neighbors = neighbor_lists(adj)?;
    let d_out = p.d_out();
    let mut out = vec![0.0; n * d_out];
    for (k, head) in p.heads.iter().enumerate() {
        let (head_out, _) = head_forward(x, n, &neighbors, head, p.d_in, p.d_head, p.leaky_slope);
        for i in 0..n {
            out[i * d_out + k * p.d_head..i * d_out + (k + 1) * p.d_head]
                .copy_from_slice(&head_out[i * p.d_head..(i + 1) * p.d_head]);
        }
    }
    Ok(out)
}

/// Per-step caches for the backward pass: `[step][head]`.
pub struct GatSequenceCache {
    steps: Vec<Vec<GatHeadCache>>,
    neighbors: Vec<Vec<usize>>,
}

/// Apply [`gat_multi_head`] independently at each time step with shared
/// parameters and a shared adjacency. Input `[n][t][d_in]`, output
/// `[n][t][K * d_head]`.
pub fn gat_over_time(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    adj: &AdjacencyMatrix,
    p: &GatParams,
) -> Result<Vec<f64>> {
    gat_over_time_inner(x, n_nodes, n_steps, adj, p, false).map(|(out, _)| out)
}

/// Training-mode variant that retains caches for [`gat_over_time_backward`].
pub fn gat_over_time_train(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    adj: &AdjacencyMatrix,
    p: &GatParams,
) -> Result<(Vec<f64>, GatSequenceCache)> {
    let (out, cache) = gat_over_time_inner(x, n_nodes, n_steps, adj, p, true)?;
    Ok((out, cache.expect("cache requested")))
}

fn gat_over_time_inner(
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    adj: &AdjacencyMatrix,
    p: &GatParams,
    keep_cache: bool,
) -> Result<(Vec<f64>, Option<GatSequenceCache>)> {
    if adj.n_nodes != n_nodes {
        return Err(Error::InvalidInput(format!(
            "adjacency is over {} nodes but input has {n_nodes}",
            adj.n_nodes
        )));
    }
    if x.len() != n_nodes * n_steps * p.d_in {
        return Err(Error::InvalidInput(format!(
            "gat_over_time: input length {} does not match N*T*d_in = {}",
            x.len(),
            n_nodes * n_steps * p.d_in
        )));
    }
    let neighbors = neighbor_lists(adj)?;
    let d_out = p.d_out();
    let mut out = vec![0.0; n_nodes * n_steps * d_out];
    let mut steps: Vec<Vec<GatHeadCache>> = Vec::new();
    let mut x_t = vec![0.0; n_nodes * p.d_in];
    for t in 0..n_steps {
        for n in 0..n_nodes {
            let src = (n * n_steps + t) * p.d_in;
            x_t[n * p.d_in..(n + 1) * p.d_in].copy_from_slice(&x[src..src + p.d_in]);
        }
        let mut head_caches = Vec::new();
        for (k, head) in p.heads.iter().enumerate() {
            let (head_out, cache) =
                head_forward(&x_t, n_nodes, &neighbors, head, p.d_in, p.d_head, p.leaky_slope);
            for n in 0..n_nodes {
                let dst = (n * n_steps + t) * d_out + k * p.d_head;
                out[dst..dst + p.d_head]
                    .copy_from_slice(&head_out[n * p.d_head..(n + 1) * p.d_head]);
            }
            if keep_cache {
                head_caches.push(cache);
            }
        }
        if keep_cache {
            steps.push(head_caches);
        }
    }
    let cache = keep_cache.then_some(GatSequenceCache { steps, neighbors });
    Ok((out, cache))
}

/// Backward pass of [`gat_over_time_train`]. Returns the input gradient and
/// accumulates parameter gradients.
pub fn gat_over_time_backward(
    d_out: &[f64],
    x: &[f64],
    n_nodes: usize,
    n_steps: usize,
    p: &GatParams,
    cache: &GatSequenceCache,
    grads: &mut GatGrads,
) -> Vec<f64> {
    let d_out_width = p.d_out();
    let mut dx = vec![0.0; n_nodes * n_steps * p.d_in];
    let mut x_t = vec![0.0; n_nodes * p.d_in];
    let mut d_head_out = vec![0.0; n_nodes * p.d_head];
    let mut dx_t = vec![0.0; n_nodes * p.d_in];
    for t in 0..n_steps {
        for n in 0..n_nodes {
            let src = (n * n_steps + t) * p.d_in;
            x_t[n * p.d_in..(n + 1) * p.d_in].copy_from_slice(&x[src..src + p.d_in]);
        }
        dx_t.iter_mut().for_each(|v| *v = 0.0);
        for (k, head) in p.heads.iter().enumerate() {
            for n in 0..n_nodes {
                let src = (n * n_steps + t) * d_out_width + k * p.d_head;
                d_head_out[n * p.d_head..(n + 1) * p.d_head]
                    .copy_from_slice(&d_out[src..src + p.d_head]);
            }
            head_backward(
                &d_head_out,
                &x_t,
                n_nodes,
                &cache.neighbors,
                head,
                &cache.steps[t][k],
                p.d_in,
                p.d_head,
                p.leaky_slope,
                &mut grads.heads[k],
                &mut dx_t,
            );
        }
        for n in 0..n_nodes {
            let dst = (n * n_steps + t) * p.d_in;
            dx[dst..dst + p.d_in].copy_from_slice(&dx_t[n * p.d_in..(n + 1) * p.d_in]);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::{build_adjacency, Sigma};

    fn head_with(w: Vec<f64>, a: Vec<f64>, d_in: usize, d_head: usize) -> GatHead {
        GatHead {
            w: Param {
                data: w,
                shape: vec![d_in, d_head],
                frozen: false,
            },
            a: Param {
                data: a,
                shape: vec![2 * d_head],
                frozen: false,
            },
        }
    }

    fn full_adj(n: usize) -> AdjacencyMatrix {
        AdjacencyMatrix {
            weights: vec![1.0; n * n],
            n_nodes: n,
            self_loops: true,
        }
    }

    #[test]
    fn single_node_self_loop_degenerates_to_projected_elu() {
        let head = head_with(vec![2.0, -1.0], vec![0.3, -0.7, 0.1, 0.4], 1, 2);
        let adj = AdjacencyMatrix::identity(1);
        let (out, alpha) = gat_head_with_attention(&[1.5], &adj, &head, 1, 2, 0.2).unwrap();
        assert_eq!(alpha[0], 1.0);
        assert!((out[0] - 3.0).abs() < 1e-12); // ELU(1.5 * 2) = 3
        let neg: f64 = -1.5;
        assert!((out[1] - (neg.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_features_fully_connected_attend_uniformly() {
        let head = head_with(vec![0.5, 0.4, -0.3, 0.9], vec![0.2, -0.5, 0.7, 0.1], 2, 2);
        let x = vec![1.0, -2.0, 1.0, -2.0]; // two identical nodes
        let (_, alpha) = gat_head_with_attention(&x, &full_adj(2), &head, 2, 2, 0.2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((alpha[i * 2 + j] - 0.5).abs() < 1e-12);
            }
        }
    }

    /// Brute-force scalar evaluation of one head on a 3-node path graph,
    /// written step by step from the attention equations.
    #[test]
    fn path_graph_matches_scalar_oracle() {
        let (d_in, d_head, slope) = (2usize, 2usize, 0.2f64);
        let w = vec![0.6, -0.2, 0.3, 0.8];
        let a = vec![0.5, -0.4, 0.1, 0.9];
        let x = vec![1.0, 0.5, -0.7, 0.2, 0.4, -1.1];
        // Path 0 - 1 - 2 with self loops.
        let mut adj = AdjacencyMatrix::identity(3);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            adj.set_weight(i, j, 0.8);
        }

        // Oracle, scalar arithmetic only.
        let lrelu = |v: f64| if v > 0.0 { v } else { slope * v };
        let elu_s = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
        let mut h = [[0.0f64; 2]; 3];
        for i in 0..3 {
            for d in 0..2 {
                h[i][d] = x[i * 2] * w[d] + x[i * 2 + 1] * w[2 + d];
            }
        }
        let neigh: [&[usize]; 3] = [&[0, 1], &[0, 1, 2], &[1, 2]];
        let mut expect = [[0.0f64; 2]; 3];
        for i in 0..3 {
            let scores: Vec<f64> = neigh[i]
                .iter()
                .map(|&j| {
                    lrelu(
                        a[0] * h[i][0] + a[1] * h[i][1] + a[2] * h[j][0] + a[3] * h[j][1],
                    )
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for d in 0..2 {
                let mut acc = 0.0;
                for (idx, &j) in neigh[i].iter().enumerate() {
                    acc += exps[idx] / z * h[j][d];
                }
                expect[i][d] = elu_s(acc);
            }
        }

        let head = head_with(w, a, d_in, d_head);
        let out = gat_head(&x, &adj, &head, d_in, d_head, slope).unwrap();
        for i in 0..3 {
            for d in 0..2 {
                assert!(
                    (out[i * 2 + d] - expect[i][d]).abs() < 1e-12,
                    "node {i} dim {d}: {} vs {}",
                    out[i * 2 + d],
                    expect[i][d]
                );
            }
        }
    }

    #[test]
    fn multi_head_concatenates_in_declared_order() {
        let h0 = head_with(vec![0.6, -0.2, 0.3, 0.8], vec![0.5, -0.4, 0.1, 0.9], 2, 2);
        let h1 = head_with(vec![-0.1, 0.7, 0.2, -0.9], vec![0.3, 0.3, -0.6, 0.2], 2, 2);
        let x = vec![1.0, 0.5, -0.7, 0.2, 0.4, -1.1];
        let adj = full_adj(3);
        let p = GatParams {
            heads: vec![h0.clone(), h1.clone()],
            d_in: 2,
            d_head: 2,
            leaky_slope: 0.2,
        };
        let multi = gat_multi_head(&x, &adj, &p).unwrap();
        let lone0 = gat_head(&x, &adj, &h0, 2, 2, 0.2).unwrap();
        let lone1 = gat_head(&x, &adj, &h1, 2, 2, 0.2).unwrap();
        for i in 0..3 {
            assert_eq!(&multi[i * 4..i * 4 + 2], &lone0[i * 2..(i + 1) * 2]);
            assert_eq!(&multi[i * 4 + 2..i * 4 + 4], &lone1[i * 2..(i + 1) * 2]);
        }

        // Duplicate head parameters repeat the single-head result.
        let dup = GatParams {
            heads: vec![h0.clone(), h0],
            d_in: 2,
            d_head: 2,
            leaky_slope: 0.2,
        };
        let rep = gat_multi_head(&x, &adj, &dup).unwrap();
        for i in 0..3 {
            assert_eq!(&rep[i * 4..i * 4 + 2], &rep[i * 4 + 2..i * 4 + 4]);
        }

        // K = 1 is identical to the lone head.
        let single = GatParams {
            heads: vec![h1],
            d_in: 2,
            d_head: 2,
            leaky_slope: 0.2,
        };
        assert_eq!(gat_multi_head(&x, &adj, &single).unwrap(), lone1);
    }

    #[test]
    fn drop_edge_degenerate_probabilities() {
        let adj = build_adjacency(
            4,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)],
            Sigma::Fixed(2.0),
            0.1,
            true,
        )
        .unwrap();
        let same = drop_edge(&adj, 0.0, 7).unwrap();
        assert_eq!(same, adj);

        let only_loops = drop_edge(&adj, 1.0, 7).unwrap();
        assert_eq!(only_loops.off_diagonal_edge_count(), 0);
        for i in 0..4 {
            assert_eq!(only_loops.weight(i, i), 1.0);
        }
    }

    #[test]
    fn drop_edge_survival_is_binomial() {
        // Dense graph with exactly 1000 off-diagonal edges.
        let n = 40; // 40*39 = 1560 slots; zero out the rest
        let mut adj = AdjacencyMatrix::identity(n);
        let mut placed = 0;
        'outer: for i in 0..n {
            for j in 0..n {
                if i != j {
                    adj.set_weight(i, j, 0.5);
                    placed += 1;
                    if placed == 1000 {
                        break 'outer;
                    }
                }
            }
        }
        assert_eq!(adj.off_diagonal_edge_count(), 1000);
        for seed in 0..5 {
            let dropped = drop_edge(&adj, 0.5, seed).unwrap();
            let surviving = dropped.off_diagonal_edge_count();
            assert!(
                (453..=547).contains(&surviving),
                "seed {seed}: {surviving} survivors outside binomial bound"
            );
            for i in 0..n {
                assert_eq!(dropped.weight(i, i), 1.0, "self-loop dropped at {i}");
            }
        }
    }

    #[test]
    fn isolated_node_is_an_explicit_error() {
        let mut adj = AdjacencyMatrix::identity(3);
        adj.set_weight(1, 1, 0.0); // node 1 now has no neighbors
        adj.self_loops = false;
        let p = GatParams::zeros(1, 2, 2, 0.2).unwrap();
        let x = vec![0.0; 6];
        match gat_multi_head(&x, &adj, &p) {
            Err(Error::IsolatedNode(1)) => {}
            other => panic!("expected IsolatedNode(1), got {other:?}"),
        }
    }

    #[test]
    fn attention_rows_sum_to_one_and_respect_topology() {
        let mut adj = AdjacencyMatrix::identity(5);
        for (i, j) in [(0, 1), (1, 0), (1, 3), (3, 1), (2, 4), (4, 2)] {
            adj.set_weight(i, j, 0.6);
        }
        let head = head_with(
            (0..4).map(|i| (i as f64 * 0.37).sin()).collect(),
            (0..4).map(|i| (i as f64 * 0.61).cos()).collect(),
            2,
            2,
        );
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.83).sin()).collect();
        let (_, alpha) = gat_head_with_attention(&x, &adj, &head, 2, 2, 0.2).unwrap();
        for i in 0..5 {
            let row_sum: f64 = (0..5).map(|j| alpha[i * 5 + j]).sum();
            assert!((row_sum - 1.0).abs() < 1e-6);
            for j in 0..5 {
                let a = alpha[i * 5 + j];
                assert!(a >= 0.0);
                if adj.weight(i, j) == 0.0 {
                    assert_eq!(a, 0.0, "weight assigned outside neighborhood at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn sequence_forward_reduces_to_single_step_and_permutes_with_time() {
        let p = GatParams {
            heads: vec![head_with(
                vec![0.6, -0.2, 0.3, 0.8],
                vec![0.5, -0.4, 0.1, 0.9],
                2,
                2,
            )],
            d_in: 2,
            d_head: 2,
            leaky_slope: 0.2,
        };
        let adj = full_adj(3);

        // T = 1 equals the multi-head call.
        let x1: Vec<f64> = (0..6).map(|i| (i as f64 * 0.3).sin()).collect();
        let seq = gat_over_time(&x1, 3, 1, &adj, &p).unwrap();
        let single = gat_multi_head(&x1, &adj, &p).unwrap();
        assert_eq!(seq, single);

        // Permuting the time axis permutes outputs identically.
        let n_steps = 4;
        let x: Vec<f64> = (0..3 * n_steps * 2).map(|i| (i as f64 * 0.21).cos()).collect();
        let perm = [2usize, 0, 3, 1];
        let mut x_perm = vec![0.0; x.len()];
        for n in 0..3 {
            for (t_new, &t_old) in perm.iter().enumerate() {
                for d in 0..2 {
                    x_perm[(n * n_steps + t_new) * 2 + d] = x[(n * n_steps + t_old) * 2 + d];
                }
            }
        }
        let y = gat_over_time(&x, 3, n_steps, &adj, &p).unwrap();
        let y_perm = gat_over_time(&x_perm, 3, n_steps, &adj, &p).unwrap();
        for n in 0..3 {
            for (t_new, &t_old) in perm.iter().enumerate() {
                for d in 0..2 {
                    assert_eq!(
                        y_perm[(n * n_steps + t_new) * 2 + d],
                        y[(n * n_steps + t_old) * 2 + d]
                    );
                }
            }
        }
    }

    #[test]
    fn node_relabeling_permutes_outputs() {
        let p = GatParams {
            heads: vec![head_with(
                vec![0.6, -0.2, 0.3, 0.8],
                vec![0.5, -0.4, 0.1, 0.9],
                2,
                2,
            )],
            d_in: 2,
            d_head: 2,
            leaky_slope: 0.2,
        };
        let mut adj = AdjacencyMatrix::identity(4);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)] {
            adj.set_weight(i, j, 0.7);
        }
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.43).sin()).collect();
        let perm = [3usize, 1, 0, 2]; // new index -> old index

        let mut adj_p = AdjacencyMatrix::identity(4);
        for (ni, &oi) in perm.iter().enumerate() {
            for (nj, &oj) in perm.iter().enumerate() {
                adj_p.set_weight(ni, nj, adj.weight(oi, oj));
            }
        }
        let mut x_p = vec![0.0; 8];
        for (ni, &oi) in perm.iter().enumerate() {
            x_p[ni * 2..(ni + 1) * 2].copy_from_slice(&x[oi * 2..(oi + 1) * 2]);
        }

        let y = gat_multi_head(&x, &adj, &p).unwrap();
        let y_p = gat_multi_head(&x_p, &adj_p, &p).unwrap();
        for (ni, &oi) in perm.iter().enumerate() {
            for d in 0..2 {
                assert!((y_p[ni * 2 + d] - y[oi * 2 + d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let (n_nodes, n_steps) = (4usize, 3usize);
        let mut p = GatParams::zeros(2, 3, 2, 0.2).unwrap();
        for (k, head) in p.heads.iter_mut().enumerate() {
            for (i, w) in head.w.data.iter_mut().enumerate() {
                *w = ((i + k * 7) as f64 * 0.41).sin() * 0.6;
            }
            for (i, a) in head.a.data.iter_mut().enumerate() {
                *a = ((i + k * 3) as f64 * 0.77).cos() * 0.5;
            }
        }
        let mut adj = AdjacencyMatrix::identity(n_nodes);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (0, 3), (3, 0)] {
            adj.set_weight(i, j, 0.9);
        }
        let x: Vec<f64> = (0..n_nodes * n_steps * 3)
            .map(|i| (i as f64 * 0.19).sin())
            .collect();

        let loss = |p: &GatParams| -> f64 {
            let y = gat_over_time(&x, n_nodes, n_steps, &adj, p).unwrap();
            y.iter().map(|v| v * v).sum::<f64>() * 0.5
        };

        let (y, cache) = gat_over_time_train(&x, n_nodes, n_steps, &adj, &p).unwrap();
        let mut grads = GatGrads::zeros(&p);
        let _ = gat_over_time_backward(&y, &x, n_nodes, n_steps, &p, &cache, &mut grads);

        let h = 1e-4;
        for k in 0..p.heads.len() {
            for idx in 0..p.heads[k].w.data.len() {
                let mut plus = p.clone();
                plus.heads[k].w.data[idx] += h;
                let mut minus = p.clone();
                minus.heads[k].w.data[idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let rel = (grads.heads[k].w[idx] - fd).abs() / fd.abs().max(1e-6);
                assert!(
                    rel < 1e-3,
                    "head {k} w[{idx}]: analytic {} fd {fd}",
                    grads.heads[k].w[idx]
                );
            }
            for idx in 0..p.heads[k].a.data.len() {
                let mut plus = p.clone();
                plus.heads[k].a.data[idx] += h;
                let mut minus = p.clone();
                minus.heads[k].a.data[idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let rel = (grads.heads[k].a[idx] - fd).abs() / fd.abs().max(1e-6);
                assert!(
                    rel < 1e-3,
                    "head {k} a[{idx}]: analytic {} fd {fd}",
                    grads.heads[k].a[idx]
                );
            }
        }
    }
}
