//! Sensor-graph adjacency built from geographic distances with a thresholded
//! Gaussian kernel.

use crate::error::{Error, Result};

/// Nonnegative edge weights over `n_nodes` sensors, row-major `[i][j]`.
///
/// Entries are either exactly zero or strictly above the construction
/// threshold. With `self_loops` the diagonal is exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    pub weights: Vec<f64>,
    pub n_nodes: usize,
    pub self_loops: bool,
}

impl AdjacencyMatrix {
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_nodes + j]
    }

    #[inline]
    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) {
        self.weights[i * self.n_nodes + j] = w;
    }

    /// Neighbors of `i`: every `j` with a positive weight.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.weights[i * self.n_nodes..(i + 1) * self.n_nodes];
        row.iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(j, _)| j)
    }

    /// Count of nonzero off-diagonal entries.
    pub fn off_diagonal_edge_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n_nodes {
            for j in 0..self.n_nodes {
                if i != j && self.weight(i, j) > 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    /// Identity adjacency: self-loops only.
    pub fn identity(n_nodes: usize) -> Self {
        let mut a = Self {
            weights: vec![0.0; n_nodes * n_nodes],
            n_nodes,
            self_loops: true,
        };
        for i in 0..n_nodes {
            a.set_weight(i, i, 1.0);
        }
        a
    }
}

/// Kernel bandwidth: a fixed value or the standard deviation of the provided
/// distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Auto,
    Fixed(f64),
}

/// Build the adjacency from pairwise distances.
///
/// `w[i][j] = exp(-d(i,j)^2 / sigma^2)` kept when strictly above `threshold`,
/// else exactly zero. Distances are symmetrized by taking the minimum when
/// both directions are listed; a single direction applies to both. With
/// `Sigma::Auto` the bandwidth is the population standard deviation of all
/// provided distance values.
pub fn build_adjacency(
    n_nodes: usize,
    distances: &[(usize, usize, f64)],
    sigma: Sigma,
    threshold: f64,
    self_loops: bool,
) -> Result<AdjacencyMatrix> {
    if n_nodes == 0 {
        return Err(Error::InvalidInput("n_nodes must be positive".into()));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "threshold must be in [0, 1), got {threshold}"
        )));
    }
    for &(i, j, d) in distances {
        if i >= n_nodes || j >= n_nodes {
            return Err(Error::InvalidInput(format!(
                "distance entry ({i}, {j}) out of range for {n_nodes} nodes"
            )));
        }
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidInput(format!(
                "distance for ({i}, {j}) must be a finite nonnegative real, got {d}"
            )));
        }
    }

    let sigma = match sigma {
        Sigma::Fixed(s) if s > 0.0 => s,
        Sigma::Fixed(s) => {
            return Err(Error::InvalidInput(format!(
                "sigma must be positive, got {s}"
            )));
        }
        Sigma::Auto => {
            if distances.is_empty() {
                return Err(Error::InvalidInput(
                    "sigma=auto needs at least one distance".into(),
                ));
            }
            let n = distances.len() as f64;
            let mean = distances.iter().map(|&(_, _, d)| d).sum::<f64>() / n;
            let var = distances
                .iter()
                .map(|&(_, _, d)| (d - mean) * (d - mean))
                .sum::<f64>()
                / n;
            let s = var.sqrt();
            if s <= 0.0 {
                return Err(Error::InvalidInput(
                    "sigma=auto is undefined: all provided distances are equal".into(),
                ));
            }
            s
        }
    };

    // Symmetrize by minimum distance over both listed directions.
    let mut dist = vec![f64::INFINITY; n_nodes * n_nodes];
    for &(i, j, d) in distances {
        let a = i * n_nodes + j;
        let b = j * n_nodes + i;
        if d < dist[a] {
            dist[a] = d;
        }
        if d < dist[b] {
            dist[b] = d;
        }
    }

    let mut adj = AdjacencyMatrix {
        weights: vec![0.0; n_nodes * n_nodes],
        n_nodes,
        self_loops,
    };
    for i in 0..n_nodes {
        for j in 0..n_nodes {
            let d = dist[i * n_nodes + j];
            if d.is_finite() {
                let w = (-(d * d) / (sigma * sigma)).exp();
                if w > threshold {
                    adj.set_weight(i, j, w);
                }
            }
        }
    }
    if self_loops {
        for i in 0..n_nodes {
            adj.set_weight(i, i, 1.0);
        }
    }
    Ok(adj)
}
