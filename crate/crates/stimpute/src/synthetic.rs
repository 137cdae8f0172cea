//! Deterministic synthetic sensor network for tests, examples, and desk-scale
//! experiments: nodes on a ring, each emitting a daily sinusoid plus a shared
//! non-periodic component that varies smoothly around the ring, plus noise.

use crate::adjacency::{build_adjacency, AdjacencyMatrix, Sigma};
use crate::error::Result;
use crate::rng;
use crate::series::TimeSeriesTensor;

/// Parameters of the ring fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_nodes: usize,
    pub n_steps: usize,
    /// Sampling interval; the sinusoid period is one day, so with hourly
    /// sampling the cycle is 24 steps.
    pub step_seconds: u32,
    pub noise_std: f64,
    /// Fraction of entries marked missing in the raw data.
    pub natural_missing: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_nodes: 8,
            n_steps: 2000,
            step_seconds: 3600,
            noise_std: 0.05,
            natural_missing: 0.02,
            seed: 9000,
        }
    }
}

/// Distance list for a ring: hop distance between nodes, both directions.
pub fn ring_distances(n_nodes: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..n_nodes {
        for j in (i + 1)..n_nodes {
            let hop = (j - i).min(n_nodes - (j - i));
            out.push((i, j, hop as f64));
        }
    }
    out
}

/// Ring adjacency where only hop-1 neighbors survive the threshold.
pub fn ring_adjacency(n_nodes: usize) -> Result<AdjacencyMatrix> {
    // exp(-1) ~ 0.37 passes a 0.1 threshold; exp(-4) ~ 0.018 does not.
    build_adjacency(n_nodes, &ring_distances(n_nodes), Sigma::Fixed(1.0), 0.1, true)
}

/// Generate the fixture series.
///
/// Node `n` emits `a_n sin(2 pi t / day + phi_n) + w_n s(t) + noise` where
/// the amplitudes, phases, and shared-component weights vary smoothly around
/// the ring and `s(t)` mixes two incommensurate slow waves (not daily
/// periodic, so a time-of-day average cannot capture it while neighboring
/// nodes can).
pub fn synthetic_series(spec: &SyntheticSpec) -> TimeSeriesTensor {
    let n = spec.n_nodes;
    let steps = spec.n_steps;
    let mut t = TimeSeriesTensor::zeros(n, steps, 1, spec.step_seconds);
    t.start_epoch_seconds = 0;
    let steps_per_day = (86_400 / spec.step_seconds as u64).max(1) as f64;
    let tau = std::f64::consts::TAU;

    let mut stream = rng::stream(spec.seed);
    for node in 0..n {
        let angle = tau * node as f64 / n as f64;
        let amp = 1.0 + 0.1 * angle.cos();
        let phase = 0.2 * angle.sin();
        let shared_weight = 0.6 + 0.1 * (angle + 1.0).sin();
        for s in 0..steps {
            let day_pos = tau * s as f64 / steps_per_day;
            let shared = (tau * s as f64 / 97.0).sin() + 0.5 * (tau * s as f64 / 331.0).sin();
            let v = amp * (day_pos + phase).sin()
                + shared_weight * shared
                + spec.noise_std * rng::gaussian(&mut stream);
            t.set_value(node, s, 0, v);
        }
    }

    if spec.natural_missing > 0.0 {
        use rand::Rng;
        let mut miss_stream = rng::stream(rng::mix_seed(spec.seed, 0x4d495353));
        for node in 0..n {
            for s in 0..steps {
                if miss_stream.random::<f64>() < spec.natural_missing {
                    t.set_observed(node, s, false);
                    t.set_value(node, s, 0, 0.0);
                }
            }
        }
    }
    t
}
