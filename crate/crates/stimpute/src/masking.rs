//! Evaluation masks: artificially hidden, originally observed entries.
//!
//! Two generators are provided. Point masks hide each observed entry
//! independently with a fixed probability. Block masks superimpose a sparse
//! point mask with per-sensor contiguous outages of random duration. Both
//! are pure functions of (tensor shape, observed mask, parameters, seed).

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::series::TimeSeriesTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPattern {
    Point,
    Block,
    /// Loaded from a file rather than generated.
    External,
}

impl MaskPattern {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskPattern::Point => "point",
            MaskPattern::Block => "block",
            MaskPattern::External => "external",
        }
    }
}

/// Boolean `[node][step]` grid marking hidden entries.
///
/// Invariant: `hidden` implies the entry was observed in the source tensor;
/// already-missing data is never masked.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMask {
    pub hidden: Vec<bool>,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub pattern: MaskPattern,
    pub seed: u64,
}

impl EvalMask {
    pub fn empty(n_nodes: usize, n_steps: usize, pattern: MaskPattern, seed: u64) -> Self {
        Self {
            hidden: vec![false; n_nodes * n_steps],
            n_nodes,
            n_steps,
            pattern,
            seed,
        }
    }

    #[inline]
    pub fn is_hidden(&self, node: usize, step: usize) -> bool {
        self.hidden[node * self.n_steps + step]
    }

    #[inline]
    pub fn set_hidden(&mut self, node: usize, step: usize, v: bool) {
        self.hidden[node * self.n_steps + step] = v;
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden.iter().filter(|&&h| h).count()
    }

    /// Restriction of this mask to the steps in `[start, end)`.
    pub fn slice_steps(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_steps {
            return Err(Error::InvalidInput(format!(
                "step range [{start}, {end}) out of bounds for T={}",
                self.n_steps
            )));
        }
        let t_new = end - start;
        let mut hidden = Vec::with_capacity(self.n_nodes * t_new);
        for n in 0..self.n_nodes {
            for t in start..end {
                hidden.push(self.is_hidden(n, t));
            }
        }
        Ok(Self {
            hidden,
            n_nodes: self.n_nodes,
            n_steps: t_new,
            pattern: self.pattern,
            seed: self.seed,
        })
    }
}

fn check_shape(t: &TimeSeriesTensor) -> (usize, usize) {
    (t.n_nodes, t.n_steps)
}

/// Hide each observed entry independently with probability `ratio`.
pub fn point_mask(t: &TimeSeriesTensor, ratio: f64, seed: u64) -> Result<EvalMask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!(
            "mask ratio must be in [0, 1], got {ratio}"
        )));
    }
    let (n_nodes, n_steps) = check_shape(t);
    let mut mask = EvalMask::empty(n_nodes, n_steps, MaskPattern::Point, seed);
    let mut stream = rng::stream(seed);
    // One draw per grid cell regardless of observedness keeps the stream
    // layout independent of the data.
    for n in 0..n_nodes {
        for s in 0..n_steps {
            let u: f64 = stream.random();
            if u < ratio && t.is_observed(n, s) {
                mask.set_hidden(n, s, true);
            }
        }
    }
    Ok(mask)
}

/// Parameters for the block-missing pattern.
///
/// Per sensor, at each step a contiguous outage starts with probability
/// `block_start_prob` and lasts a uniform number of steps in
/// `[min_len_steps, max_len_steps]`, clipped at the end of the series. An
/// independent point mask at `point_ratio` is unioned in. Only originally
/// observed entries become hidden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMaskParams {
    pub point_ratio: f64,
    pub block_start_prob: f64,
    pub min_len_steps: usize,
    pub max_len_steps: usize,
}

impl BlockMaskParams {
    /// Defaults with outage durations given in hours, converted to steps via
    /// the sampling interval (floor, at least one step).
    pub fn from_hours(
        point_ratio: f64,
        block_start_prob: f64,
        min_hours: f64,
        max_hours: f64,
        step_seconds: u32,
    ) -> Self {
        let to_steps = |h: f64| ((h * 3600.0 / step_seconds as f64).floor() as usize).max(1);
        Self {
            point_ratio,
            block_start_prob,
            min_len_steps: to_steps(min_hours),
            max_len_steps: to_steps(max_hours),
        }
    }
}

impl Default for BlockMaskParams {
    /// Point ratio 5%, outage start probability 0.15% per step per sensor,
    /// durations of 1 to 4 hours expressed at hourly sampling.
    fn default() -> Self {
        Self {
            point_ratio: 0.05,
            block_start_prob: 0.0015,
            min_len_steps: 1,
            max_len_steps: 4,
        }
    }
}

/// Generate a block-missing mask; see [`BlockMaskParams`].
pub fn block_mask(t: &TimeSeriesTensor, params: &BlockMaskParams, seed: u64) -> Result<EvalMask> {
    for (name, p) in [
        ("point_ratio", params.point_ratio),
        ("block_start_prob", params.block_start_prob),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "{name} must be in [0, 1], got {p}"
            )));
        }
    }
    let (n_nodes, n_steps) = check_shape(t);
    if params.min_len_steps == 0
        || params.min_len_steps > params.max_len_steps
        || params.max_len_steps > n_steps
    {
        return Err(Error::InvalidInput(format!(
            "block lengths must satisfy 0 < min <= max <= T, got min={} max={} T={n_steps}",
            params.min_len_steps, params.max_len_steps
        )));
    }

    let mut flagged = vec![false; n_nodes * n_steps];
    let mut stream = rng::stream(seed);

    // Pass 1: independent point component.
    for cell in flagged.iter_mut() {
        let u: f64 = stream.random();
        if u < params.point_ratio {
            *cell = true;
        }
    }
    // Pass 2: per-sensor outages.
    for n in 0..n_nodes {
        for s in 0..n_steps {
            let u: f64 = stream.random();
            if u < params.block_start_prob {
                let len = stream.random_range(params.min_len_steps..=params.max_len_steps);
                for hit in s..(s + len).min(n_steps) {
                    flagged[n * n_steps + hit] = true;
                }
            }
        }
    }

    let mut mask = EvalMask::empty(n_nodes, n_steps, MaskPattern::Block, seed);
    for n in 0..n_nodes {
        for s in 0..n_steps {
            if flagged[n * n_steps + s] && t.is_observed(n, s) {
                mask.set_hidden(n, s, true);
            }
        }
    }
    Ok(mask)
}

/// Copy of `t` with every masked entry marked unobserved (value zeroed).
pub fn hide_masked(t: &TimeSeriesTensor, mask: &EvalMask) -> Result<TimeSeriesTensor> {
    if mask.n_nodes != t.n_nodes || mask.n_steps != t.n_steps {
        return Err(Error::InvalidInput(format!(
            "mask shape {}x{} does not match tensor {}x{}",
            mask.n_nodes, mask.n_steps, t.n_nodes, t.n_steps
        )));
    }
    let mut out = t.clone();
    for n in 0..t.n_nodes {
        for s in 0..t.n_steps {
            if mask.is_hidden(n, s) {
                out.set_observed(n, s, false);
                for c in 0..t.n_channels {
                    out.set_value(n, s, c, 0.0);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn observed_tensor(n: usize, t: usize) -> TimeSeriesTensor {
        TimeSeriesTensor::zeros(n, t, 1, 300)
    }

    #[test]
    fn ratio_zero_hides_nothing() {
        let t = observed_tensor(10, 100);
        let m = point_mask(&t, 0.0, 1).unwrap();
        assert_eq!(m.hidden_count(), 0);
    }

    #[test]
    fn ratio_one_hides_exactly_the_observed_entries() {
        let mut t = observed_tensor(10, 100);
        t.set_observed(3, 7, false);
        t.set_observed(9, 99, false);
        let m = point_mask(&t, 1.0, 1).unwrap();
        assert_eq!(m.hidden_count(), 10 * 100 - 2);
        assert!(!m.is_hidden(3, 7));
        assert!(!m.is_hidden(9, 99));
    }

    #[test]
    fn point_mask_count_is_within_binomial_bounds() {
        // n = 10_000 observed entries, p = 0.25:
        // mean = 2500, sigma = sqrt(n p (1-p)) = 37.5, 3 sigma ~ 112.5.
        // The stated bound [2370, 2630] is slightly wider than 3 sigma.
        let t = observed_tensor(100, 100);
        let n = 10_000.0_f64;
        let p = 0.25_f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!(2370.0 < n * p - 3.0 * sigma + 1.0);
        for seed in 0..5 {
            let m = point_mask(&t, p, seed).unwrap();
            let count = m.hidden_count() as f64;
            assert!(
                (2370.0..=2630.0).contains(&count),
                "seed {seed}: count {count} outside bound"
            );
        }
    }

    #[test]
    fn block_mask_degenerate_probabilities() {
        let t = observed_tensor(5, 50);
        let empty = block_mask(
            &t,
            &BlockMaskParams {
                point_ratio: 0.0,
                block_start_prob: 0.0,
                min_len_steps: 1,
                max_len_steps: 4,
            },
            9,
        )
        .unwrap();
        assert_eq!(empty.hidden_count(), 0);

        let full = block_mask(
            &t,
            &BlockMaskParams {
                point_ratio: 0.0,
                block_start_prob: 1.0,
                min_len_steps: 50,
                max_len_steps: 50,
            },
            9,
        )
        .unwrap();
        assert_eq!(full.hidden_count(), 5 * 50);
    }

    #[test]
    fn block_mask_rejects_inconsistent_lengths() {
        let t = observed_tensor(2, 10);
        let bad = BlockMaskParams {
            point_ratio: 0.0,
            block_start_prob: 0.1,
            min_len_steps: 5,
            max_len_steps: 3,
        };
        assert!(block_mask(&t, &bad, 0).is_err());
        let too_long = BlockMaskParams {
            point_ratio: 0.0,
            block_start_prob: 0.1,
            min_len_steps: 1,
            max_len_steps: 11,
        };
        assert!(block_mask(&t, &too_long, 0).is_err());
    }

    /// Independent Monte-Carlo simulation of the block-missing process,
    /// written directly from its definition (no shared code with
    /// `block_mask`). Returns the hidden fraction for one trial.
    fn simulate_block_fraction(
        n_nodes: usize,
        n_steps: usize,
        params: &BlockMaskParams,
        rng_seed: u64,
    ) -> f64 {
        use rand::Rng;
        let mut rng = crate::rng::stream(rng_seed);
        let mut hidden = vec![false; n_nodes * n_steps];
        for cell in hidden.iter_mut() {
            if rng.random::<f64>() < params.point_ratio {
                *cell = true;
            }
        }
        for n in 0..n_nodes {
            for s in 0..n_steps {
                if rng.random::<f64>() < params.block_start_prob {
                    let len = rng.random_range(params.min_len_steps..=params.max_len_steps);
                    for k in s..(s + len).min(n_steps) {
                        hidden[n * n_steps + k] = true;
                    }
                }
            }
        }
        hidden.iter().filter(|&&h| h).count() as f64 / (n_nodes * n_steps) as f64
    }

    #[test]
    fn block_mask_fraction_matches_monte_carlo_estimate() {
        // Five-minute sampling: 1-4 hour outages are 12-48 steps.
        let params = BlockMaskParams::from_hours(0.05, 0.0015, 1.0, 4.0, 300);
        assert_eq!(params.min_len_steps, 12);
        assert_eq!(params.max_len_steps, 48);

        let (n_nodes, n_steps) = (20, 500);
        let trials = 120;
        let mut fractions = Vec::with_capacity(trials);
        for k in 0..trials {
            fractions.push(simulate_block_fraction(
                n_nodes,
                n_steps,
                &params,
                1_000_000 + k as u64,
            ));
        }
        let mean = fractions.iter().sum::<f64>() / trials as f64;
        let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / trials as f64;
        let sigma = var.sqrt();

        let t = observed_tensor(n_nodes, n_steps);
        for seed in 0..5 {
            let m = block_mask(&t, &params, seed).unwrap();
            let frac = m.hidden_count() as f64 / (n_nodes * n_steps) as f64;
            assert!(
                (frac - mean).abs() <= 3.0 * sigma,
                "seed {seed}: fraction {frac} outside {mean} +/- 3*{sigma}"
            );
        }
    }

    proptest! {
        #[test]
        fn masks_are_deterministic_and_subset_of_observed(
            seed in 0u64..1000,
            ratio in 0.0f64..1.0,
            holes in proptest::collection::vec((0usize..6, 0usize..40), 0..30),
        ) {
            let mut t = observed_tensor(6, 40);
            for (n, s) in holes {
                t.set_observed(n, s, false);
            }
            let a = point_mask(&t, ratio, seed).unwrap();
            let b = point_mask(&t, ratio, seed).unwrap();
            prop_assert_eq!(&a, &b);
            for n in 0..6 {
                for s in 0..40 {
                    if a.is_hidden(n, s) {
                        prop_assert!(t.is_observed(n, s));
                    }
                }
            }
            let blk = block_mask(&t, &BlockMaskParams {
                point_ratio: ratio * 0.2,
                block_start_prob: 0.05,
                min_len_steps: 1,
                max_len_steps: 5,
            }, seed).unwrap();
            for n in 0..6 {
                for s in 0..40 {
                    if blk.is_hidden(n, s) {
                        prop_assert!(t.is_observed(n, s));
                    }
                }
            }
        }
    }
}
