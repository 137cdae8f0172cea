//! Multivariate sensor series with an explicit observed mask, chronological
//! splitting, and train-statistics normalization.

use crate::error::{Error, Result};

/// Values recorded by `N` sensors over `T` uniform time steps with `C`
/// channels per sensor.
///
/// `values` is row-major `[node][step][channel]`. Wherever
/// `observed[node][step]` is false the stored value is a sentinel (zero
/// after normalization) that must never be read except through a fill
/// policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTensor {
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
    pub node_ids: Vec<String>,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub n_channels: usize,
    /// Sampling interval in seconds.
    pub step_seconds: u32,
    /// Epoch seconds of step 0; carried so segments keep absolute time.
    pub start_epoch_seconds: i64,
}

impl TimeSeriesTensor {
    pub fn new(
        values: Vec<f64>,
        observed: Vec<bool>,
        node_ids: Vec<String>,
        n_steps: usize,
        n_channels: usize,
        step_seconds: u32,
        start_epoch_seconds: i64,
    ) -> Result<Self> {
        let n_nodes = node_ids.len();
        if n_nodes == 0 || n_steps == 0 || n_channels == 0 {
            return Err(Error::InvalidInput(format!(
                "tensor dimensions must be positive, got N={n_nodes} T={n_steps} C={n_channels}"
            )));
        }
        if step_seconds == 0 {
            return Err(Error::InvalidInput("step_seconds must be positive".into()));
        }
        if values.len() != n_nodes * n_steps * n_channels {
            return Err(Error::InvalidInput(format!(
                "values length {} does not match N*T*C = {}",
                values.len(),
                n_nodes * n_steps * n_channels
            )));
        }
        if observed.len() != n_nodes * n_steps {
            return Err(Error::InvalidInput(format!(
                "observed length {} does not match N*T = {}",
                observed.len(),
                n_nodes * n_steps
            )));
        }
        Ok(Self {
            values,
            observed,
            node_ids,
            n_nodes,
            n_steps,
            n_channels,
            step_seconds,
            start_epoch_seconds,
        })
    }

    /// Zero-filled, fully observed tensor.
    pub fn zeros(n_nodes: usize, n_steps: usize, n_channels: usize, step_seconds: u32) -> Self {
        Self {
            values: vec![0.0; n_nodes * n_steps * n_channels],
            observed: vec![true; n_nodes * n_steps],
            node_ids: (0..n_nodes).map(|i| format!("node_{i}")).collect(),
            n_nodes,
            n_steps,
            n_channels,
            step_seconds,
            start_epoch_seconds: 0,
        }
    }

    #[inline]
    pub fn value(&self, node: usize, step: usize, channel: usize) -> f64 {
        self.values[(node * self.n_steps + step) * self.n_channels + channel]
    }

    #[inline]
    pub fn set_value(&mut self, node: usize, step: usize, channel: usize, v: f64) {
        self.values[(node * self.n_steps + step) * self.n_channels + channel] = v;
    }

    #[inline]
    pub fn is_observed(&self, node: usize, step: usize) -> bool {
        self.observed[node * self.n_steps + step]
    }

    #[inline]
    pub fn set_observed(&mut self, node: usize, step: usize, v: bool) {
        self.observed[node * self.n_steps + step] = v;
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Epoch seconds at a given step.
    pub fn timestamp(&self, step: usize) -> i64 {
        self.start_epoch_seconds + step as i64 * self.step_seconds as i64
    }

    /// Copy of the steps in `[start, end)`, keeping absolute time.
    pub fn slice_steps(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_steps {
            return Err(Error::InvalidInput(format!(
                "step range [{start}, {end}) out of bounds for T={}",
                self.n_steps
            )));
        }
        let t_new = end - start;
        let mut values = Vec::with_capacity(self.n_nodes * t_new * self.n_channels);
        let mut observed = Vec::with_capacity(self.n_nodes * t_new);
        for n in 0..self.n_nodes {
            for t in start..end {
                for c in 0..self.n_channels {
                    values.push(self.value(n, t, c));
                }
                observed.push(self.is_observed(n, t));
            }
        }
        Ok(Self {
            values,
            observed,
            node_ids: self.node_ids.clone(),
            n_nodes: self.n_nodes,
            n_steps: t_new,
            n_channels: self.n_channels,
            step_seconds: self.step_seconds,
            start_epoch_seconds: self.timestamp(start),
        })
    }

    /// Standard deviation of all observed values (population form), pooled
    /// over channels.
    pub fn observed_std(&self) -> f64 {
        let mut count = 0usize;
        let mut sum = 0.0;
        for n in 0..self.n_nodes {
            for t in 0..self.n_steps {
                if self.is_observed(n, t) {
                    for c in 0..self.n_channels {
                        sum += self.value(n, t, c);
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return 0.0;
        }
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for n in 0..self.n_nodes {
            for t in 0..self.n_steps {
                if self.is_observed(n, t) {
                    for c in 0..self.n_channels {
                        let d = self.value(n, t, c) - mean;
                        sq += d * d;
                    }
                }
            }
        }
        (sq / count as f64).sqrt()
    }
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self> {
        let spec = Self {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be in (0, 1), got {f}"
                )));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Split into three contiguous, disjoint, ordered segments covering `[0, T)`.
///
/// Train and validation lengths floor to whole steps; the test segment takes
/// the remainder. Errors if any segment would be empty.
pub fn split_chronological(
    t: &TimeSeriesTensor,
    spec: &SplitSpec,
) -> Result<(TimeSeriesTensor, TimeSeriesTensor, TimeSeriesTensor)> {
    spec.validate()?;
    let total = t.n_steps;
    let n_train = (total as f64 * spec.train_frac).floor() as usize;
    let n_val = (total as f64 * spec.val_frac).floor() as usize;
    let n_test = total.saturating_sub(n_train + n_val);
    for (name, len) in [("train", n_train), ("validation", n_val), ("test", n_test)] {
        if len == 0 {
            return Err(Error::InvalidInput(format!(
                "{name} segment would be empty for T={total} with fractions \
                 {}/{}/{}",
                spec.train_frac, spec.val_frac, spec.test_frac
            )));
        }
    }
    Ok((
        t.slice_steps(0, n_train)?,
        t.slice_steps(n_train, n_train + n_val)?,
        t.slice_steps(n_train + n_val, total)?,
    ))
}

/// Per-channel mean and standard deviation fitted on observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fit per-channel statistics over observed entries only. Population
    /// standard deviation; errors on a constant (or empty) channel, naming
    /// it.
    pub fn fit(t: &TimeSeriesTensor) -> Result<Self> {
        let c_total = t.n_channels;
        let mut count = vec![0usize; c_total];
        let mut sum = vec![0.0; c_total];
        for n in 0..t.n_nodes {
            for step in 0..t.n_steps {
                if t.is_observed(n, step) {
                    for c in 0..c_total {
                        sum[c] += t.value(n, step, c);
                        count[c] += 1;
                    }
                }
            }
        }
        let mut mean = vec![0.0; c_total];
        for c in 0..c_total {
            if count[c] == 0 {
                return Err(Error::ConstantChannel(c));
            }
            mean[c] = sum[c] / count[c] as f64;
        }
        let mut sq = vec![0.0; c_total];
        for n in 0..t.n_nodes {
            for step in 0..t.n_steps {
                if t.is_observed(n, step) {
                    for c in 0..c_total {
                        let d = t.value(n, step, c) - mean[c];
                        sq[c] += d * d;
                    }
                }
            }
        }
        let mut std = vec![0.0; c_total];
        for c in 0..c_total {
            std[c] = (sq[c] / count[c] as f64).sqrt();
            if std[c] <= 0.0 {
                return Err(Error::ConstantChannel(c));
            }
        }
        Ok(Self { mean, std })
    }
}

/// Scale observed entries to zero-mean unit-variance per channel; unobserved
/// entries become the zero sentinel.
pub fn normalize(t: &TimeSeriesTensor, stats: &NormStats) -> TimeSeriesTensor {
    let mut out = t.clone();
    for n in 0..t.n_nodes {
        for step in 0..t.n_steps {
            for c in 0..t.n_channels {
                let v = if t.is_observed(n, step) {
                    (t.value(n, step, c) - stats.mean[c]) / stats.std[c]
                } else {
                    0.0
                };
                out.set_value(n, step, c, v);
            }
        }
    }
    out
}

/// Inverse of [`normalize`]: maps every entry back to original units.
pub fn denormalize(t: &TimeSeriesTensor, stats: &NormStats) -> TimeSeriesTensor {
    let mut out = t.clone();
    for n in 0..t.n_nodes {
        for step in 0..t.n_steps {
            for c in 0..t.n_channels {
                out.set_value(n, step, c, t.value(n, step, c) * stats.std[c] + stats.mean[c]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n_steps: usize) -> TimeSeriesTensor {
        let mut t = TimeSeriesTensor::zeros(2, n_steps, 1, 3600);
        for n in 0..2 {
            for s in 0..n_steps {
                t.set_value(n, s, 0, (n * n_steps + s) as f64 * 0.5 + 1.0);
            }
        }
        t
    }

    #[test]
    fn split_lengths_floor_to_whole_steps() {
        let (train, val, test) =
            split_chronological(&toy(10), &SplitSpec::default()).unwrap();
        assert_eq!((train.n_steps, val.n_steps, test.n_steps), (7, 1, 2));
    }

    #[test]
    fn split_hundred_steps_is_70_10_20() {
        let (train, val, test) =
            split_chronological(&toy(100), &SplitSpec::default()).unwrap();
        assert_eq!((train.n_steps, val.n_steps, test.n_steps), (70, 10, 20));
    }

    #[test]
    fn split_errors_when_a_segment_is_empty() {
        let err = split_chronological(&toy(5), &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }

    #[test]
    fn split_keeps_absolute_time() {
        let mut t = toy(10);
        t.start_epoch_seconds = 1_000_000;
        let (train, val, test) = split_chronological(&t, &SplitSpec::default()).unwrap();
        assert_eq!(train.start_epoch_seconds, 1_000_000);
        assert_eq!(val.start_epoch_seconds, 1_000_000 + 7 * 3600);
        assert_eq!(test.start_epoch_seconds, 1_000_000 + 8 * 3600);
    }

    #[test]
    fn normalize_round_trips_observed_entries() {
        let mut t = toy(50);
        t.set_observed(0, 3, false);
        let stats = NormStats::fit(&t).unwrap();
        let norm = normalize(&t, &stats);
        assert_eq!(norm.value(0, 3, 0), 0.0, "sentinel must be zero");
        let back = denormalize(&norm, &stats);
        for n in 0..2 {
            for s in 0..50 {
                if t.is_observed(n, s) {
                    let orig = t.value(n, s, 0);
                    let rt = back.value(n, s, 0);
                    assert!((rt - orig).abs() <= 1e-6 * orig.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn constant_channel_is_an_error_naming_the_channel() {
        let t = TimeSeriesTensor::zeros(2, 5, 1, 60);
        match NormStats::fit(&t) {
            Err(Error::ConstantChannel(0)) => {}
            other => panic!("expected ConstantChannel(0), got {other:?}"),
        }
    }

    #[test]
    fn train_stats_apply_unchanged_to_other_segments() {
        let t = toy(100);
        let (train, val, _test) = split_chronological(&t, &SplitSpec::default()).unwrap();
        let stats = NormStats::fit(&train).unwrap();

        // Independent recomputation of the train statistics.
        let mut vals: Vec<f64> = Vec::new();
        for n in 0..train.n_nodes {
            for s in 0..train.n_steps {
                vals.push(train.value(n, s, 0));
            }
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((stats.mean[0] - mean).abs() < 1e-12);
        assert!((stats.std[0] - var.sqrt()).abs() < 1e-12);

        // Applying them to validation uses the same affine map.
        let val_norm = normalize(&val, &stats);
        let expect = (val.value(1, 0, 0) - mean) / var.sqrt();
        assert!((val_norm.value(1, 0, 0) - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn split_partitions_every_step(total in 10usize..300) {
            let t = toy(total);
            let (train, val, test) = split_chronological(&t, &SplitSpec::default()).unwrap();
            prop_assert_eq!(train.n_steps + val.n_steps + test.n_steps, total);
            // Contiguity: segment starts line up with cumulative lengths.
            prop_assert_eq!(val.start_epoch_seconds,
                t.timestamp(train.n_steps));
            prop_assert_eq!(test.start_epoch_seconds,
                t.timestamp(train.n_steps + val.n_steps));
            // Values survive slicing in order.
            prop_assert_eq!(test.value(1, 0, 0),
                t.value(1, train.n_steps + val.n_steps, 0));
        }
    }
}
