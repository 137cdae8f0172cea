//! Supervised fine-tuning on masked reconstruction, honoring the freeze
//! policy, with early stopping on validation MAE.
//!
//! Each epoch draws a fresh training mask over eligible entries (observed
//! and outside any evaluation mask), hides those entries from the model
//! input, and scores the reconstruction on them only. Adam updates apply
//! exclusively to tensors with `frozen == false`.

use crate::adjacency::AdjacencyMatrix;
use crate::error::{Error, Result};
use crate::masking::EvalMask;
use crate::model::{
    model_backward, model_forward, model_forward_train, ForwardMode, ModelGrads, ModelParams,
};
use crate::rng::{self, mix_seed};
use crate::series::{denormalize, NormStats, TimeSeriesTensor};

const SEED_TAG_EPOCH: u64 = 0x45504f43; // per-epoch training masks
const SEED_TAG_VAL: u64 = 0x56414c4d; // fixed validation mask
const SEED_TAG_DROP: u64 = 0x44524f50; // per-step DropEdge masks

/// Which pointwise error the masked loss averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::Config(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// Mean absolute or squared error over masked `[node][step]` entries only
/// (all channels of a masked entry are scored).
pub fn masked_loss(
    pred: &[f64],
    target: &[f64],
    mask: &[bool],
    n_channels: usize,
    kind: LossKind,
) -> Result<f64> {
    masked_loss_with_grad(pred, target, mask, n_channels, kind).map(|(l, _)| l)
}

/// Loss plus its gradient with respect to the predictions.
pub fn masked_loss_with_grad(
    pred: &[f64],
    target: &[f64],
    mask: &[bool],
    n_channels: usize,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.len() != mask.len() * n_channels {
        return Err(Error::InvalidInput(format!(
            "masked loss shapes disagree: pred {}, target {}, mask {} x {n_channels} channels",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    let scored = mask.iter().filter(|&&m| m).count() * n_channels;
    if scored == 0 {
        return Err(Error::EmptyMask);
    }
    let inv = 1.0 / scored as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (cell, &masked) in mask.iter().enumerate() {
        if !masked {
            continue;
        }
        for c in 0..n_channels {
            let i = cell * n_channels + c;
            let diff = pred[i] - target[i];
            match kind {
                LossKind::Mae => {
                    loss += diff.abs() * inv;
                    grad[i] = diff.signum() * inv;
                }
                LossKind::Mse => {
                    loss += diff * diff * inv;
                    grad[i] = 2.0 * diff * inv;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Fresh Bernoulli mask over entries that are observed and not reserved for
/// evaluation. The selected entries are hidden from the model input and used
/// as loss targets.
pub fn make_training_mask(
    observed: &[bool],
    eval_mask: Option<&EvalMask>,
    ratio: f64,
    seed: u64,
) -> Result<Vec<bool>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "training mask ratio must be in (0, 1), got {ratio}"
        )));
    }
    let eligible = |i: usize| observed[i] && eval_mask.is_none_or(|m| !m.hidden[i]);
    if !(0..observed.len()).any(eligible) {
        return Err(Error::EmptyMask);
    }
    use rand::Rng;
    let mut stream = rng::stream(seed);
    let mut mask = vec![false; observed.len()];
    for (i, cell) in mask.iter_mut().enumerate() {
        let u: f64 = stream.random();
        if u < ratio && eligible(i) {
            *cell = true;
        }
    }
    Ok(mask)
}

/// Training-loop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Non-overlapping window length in steps.
    pub window: usize,
    pub dropedge_p: f64,
    /// Fraction of eligible entries re-masked each epoch.
    pub train_mask_ratio: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    /// The 48-step window matters: with causal attention, a window shorter
    /// than two daily cycles never exposes a same-time-of-day lag, which
    /// measurably hurts imputation on daily-periodic data.
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 200,
            window: 48,
            dropedge_p: 0.05,
            train_mask_ratio: 0.25,
            patience: 20,
            seed: 42,
            loss: LossKind::Mae,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_steps: usize) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidInput(format!(
                "learning rate must be a finite nonnegative real, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidInput("max_epochs must be positive".into()));
        }
        if self.window == 0 || self.window > train_steps {
            return Err(Error::InvalidInput(format!(
                "window must satisfy 0 < window <= train steps ({train_steps}), got {}",
                self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.dropedge_p) {
            return Err(Error::InvalidInput(format!(
                "dropedge_p must be in [0, 1], got {}",
                self.dropedge_p
            )));
        }
        if !(self.train_mask_ratio > 0.0 && self.train_mask_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "train_mask_ratio must be in (0, 1), got {}",
                self.train_mask_ratio
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidInput("patience must be positive".into()));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam state over the trainable tensors, keyed by canonical order.
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.named().iter().map(|(_, p)| p.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// Core update rule on one tensor, exposed for probe tests.
    pub(crate) fn update_tensor(
        m: &mut [f64],
        v: &mut [f64],
        data: &mut [f64],
        grad: &[f64],
        lr: f64,
        step: usize,
    ) {
        let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
        for i in 0..data.len() {
            let g = grad[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }

    /// One optimizer step. Frozen tensors are skipped entirely.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelGrads, lr: f64) {
        self.step += 1;
        let named_grads = grads.named();
        for (idx, (name, param)) in params.named_mut().into_iter().enumerate() {
            debug_assert_eq!(name, named_grads[idx].0);
            if param.frozen {
                continue;
            }
            Self::update_tensor(
                &mut self.m[idx],
                &mut self.v[idx],
                &mut param.data,
                named_grads[idx].1,
                lr,
                self.step,
            );
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_mse: f64,
}

/// Outcome of [`fit`]: per-epoch history and the best validation epoch.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
}

/// Predictions over the full series in inference mode, processed in
/// consecutive windows of `window` steps (matching the training regime).
pub fn predict_windows(
    params: &ModelParams,
    t: &TimeSeriesTensor,
    adj: &AdjacencyMatrix,
    window: usize,
) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    let c_out = params.config.c_out;
    let mut pred = vec![0.0; t.n_nodes * t.n_steps * c_out];
    let mut start = 0;
    while start < t.n_steps {
        let end = (start + window).min(t.n_steps);
        let chunk = t.slice_steps(start, end)?;
        let p = model_forward(&chunk, adj, params, ForwardMode::Eval)?;
        let len = end - start;
        for n in 0..t.n_nodes {
            for s in 0..len {
                for c in 0..c_out {
                    pred[(n * t.n_steps + start + s) * c_out + c] =
                        p[(n * len + s) * c_out + c];
                }
            }
        }
        start = end;
    }
    Ok(pred)
}

/// MAE and MSE of `pred` against `target.values` over masked entries, in the
/// units of `target`.
fn masked_errors(pred: &[f64], target: &TimeSeriesTensor, mask: &[bool]) -> (f64, f64, usize) {
    let c = target.n_channels;
    let mut n_scored = 0usize;
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for (cell, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        for ch in 0..c {
            let diff = pred[cell * c + ch] - target.values[cell * c + ch];
            abs_sum += diff.abs();
            sq_sum += diff * diff;
            n_scored += 1;
        }
    }
    if n_scored == 0 {
        (f64::NAN, f64::NAN, 0)
    } else {
        (abs_sum / n_scored as f64, sq_sum / n_scored as f64, n_scored)
    }
}

/// Hide the entries selected by a boolean grid from a copy of `t`.
fn hide_grid(t: &TimeSeriesTensor, grid: &[bool]) -> TimeSeriesTensor {
    let mut out = t.clone();
    for n in 0..t.n_nodes {
        for s in 0..t.n_steps {
            if grid[n * t.n_steps + s] {
                out.set_observed(n, s, false);
                for c in 0..t.n_channels {
                    out.set_value(n, s, c, 0.0);
                }
            }
        }
    }
    out
}

/// Fine-tune the trainable tensors on masked reconstruction.
///
/// `train` and `val` are normalized segments; entries reserved for final
/// evaluation must already be hidden (marked unobserved) by the caller.
/// Returns the parameters of the best validation epoch in `params` along
/// with the per-epoch history. Validation uses a fixed point mask at the
/// training ratio so the early-stopping signal is stable across epochs.
pub fn fit(
    params: &mut ModelParams,
    train: &TimeSeriesTensor,
    val: &TimeSeriesTensor,
    adj: &AdjacencyMatrix,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate(train.n_steps)?;
    params.config.validate()?;

    // Fixed validation mask and pre-hidden validation input.
    let val_mask = crate::masking::point_mask(val, cfg.train_mask_ratio, mix_seed(cfg.seed, SEED_TAG_VAL))?;
    if val_mask.hidden_count() == 0 {
        return Err(Error::EmptyMask);
    }
    let val_input = hide_grid(val, &val_mask.hidden);

    let mut adam = Adam::new(params);
    let mut history = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val_mae = f64::INFINITY;
    let mut best_params: Option<ModelParams> = None;
    let mut epochs_without_improvement = 0usize;

    for epoch in 0..cfg.max_epochs {
        let epoch_seed = mix_seed(mix_seed(cfg.seed, SEED_TAG_EPOCH), epoch as u64);
        let tmask = make_training_mask(&train.observed, None, cfg.train_mask_ratio, epoch_seed)?;
        let train_input = hide_grid(train, &tmask);

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut start = 0;
        let mut step_idx = 0usize;
        while start < train.n_steps {
            let end = (start + cfg.window).min(train.n_steps);
            let len = end - start;
            // Window slices of the masked input, the targets, and the mask.
            let mut wmask = vec![false; train.n_nodes * len];
            let mut any = false;
            for n in 0..train.n_nodes {
                for s in 0..len {
                    let m = tmask[n * train.n_steps + start + s];
                    wmask[n * len + s] = m;
                    any |= m;
                }
            }
            if !any {
                start = end;
                step_idx += 1;
                continue;
            }
            let input = train_input.slice_steps(start, end)?;
            let target = train.slice_steps(start, end)?;
            let drop_seed = mix_seed(mix_seed(epoch_seed, SEED_TAG_DROP), step_idx as u64);
            let (pred, cache) = model_forward_train(
                &input,
                adj,
                params,
                ForwardMode::Train {
                    dropedge_p: cfg.dropedge_p,
                    seed: drop_seed,
                },
            )?;
            let (loss, dpred) =
                masked_loss_with_grad(&pred, &target.values, &wmask, train.n_channels, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step_idx,
                });
            }
            let scored = wmask.iter().filter(|&&m| m).count();
            loss_sum += loss * scored as f64;
            loss_count += scored;
            let grads = model_backward(&dpred, &cache, params);
            adam.step(params, &grads, cfg.learning_rate);
            start = end;
            step_idx += 1;
        }
        if loss_count == 0 {
            return Err(Error::EmptyMask);
        }
        let train_loss = loss_sum / loss_count as f64;

        let val_pred = predict_windows(params, &val_input, adj, cfg.window)?;
        let (val_mae, val_mse, _) = masked_errors(&val_pred, val, &val_mask.hidden);
        if !val_mae.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: 0 });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_mae,
            val_mse,
        });

        if val_mae < best_val_mae {
            best_val_mae = val_mae;
            best_epoch = epoch;
            best_params = Some(params.clone());
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= cfg.patience {
                break;
            }
        }
    }

    if let Some(best) = best_params {
        *params = best;
    }
    Ok(FitReport {
        history,
        best_epoch,
        best_val_mae,
    })
}

/// Fill every unobserved entry with a denormalized model prediction;
/// observed entries keep their original values exactly.
///
/// `t_raw` is in original units; `stats` must be the training statistics the
/// model was fitted with.
pub fn impute(
    params: &ModelParams,
    t_raw: &TimeSeriesTensor,
    adj: &AdjacencyMatrix,
    stats: &NormStats,
    window: usize,
) -> Result<TimeSeriesTensor> {
    let t_norm = crate::series::normalize(t_raw, stats);
    let pred_norm = predict_windows(params, &t_norm, adj, window)?;
    let c = t_raw.n_channels;
    // Denormalize predictions through a tensor so the affine map is shared
    // with the rest of the pipeline.
    let mut pred_tensor = t_raw.clone();
    pred_tensor.values.copy_from_slice(&pred_norm);
    let pred = denormalize(&pred_tensor, stats);

    let mut out = t_raw.clone();
    for n in 0..t_raw.n_nodes {
        for s in 0..t_raw.n_steps {
            if !t_raw.is_observed(n, s) {
                for ch in 0..c {
                    out.set_value(n, s, ch, pred.value(n, s, ch));
                }
                out.set_observed(n, s, true);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::AdjacencyMatrix;
    use crate::masking::{point_mask, MaskPattern};
    use crate::model::{init_model, ModelConfig};
    use crate::series::normalize;

    fn ring(n: usize) -> AdjacencyMatrix {
        let mut adj = AdjacencyMatrix::identity(n);
        for i in 0..n {
            adj.set_weight(i, (i + 1) % n, 0.5);
            adj.set_weight((i + 1) % n, i, 0.5);
        }
        adj
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            gat_heads: 2,
            ..ModelConfig::default()
        }
    }

    fn wavy(n: usize, steps: usize, seed: u64) -> TimeSeriesTensor {
        let mut t = TimeSeriesTensor::zeros(n, steps, 1, 3600);
        let mut stream = rng::stream(seed);
        for node in 0..n {
            for s in 0..steps {
                let v = ((s as f64) * 0.26 + node as f64).sin()
                    + 0.05 * rng::gaussian(&mut stream);
                t.set_value(node, s, 0, v);
            }
        }
        t
    }

    #[test]
    fn masked_loss_hand_values() {
        let pred = [1.0, 3.0];
        let target = [2.0, 5.0];
        let mask = [true, true];
        let mae = masked_loss(&pred, &target, &mask, 1, LossKind::Mae).unwrap();
        let mse = masked_loss(&pred, &target, &mask, 1, LossKind::Mse).unwrap();
        assert!((mae - 1.5).abs() < 1e-15);
        assert!((mse - 2.5).abs() < 1e-15);

        // Perfect predictions score zero.
        assert_eq!(
            masked_loss(&target, &target, &mask, 1, LossKind::Mae).unwrap(),
            0.0
        );

        // Masking out the only mismatched entry gives zero.
        let partial = [true, false];
        let pred2 = [2.0, -10.0];
        assert_eq!(
            masked_loss(&pred2, &target, &partial, 1, LossKind::Mae).unwrap(),
            0.0
        );
    }

    #[test]
    fn empty_mask_is_an_error() {
        let err = masked_loss(&[1.0], &[2.0], &[false], 1, LossKind::Mae).unwrap_err();
        assert!(matches!(err, Error::EmptyMask));
    }

    #[test]
    fn training_mask_is_disjoint_from_eval_mask() {
        let t = wavy(4, 60, 5);
        let eval = point_mask(&t, 0.3, 99).unwrap();
        for seed in 0..20 {
            let tm = make_training_mask(&t.observed, Some(&eval), 0.4, seed).unwrap();
            for (i, &m) in tm.iter().enumerate() {
                assert!(!(m && eval.hidden[i]), "overlap at {i}");
                if m {
                    assert!(t.observed[i]);
                }
            }
        }
    }

    #[test]
    fn training_mask_errors_when_nothing_is_eligible() {
        let t = wavy(2, 10, 1);
        let mut eval = EvalMask::empty(2, 10, MaskPattern::Point, 0);
        eval.hidden.fill(true);
        match make_training_mask(&t.observed, Some(&eval), 0.5, 0) {
            Err(Error::EmptyMask) => {}
            other => panic!("expected EmptyMask, got {other:?}"),
        }
    }

    #[test]
    fn training_mask_count_is_binomial() {
        // 5000 eligible entries at ratio 0.2: sigma = sqrt(5000*0.2*0.8) = 28.3.
        let t = wavy(50, 100, 3);
        let n = 5000.0_f64;
        let p = 0.2;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let (lo, hi) = (n * p - 3.0 * sigma, n * p + 3.0 * sigma);
        for seed in 0..5 {
            let tm = make_training_mask(&t.observed, None, p, seed).unwrap();
            let count = tm.iter().filter(|&&m| m).count() as f64;
            assert!((lo..=hi).contains(&count), "seed {seed}: {count}");
        }
    }

    #[test]
    fn adam_single_step_decreases_a_convex_loss() {
        // One-parameter quadratic loss (w - 3)^2.
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let mut w = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        let before = loss(w[0]);
        let grad = [2.0 * (w[0] - 3.0)];
        Adam::update_tensor(&mut m, &mut v, &mut w, &grad, 0.05, 1);
        assert!(loss(w[0]) < before);
    }

    #[test]
    fn adam_twenty_steps_strictly_decrease_a_convex_probe() {
        // Single affine layer with squared error: loss(w, b) over fixed data.
        let xs = [0.5, -1.0, 2.0, 1.5];
        let ys = [2.0, -1.0, 5.0, 4.0]; // exactly y = 2x + 1
        let loss = |w: f64, b: f64| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(&x, &y)| (w * x + b - y) * (w * x + b - y))
                .sum::<f64>()
                / xs.len() as f64
        };
        let mut wb = [0.0, 0.0];
        let mut m = [0.0, 0.0];
        let mut v = [0.0, 0.0];
        let mut losses = Vec::new();
        for step in 1..=20 {
            losses.push(loss(wb[0], wb[1]));
            let mut grad = [0.0, 0.0];
            for (&x, &y) in xs.iter().zip(&ys) {
                let e = wb[0] * x + wb[1] - y;
                grad[0] += 2.0 * e * x / xs.len() as f64;
                grad[1] += 2.0 * e / xs.len() as f64;
            }
            Adam::update_tensor(&mut m, &mut v, &mut wb, &grad, 0.05, step);
        }
        losses.push(loss(wb[0], wb[1]));
        for pair in losses.windows(2) {
            assert!(pair[1] < pair[0], "loss did not decrease: {pair:?}");
        }
    }

    #[test]
    fn optimizer_touches_exactly_the_trainable_tensors() {
        let cfg = small_config();
        let mut model = init_model(&cfg, 8).unwrap();
        let before: Vec<(String, Vec<f64>, bool)> = model
            .named()
            .into_iter()
            .map(|(n, p)| (n, p.data.clone(), p.frozen))
            .collect();

        // Gradients from a real backward pass on a toy batch.
        let t_raw = wavy(4, 12, 21);
        let stats = NormStats::fit(&t_raw).unwrap();
        let t = normalize(&t_raw, &stats);
        let adj = ring(4);
        let tmask = make_training_mask(&t.observed, None, 0.3, 7).unwrap();
        let input = hide_grid(&t, &tmask);
        let (pred, cache) = model_forward_train(
            &input,
            &adj,
            &model,
            ForwardMode::Train {
                dropedge_p: 0.0,
                seed: 0,
            },
        )
        .unwrap();
        let (_, dpred) =
            masked_loss_with_grad(&pred, &t.values, &tmask, 1, LossKind::Mae).unwrap();
        let grads = model_backward(&dpred, &cache, &model);

        let nonzero: std::collections::BTreeSet<String> = grads
            .named()
            .into_iter()
            .filter(|(_, g)| g.iter().any(|&v| v != 0.0))
            .map(|(n, _)| n)
            .collect();

        let mut adam = Adam::new(&model);
        adam.step(&mut model, &grads, 1e-3);

        for ((name, old, frozen), (name2, new)) in
            before.iter().zip(model.named())
        {
            assert_eq!(name, &name2);
            let changed = old != &new.data;
            let expected_change = !frozen && nonzero.contains(name);
            assert_eq!(
                changed, expected_change,
                "{name}: changed={changed} expected={expected_change}"
            );
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let cfg = small_config();
        let mut model = init_model(&cfg, 4).unwrap();
        let snapshot = model.clone();
        let t_raw = wavy(4, 40, 31);
        let stats = NormStats::fit(&t_raw).unwrap();
        let t = normalize(&t_raw, &stats);
        let (train, val, _test) =
            crate::series::split_chronological(&t, &crate::series::SplitSpec::default()).unwrap();
        let adj = ring(4);
        let tc = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 4,
            window: 8,
            patience: 10,
            ..TrainConfig::default()
        };
        let report = fit(&mut model, &train, &val, &adj, &tc).unwrap();
        assert_eq!(model, snapshot, "parameters moved with lr = 0");
        // With unchanged parameters and a fixed validation mask, the
        // validation series is exactly flat.
        let first = report.history[0].val_mae;
        for row in &report.history {
            assert_eq!(row.val_mae, first);
            assert!(row.train_loss.is_finite());
        }
    }

    #[test]
    fn frozen_tensors_survive_many_steps_bitwise() {
        let cfg = small_config();
        let mut model = init_model(&cfg, 12).unwrap();
        let frozen_before: Vec<(String, Vec<u64>)> = model
            .named()
            .into_iter()
            .filter(|(_, p)| p.frozen)
            .map(|(n, p)| (n, p.data.iter().map(|v| v.to_bits()).collect()))
            .collect();

        let t_raw = wavy(4, 120, 77);
        let stats = NormStats::fit(&t_raw).unwrap();
        let t = normalize(&t_raw, &stats);
        let (train, val, _) =
            crate::series::split_chronological(&t, &crate::series::SplitSpec::default()).unwrap();
        let adj = ring(4);
        let tc = TrainConfig {
            max_epochs: 10, // 10 epochs x ~11 windows > 100 optimizer steps
            window: 8,
            patience: 50,
            ..TrainConfig::default()
        };
        fit(&mut model, &train, &val, &adj, &tc).unwrap();

        let frozen_after: Vec<(String, Vec<u64>)> = model
            .named()
            .into_iter()
            .filter(|(_, p)| p.frozen)
            .map(|(n, p)| (n, p.data.iter().map(|v| v.to_bits()).collect()))
            .collect();
        assert_eq!(frozen_before, frozen_after);
    }

    #[test]
    fn fit_history_is_reproducible_for_a_fixed_seed() {
        let cfg = small_config();
        let t_raw = wavy(4, 60, 13);
        let stats = NormStats::fit(&t_raw).unwrap();
        let t = normalize(&t_raw, &stats);
        let (train, val, _) =
            crate::series::split_chronological(&t, &crate::series::SplitSpec::default()).unwrap();
        let adj = ring(4);
        let tc = TrainConfig {
            max_epochs: 5,
            window: 8,
            ..TrainConfig::default()
        };
        let mut m1 = init_model(&cfg, 2).unwrap();
        let r1 = fit(&mut m1, &train, &val, &adj, &tc).unwrap();
        let mut m2 = init_model(&cfg, 2).unwrap();
        let r2 = fit(&mut m2, &train, &val, &adj, &tc).unwrap();
        assert_eq!(r1.history, r2.history);
        assert_eq!(m1, m2);
    }

    #[test]
    fn returned_model_is_the_best_validation_epoch() {
        let cfg = small_config();
        let t_raw = wavy(4, 80, 17);
        let stats = NormStats::fit(&t_raw).unwrap();
        let t = normalize(&t_raw, &stats);
        let (train, val, _) =
            crate::series::split_chronological(&t, &crate::series::SplitSpec::default()).unwrap();
        let adj = ring(4);
        let tc = TrainConfig {
            max_epochs: 8,
            window: 8,
            ..TrainConfig::default()
        };
        let mut model = init_model(&cfg, 3).unwrap();
        let report = fit(&mut model, &train, &val, &adj, &tc).unwrap();

        // Re-evaluate the returned parameters on the fixed validation mask.
        let val_mask =
            point_mask(&val, tc.train_mask_ratio, mix_seed(tc.seed, SEED_TAG_VAL)).unwrap();
        let val_input = hide_grid(&val, &val_mask.hidden);
        let pred = predict_windows(&model, &val_input, &adj, tc.window).unwrap();
        let (mae, _, _) = masked_errors(&pred, &val, &val_mask.hidden);
        assert!((mae - report.best_val_mae).abs() < 1e-12);
        let last = report.history.last().unwrap();
        assert!(report.best_val_mae <= last.val_mae + 1e-12);
    }

    #[test]
    fn impute_preserves_observed_entries_exactly() {
        let cfg = small_config();
        let model = init_model(&cfg, 5).unwrap();
        let mut t_raw = wavy(4, 30, 23);
        t_raw.set_observed(2, 10, false);
        t_raw.set_observed(0, 3, false);
        let stats = NormStats::fit(&t_raw).unwrap();
        let adj = ring(4);
        let filled = impute(&model, &t_raw, &adj, &stats, 24).unwrap();
        for n in 0..4 {
            for s in 0..30 {
                if t_raw.is_observed(n, s) {
                    assert_eq!(filled.value(n, s, 0), t_raw.value(n, s, 0));
                }
                assert!(filled.is_observed(n, s));
            }
        }
        // A fully observed tensor passes through untouched.
        let full = wavy(4, 30, 24);
        let stats2 = NormStats::fit(&full).unwrap();
        let same = impute(&model, &full, &adj, &stats2, 24).unwrap();
        assert_eq!(same, full);
    }
}
