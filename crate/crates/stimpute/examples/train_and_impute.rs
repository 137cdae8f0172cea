//! End-to-end run on the synthetic ring fixture: hide 25% of the observed
//! entries, fine-tune the model, impute the test segment, and compare the
//! result against the statistical baselines.
//!
//!     cargo run --release --example train_and_impute

use stimpute::evaluation::{baseline_da, baseline_mean, evaluate};
use stimpute::masking::point_mask;
use stimpute::model::ModelConfig;
use stimpute::pipeline::train_and_evaluate;
use stimpute::series::SplitSpec;
use stimpute::synthetic::{ring_adjacency, synthetic_series, SyntheticSpec};
use stimpute::training::TrainConfig;

fn main() -> stimpute::Result<()> {
    let spec = SyntheticSpec::default();
    let data = synthetic_series(&spec);
    let adj = ring_adjacency(spec.n_nodes)?;
    let eval_mask = point_mask(&data, 0.25, 7)?;
    println!(
        "fixture: {} nodes x {} steps, std {:.3}, {} entries hidden for evaluation",
        data.n_nodes,
        data.n_steps,
        data.observed_std(),
        eval_mask.hidden_count()
    );

    let model_cfg = ModelConfig::default();
    let train_cfg = TrainConfig {
        max_epochs: 150,
        ..TrainConfig::default()
    };
    let started = std::time::Instant::now();
    let outcome = train_and_evaluate(
        &data,
        &adj,
        &eval_mask,
        &model_cfg,
        &train_cfg,
        &SplitSpec::default(),
    )?;
    println!(
        "trained {} epochs in {:.1}s (best validation mae {:.4} at epoch {})",
        outcome.fit_report.history.len(),
        started.elapsed().as_secs_f64(),
        outcome.fit_report.best_val_mae,
        outcome.fit_report.best_epoch
    );

    // Baselines fill the same hidden entries of the test segment.
    let mean_filled = baseline_mean(&outcome.truth_test, &outcome.test_mask)?;
    let da_filled = baseline_da(&outcome.truth_test, &outcome.test_mask)?;
    let mean_report = evaluate(&mean_filled, &outcome.truth_test, &outcome.test_mask)?;
    let da_report = evaluate(&da_filled, &outcome.truth_test, &outcome.test_mask)?;

    println!("\nmethod        mae       mse");
    println!(
        "model     {:8.4}  {:8.4}",
        outcome.report.mae, outcome.report.mse
    );
    println!("mean      {:8.4}  {:8.4}", mean_report.mae, mean_report.mse);
    println!("da        {:8.4}  {:8.4}", da_report.mae, da_report.mse);
    println!(
        "\nmodel mae = {:.3} x data std; {:.1}% better than mean, {:.1}% better than da",
        outcome.report.mae / data.observed_std(),
        100.0 * (1.0 - outcome.report.mae / mean_report.mae),
        100.0 * (1.0 - outcome.report.mae / da_report.mae)
    );
    Ok(())
}
