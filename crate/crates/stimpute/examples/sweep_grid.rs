//! Layer-count x model-width sweep on the synthetic fixture, the desk-scale
//! version of a capacity study.
//!
//!     cargo run --release --example sweep_grid

use stimpute::masking::point_mask;
use stimpute::model::ModelConfig;
use stimpute::pipeline::{sweep, SweepSpec};
use stimpute::series::SplitSpec;
use stimpute::synthetic::{ring_adjacency, synthetic_series, SyntheticSpec};
use stimpute::training::TrainConfig;

fn main() -> stimpute::Result<()> {
    let spec = SyntheticSpec {
        n_steps: 1200,
        ..SyntheticSpec::default()
    };
    let data = synthetic_series(&spec);
    let adj = ring_adjacency(spec.n_nodes)?;
    let eval_mask = point_mask(&data, 0.25, 11)?;

    let sweep_spec = SweepSpec {
        layers: vec![2, 3],
        d_models: vec![32, 64],
        model: ModelConfig::default(),
        train: TrainConfig {
            max_epochs: 60,
            patience: 15,
            ..TrainConfig::default()
        },
        split: SplitSpec::default(),
    };
    println!("sweeping layers {:?} x d_model {:?} ...", sweep_spec.layers, sweep_spec.d_models);
    let rows = sweep(&data, &adj, &eval_mask, &sweep_spec)?;

    println!("\nlayers,d_model,mae,mse,seconds");
    for r in &rows {
        println!(
            "{},{},{:.4},{:.4},{:.1}",
            r.layers, r.d_model, r.mae, r.mse, r.seconds
        );
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.mae.partial_cmp(&b.mae).unwrap())
        .unwrap();
    println!(
        "\nbest cell: {} layers at width {} (mae {:.4})",
        best.layers, best.d_model, best.mae
    );
    Ok(())
}
