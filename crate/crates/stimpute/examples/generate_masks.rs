//! Evaluation-mask protocols: point missing (independent per-entry masking)
//! and block missing (sparse point mask plus per-sensor outages of 1 to 4
//! hours).
//!
//!     cargo run --release --example generate_masks

use stimpute::masking::{block_mask, point_mask, BlockMaskParams};
use stimpute::synthetic::{synthetic_series, SyntheticSpec};

fn main() -> stimpute::Result<()> {
    // Five-minute data so hour-denominated outages span 12 to 48 steps.
    let spec = SyntheticSpec {
        n_nodes: 20,
        n_steps: 2000,
        step_seconds: 300,
        ..SyntheticSpec::default()
    };
    let data = synthetic_series(&spec);
    let observed = data.observed_count();
    println!("{} observed entries over {} sensors\n", observed, data.n_nodes);

    // Point missing at 25%: every observed entry hidden independently.
    for seed in [1u64, 2, 3] {
        let mask = point_mask(&data, 0.25, seed)?;
        println!(
            "point 25% seed {seed}: {} hidden ({:.2}% of observed)",
            mask.hidden_count(),
            100.0 * mask.hidden_count() as f64 / observed as f64
        );
    }

    // Determinism: a seed fully determines the mask.
    let a = point_mask(&data, 0.25, 42)?;
    let b = point_mask(&data, 0.25, 42)?;
    assert_eq!(a, b);
    println!("\nseed 42 twice -> identical masks");

    // Block missing: 5% point component, outage starting each step with
    // probability 0.15%, lasting 1-4 hours (12-48 steps here).
    let params = BlockMaskParams::from_hours(0.05, 0.0015, 1.0, 4.0, spec.step_seconds);
    println!(
        "\nblock pattern: point 5%, start prob 0.15%/step, lengths {}..={} steps",
        params.min_len_steps, params.max_len_steps
    );
    for seed in [1u64, 2, 3] {
        let mask = block_mask(&data, &params, seed)?;
        println!(
            "block seed {seed}: {} hidden ({:.2}% of observed)",
            mask.hidden_count(),
            100.0 * mask.hidden_count() as f64 / observed as f64
        );
    }

    // Longest contiguous outage of sensor 0 under one block mask.
    let mask = block_mask(&data, &params, 1)?;
    let mut longest = 0usize;
    let mut run = 0usize;
    for s in 0..data.n_steps {
        if mask.is_hidden(0, s) {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    println!("\nlongest outage of sensor 0: {longest} steps");

    // Masks never hide entries that were already missing.
    for s in 0..data.n_steps {
        for n in 0..data.n_nodes {
            if mask.is_hidden(n, s) {
                assert!(data.is_observed(n, s));
            }
        }
    }
    println!("hidden set verified to be a subset of the observed set");
    Ok(())
}
