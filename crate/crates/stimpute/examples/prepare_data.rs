//! Generate a synthetic sensor network, write it to the standard file
//! formats, and rebuild everything from disk: data CSV, distances CSV,
//! thresholded-Gaussian-kernel adjacency, and chronological splits.
//!
//!     cargo run --release --example prepare_data

use stimpute::adjacency::{build_adjacency, Sigma};
use stimpute::csvio::{
    read_data_csv, read_distances_csv, write_adjacency_csv, write_data_csv, write_distances_csv,
};
use stimpute::series::{split_chronological, NormStats, SplitSpec};
use stimpute::synthetic::{ring_distances, synthetic_series, SyntheticSpec};

fn main() -> stimpute::Result<()> {
    let out = std::env::temp_dir().join("stimpute_prepare_example");
    std::fs::create_dir_all(&out)?;

    // A small synthetic network, saved in the standard data format.
    let spec = SyntheticSpec {
        n_nodes: 6,
        n_steps: 240,
        ..SyntheticSpec::default()
    };
    let series = synthetic_series(&spec);
    let data_path = out.join("data.csv");
    write_data_csv(&series, &data_path)?;
    println!(
        "wrote {} ({} nodes x {} steps, {} missing entries)",
        data_path.display(),
        series.n_nodes,
        series.n_steps,
        series.observed.iter().filter(|&&o| !o).count()
    );

    let distances = ring_distances(spec.n_nodes);
    let dist_path = out.join("distances.csv");
    write_distances_csv(&distances, &series.node_ids, &dist_path)?;

    // Round-trip through the file formats.
    let loaded = read_data_csv(&data_path, None)?;
    assert_eq!(loaded, series);
    let dists = read_distances_csv(&dist_path, &loaded.node_ids)?;

    // Kernel adjacency: weight exp(-d^2/sigma^2), zeroed at or below the
    // threshold, self-loops on.
    let adj = build_adjacency(loaded.n_nodes, &dists, Sigma::Fixed(1.0), 0.1, true)?;
    write_adjacency_csv(&adj, &loaded.node_ids, &out.join("adjacency.csv"))?;
    println!(
        "adjacency: {} directed edges between distinct nodes",
        adj.off_diagonal_edge_count()
    );
    for j in 0..loaded.n_nodes {
        print!("{:8.4} ", adj.weight(0, j));
    }
    println!(" <- weights from node 0");

    // Chronological 70/10/20 split with normalization statistics from the
    // training segment only.
    let (train, val, test) = split_chronological(&loaded, &SplitSpec::default())?;
    println!(
        "split: {} train / {} val / {} test steps",
        train.n_steps, val.n_steps, test.n_steps
    );
    let stats = NormStats::fit(&train)?;
    println!(
        "train statistics: mean {:.4}, std {:.4} (applied unchanged to val/test)",
        stats.mean[0], stats.std[0]
    );
    write_data_csv(&train, &out.join("train.csv"))?;
    write_data_csv(&val, &out.join("val.csv"))?;
    write_data_csv(&test, &out.join("test.csv"))?;
    println!("outputs in {}", out.display());
    Ok(())
}
