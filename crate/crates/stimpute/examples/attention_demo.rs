//! Graph attention up close: attention rows over a small sensor graph, the
//! effect of DropEdge, and the freeze policy of the backbone.
//!
//!     cargo run --release --example attention_demo

use stimpute::adjacency::{build_adjacency, Sigma};
use stimpute::gat::{drop_edge, gat_head_with_attention};
use stimpute::model::{init_model, ModelConfig};
use stimpute::rng;

fn main() -> stimpute::Result<()> {
    // Five sensors on a line; only immediate neighbors survive the kernel
    // threshold.
    let n = 5;
    let mut distances = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            distances.push((i, j, (j - i) as f64));
        }
    }
    let adj = build_adjacency(n, &distances, Sigma::Fixed(1.0), 0.1, true)?;
    println!("adjacency (thresholded Gaussian kernel, self-loops on):");
    for i in 0..n {
        for j in 0..n {
            print!("{:7.3}", adj.weight(i, j));
        }
        println!();
    }

    // One attention head with random parameters over random features.
    let cfg = ModelConfig {
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        gat_heads: 2,
        ..ModelConfig::default()
    };
    let model = init_model(&cfg, 7)?;
    let d_in = cfg.d_model;
    let d_head = cfg.d_model / cfg.gat_heads;
    let mut stream = rng::stream(11);
    let x: Vec<f64> = (0..n * d_in).map(|_| rng::gaussian(&mut stream)).collect();
    let (_, alpha) =
        gat_head_with_attention(&x, &adj, &model.gat.heads[0], d_in, d_head, 0.2)?;
    println!("\nattention rows (each sums to 1, zero outside the neighborhood):");
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            print!("{:7.3}", alpha[i * n + j]);
            sum += alpha[i * n + j];
        }
        println!("   sum {sum:.6}");
    }

    // DropEdge removes off-diagonal edges with probability p; self-loops
    // always survive.
    println!("\nDropEdge survival out of {} edges:", adj.off_diagonal_edge_count());
    for p in [0.0, 0.25, 0.5, 1.0] {
        let dropped = drop_edge(&adj, p, 99)?;
        println!(
            "  p = {p:<4} -> {} off-diagonal edges remain",
            dropped.off_diagonal_edge_count()
        );
    }

    // Freeze policy: attention/feed-forward frozen, norms and task layers
    // trainable.
    println!(
        "\nparameters: {} trainable / {} frozen",
        model.trainable_parameter_count(),
        model.frozen_parameter_count()
    );
    for (name, p) in model.named() {
        if name.starts_with("block0") {
            println!("  {:24} {}", name, if p.frozen { "frozen" } else { "trainable" });
        }
    }
    Ok(())
}
