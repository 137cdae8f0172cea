//! Spatiotemporal imputation over sensor networks.
//!
//! Missing entries of a multivariate time series recorded by spatially
//! related sensors are estimated by a model that combines:
//!
//! - a token embedding (1-d convolution over time) plus sinusoidal
//!   positional encodings ([`embedding`]),
//! - multi-head graph attention across sensors at each time step, with
//!   DropEdge regularization during training ([`gat`]),
//! - a stack of pre-norm transformer blocks with causal self-attention whose
//!   attention and feed-forward tensors stay frozen while the add-and-norm
//!   layers fine-tune ([`backbone`], [`model`]),
//! - a linear output head mapping back to sensor units.
//!
//! Around the model: chronological splits and train-statistics normalization
//! ([`series`]), thresholded-Gaussian-kernel adjacency from geographic
//! distances ([`adjacency`]), point/block masking protocols ([`masking`]),
//! masked-loss fine-tuning with early stopping ([`training`]), MAE/MSE
//! scoring with mean/daily-average/nearest-neighbor baselines
//! ([`evaluation`]), and a (layers x width) sweep harness ([`pipeline`]).
//!
//! # Start with the examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! examples/
//!   prepare_data.rs     # synthetic sensor network -> CSVs, adjacency, splits
//!   generate_masks.rs   # point and block evaluation masks, statistics
//!   attention_demo.rs   # graph attention rows, DropEdge survival counts
//!   train_and_impute.rs # fine-tune, checkpoint, impute, score vs truth
//!   baselines.rs        # mean / daily-average / knn comparison table
//!   sweep_grid.rs       # layers x d_model grid on the synthetic fixture
//! ```
//!
//! Run one with `cargo run --release --example train_and_impute`.
//!
//! The same pipeline is scriptable through the `stimpute` binary
//! (`prepare`, `mask`, `train`, `impute`, `evaluate`, `sweep`); see the
//! README for the file formats and flags.

pub mod adjacency;
pub mod backbone;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod gat;
pub mod linalg;
pub mod masking;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod synthetic;
pub mod training;

pub use adjacency::{build_adjacency, AdjacencyMatrix, Sigma};
pub use error::{Error, Result};
pub use evaluation::{baseline_da, baseline_knn, baseline_mean, evaluate, MetricsReport};
pub use masking::{block_mask, hide_masked, point_mask, BlockMaskParams, EvalMask, MaskPattern};
pub use model::{init_model, model_forward, ForwardMode, ModelConfig, ModelParams};
pub use pipeline::{sweep, train_and_evaluate, SweepSpec};
pub use series::{
    denormalize, normalize, split_chronological, NormStats, SplitSpec, TimeSeriesTensor,
};
pub use training::{fit, impute, masked_loss, FitReport, LossKind, TrainConfig};
