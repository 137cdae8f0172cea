//! Command-line pipeline: prepare, mask, train, impute, evaluate, sweep.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 runtime
//! failure. Diagnostics go to stderr; results go to files (or stdout for
//! `evaluate` without `--out`). Every subcommand is reproducible: fixed
//! seeds and flags produce byte-identical artifacts.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adjacency::{build_adjacency, AdjacencyMatrix, Sigma};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{
    parse_config_file, resolve_model_config, resolve_train_config, ModelOverlay, TrainOverlay,
};
use crate::csvio;
use crate::error::{Error, Result};
use crate::evaluation::{baseline_da, baseline_knn, baseline_mean, evaluate};
use crate::masking::{block_mask, hide_masked, point_mask, BlockMaskParams, EvalMask};
use crate::model::ModelConfig;
use crate::pipeline::{sweep, SweepSpec};
use crate::series::{normalize, split_chronological, NormStats, SplitSpec, TimeSeriesTensor};
use crate::training::{fit, impute, LossKind, TrainConfig};

#[derive(Parser)]
#[command(
    name = "stimpute",
    version,
    about = "Spatiotemporal imputation over sensor networks: graph attention feeding a frozen transformer backbone, plus masking protocols, baselines, and evaluation."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the adjacency matrix and chronological splits from raw files.
    Prepare(PrepareArgs),
    /// Generate a point or block evaluation mask.
    Mask(MaskArgs),
    /// Fine-tune a model and write a checkpoint plus training history.
    Train(TrainArgs),
    /// Fill every missing entry of a data file with model predictions.
    Impute(ImputeArgs),
    /// Score an imputation (or a baseline) on masked entries.
    Evaluate(EvaluateArgs),
    /// Train/evaluate a (layers x d_model) grid and emit a CSV table.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct DataOpts {
    /// Data CSV: header `timestamp,<node_0>,...`; empty or NaN cells are
    /// missing.
    #[arg(long)]
    data: PathBuf,
    /// Sampling interval in seconds (default: inferred from the file).
    #[arg(long)]
    step_seconds: Option<u32>,
}

#[derive(Args, Clone)]
struct AdjacencyOpts {
    /// Distances CSV with header `from,to,distance`.
    #[arg(long)]
    distances: PathBuf,
    /// Gaussian kernel bandwidth: `auto` (std of distances) or a positive
    /// real (default: auto).
    #[arg(long, default_value = "auto")]
    sigma: String,
    /// Kernel threshold in [0, 1); weights at or below it become zero
    /// (default: 0.1).
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Disable self-loops (they are on by default so every node attends to
    /// itself).
    #[arg(long)]
    no_self_loops: bool,
}

#[derive(Args, Clone)]
struct SplitOpts {
    /// Training fraction (default: 0.7).
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    /// Validation fraction (default: 0.1).
    #[arg(long, default_value_t = 0.1)]
    val_frac: f64,
    /// Test fraction (default: 0.2).
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
}

#[derive(Args, Clone)]
struct ModelOpts {
    /// Key=value config file; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model width (default: 64).
    #[arg(long)]
    d_model: Option<usize>,
    /// Backbone block count (default: 2).
    #[arg(long)]
    layers: Option<usize>,
    /// Attention heads per block (default: 4).
    #[arg(long)]
    heads: Option<usize>,
    /// Graph-attention heads (default: 4).
    #[arg(long)]
    gat_heads: Option<usize>,
    /// Token-embedding convolution width, odd (default: 3).
    #[arg(long)]
    conv_width: Option<usize>,
}

#[derive(Args, Clone)]
struct TrainOpts {
    /// Learning rate (default: 0.001).
    #[arg(long)]
    lr: Option<f64>,
    /// Maximum training epochs (default: 200).
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Window length in steps (default: 48).
    #[arg(long)]
    window: Option<usize>,
    /// Edge-drop probability during training (default: 0.05).
    #[arg(long)]
    dropedge_p: Option<f64>,
    /// Fraction of entries re-masked each epoch (default: 0.25).
    #[arg(long)]
    train_mask_ratio: Option<f64>,
    /// Early-stopping patience in epochs (default: 20).
    #[arg(long)]
    patience: Option<usize>,
    /// Random seed (default: 42).
    #[arg(long)]
    seed: Option<u64>,
    /// Training loss: mae or mse (default: mae).
    #[arg(long)]
    loss: Option<String>,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    adjacency: AdjacencyOpts,
    #[command(flatten)]
    split: SplitOpts,
    /// Output directory for adjacency.csv, train.csv, val.csv, test.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    data: DataOpts,
    /// Missing pattern: point or block.
    #[arg(long)]
    pattern: String,
    /// Point pattern: fraction of observed entries to hide (default: 0.25).
    #[arg(long, default_value_t = 0.25)]
    ratio: f64,
    /// Block pattern: independent point-mask fraction (default: 0.05).
    #[arg(long, default_value_t = 0.05)]
    point_ratio: f64,
    /// Block pattern: per-step outage start probability (default: 0.0015).
    #[arg(long, default_value_t = 0.0015)]
    block_start_prob: f64,
    /// Block pattern: minimum outage duration in hours (default: 1).
    #[arg(long, default_value_t = 1.0)]
    min_hours: f64,
    /// Block pattern: maximum outage duration in hours (default: 4).
    #[arg(long, default_value_t = 4.0)]
    max_hours: f64,
    /// Random seed (default: 0).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output mask CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    adjacency: AdjacencyOpts,
    #[command(flatten)]
    split: SplitOpts,
    #[command(flatten)]
    model: ModelOpts,
    #[command(flatten)]
    train: TrainOpts,
    /// Evaluation mask CSV to hide from training (optional).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output history CSV path (optional).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct ImputeArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    adjacency: AdjacencyOpts,
    #[command(flatten)]
    split: SplitOpts,
    #[command(flatten)]
    model: ModelOpts,
    /// Trained checkpoint to load (must match the model flags).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation mask CSV to hide before imputing (optional).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Window length in steps for chunked inference (default: 48).
    #[arg(long, default_value_t = 48)]
    window: usize,
    /// Output data CSV with every entry filled.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth data CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Sampling interval in seconds (default: inferred from the file).
    #[arg(long)]
    step_seconds: Option<u32>,
    /// Evaluation mask CSV.
    #[arg(long)]
    mask: PathBuf,
    /// Imputed data CSV to score (mutually exclusive with --baseline).
    #[arg(long, conflicts_with = "baseline")]
    imputed: Option<PathBuf>,
    /// Score a baseline instead: mean, da, or knn.
    #[arg(long)]
    baseline: Option<String>,
    /// Distances CSV (needed for the knn baseline).
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Neighbor count for knn (default: 5).
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Dataset tag for the report (default: truth file stem).
    #[arg(long)]
    dataset: Option<String>,
    /// Pattern label override for the report: point or block.
    #[arg(long)]
    pattern: Option<String>,
    /// Method label for the report (default: imputed file stem or the
    /// baseline name).
    #[arg(long)]
    method: Option<String>,
    /// Report CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Model flags for `sweep`: layer count and width come from the grid, so
/// only the remaining architecture knobs are accepted.
#[derive(Args, Clone)]
struct SweepModelOpts {
    /// Key=value config file; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Attention heads per block (default: 4).
    #[arg(long)]
    heads: Option<usize>,
    /// Graph-attention heads (default: 4).
    #[arg(long)]
    gat_heads: Option<usize>,
    /// Token-embedding convolution width, odd (default: 3).
    #[arg(long)]
    conv_width: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    adjacency: AdjacencyOpts,
    #[command(flatten)]
    split: SplitOpts,
    #[command(flatten)]
    model: SweepModelOpts,
    #[command(flatten)]
    train: TrainOpts,
    /// Comma-separated layer counts, e.g. `2,3`.
    #[arg(long)]
    layers: String,
    /// Comma-separated model widths, e.g. `32,64`.
    #[arg(long)]
    d_models: String,
    /// Evaluation mask CSV (default: generate a point mask).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Point-mask ratio when generating the evaluation mask (default: 0.25).
    #[arg(long, default_value_t = 0.25)]
    eval_ratio: f64,
    /// Seed for the generated evaluation mask (default: 1).
    #[arg(long, default_value_t = 1)]
    mask_seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Run the command line; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match exec(cli) {
        Ok(()) => 0,
        Err((code, e)) => {
            eprintln!("error: {e}");
            code
        }
    }
}

type CliResult = std::result::Result<(), (i32, Error)>;

fn data_err<T>(r: Result<T>) -> std::result::Result<T, (i32, Error)> {
    r.map_err(|e| (2, e))
}

fn run_err<T>(r: Result<T>) -> std::result::Result<T, (i32, Error)> {
    r.map_err(|e| match e {
        Error::NonFiniteLoss { .. } => (3, e),
        Error::Io(_) => (3, e),
        other => (2, other),
    })
}

fn exec(cli: Cli) -> CliResult {
    match cli.cmd {
        Cmd::Prepare(args) => cmd_prepare(args),
        Cmd::Mask(args) => cmd_mask(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Impute(args) => cmd_impute(args),
        Cmd::Evaluate(args) => cmd_evaluate(args),
        Cmd::Sweep(args) => cmd_sweep(args),
    }
}

fn load_data(opts: &DataOpts) -> Result<TimeSeriesTensor> {
    csvio::read_data_csv(&opts.data, opts.step_seconds)
}

fn build_graph(opts: &AdjacencyOpts, t: &TimeSeriesTensor) -> Result<AdjacencyMatrix> {
    let distances = csvio::read_distances_csv(&opts.distances, &t.node_ids)?;
    let sigma = if opts.sigma.eq_ignore_ascii_case("auto") {
        Sigma::Auto
    } else {
        let v: f64 = opts
            .sigma
            .parse()
            .map_err(|_| Error::Config(format!("sigma must be `auto` or a number, got `{}`", opts.sigma)))?;
        Sigma::Fixed(v)
    };
    build_adjacency(t.n_nodes, &distances, sigma, opts.threshold, !opts.no_self_loops)
}

fn split_spec(opts: &SplitOpts) -> Result<SplitSpec> {
    SplitSpec::new(opts.train_frac, opts.val_frac, opts.test_frac)
}

fn resolve_configs(
    model: &ModelOpts,
    train: &TrainOpts,
) -> Result<(ModelConfig, TrainConfig)> {
    let file = match &model.config {
        Some(path) => Some(parse_config_file(path)?),
        None => None,
    };
    let loss = match &train.loss {
        Some(raw) => Some(raw.parse::<LossKind>()?),
        None => None,
    };
    let model_cfg = resolve_model_config(
        file.as_ref(),
        &ModelOverlay {
            d_model: model.d_model,
            n_layers: model.layers,
            n_heads: model.heads,
            gat_heads: model.gat_heads,
            conv_width: model.conv_width,
        },
    )?;
    let train_cfg = resolve_train_config(
        file.as_ref(),
        &TrainOverlay {
            learning_rate: train.lr,
            max_epochs: train.max_epochs,
            window: train.window,
            dropedge_p: train.dropedge_p,
            train_mask_ratio: train.train_mask_ratio,
            patience: train.patience,
            seed: train.seed,
            loss,
        },
    )?;
    Ok((model_cfg, train_cfg))
}

fn load_optional_mask(
    path: Option<&PathBuf>,
    t: &TimeSeriesTensor,
) -> Result<Option<EvalMask>> {
    match path {
        Some(p) => Ok(Some(csvio::read_mask_csv(p, t)?)),
        None => Ok(None),
    }
}

fn cmd_prepare(args: PrepareArgs) -> CliResult {
    let t = data_err(load_data(&args.data))?;
    let adj = data_err(build_graph(&args.adjacency, &t))?;
    let spec = data_err(split_spec(&args.split))?;
    let (train, val, test) = data_err(split_chronological(&t, &spec))?;
    run_err(std::fs::create_dir_all(&args.out_dir).map_err(Error::Io))?;
    run_err(csvio::write_adjacency_csv(&adj, &t.node_ids, &args.out_dir.join("adjacency.csv")))?;
    run_err(csvio::write_data_csv(&train, &args.out_dir.join("train.csv")))?;
    run_err(csvio::write_data_csv(&val, &args.out_dir.join("val.csv")))?;
    run_err(csvio::write_data_csv(&test, &args.out_dir.join("test.csv")))?;
    println!(
        "prepared {} nodes: {} train / {} val / {} test steps, {} edges",
        t.n_nodes,
        train.n_steps,
        val.n_steps,
        test.n_steps,
        adj.off_diagonal_edge_count()
    );
    Ok(())
}

fn cmd_mask(args: MaskArgs) -> CliResult {
    let t = data_err(load_data(&args.data))?;
    let mask = match args.pattern.to_ascii_lowercase().as_str() {
        "point" => data_err(point_mask(&t, args.ratio, args.seed))?,
        "block" => {
            let params = BlockMaskParams::from_hours(
                args.point_ratio,
                args.block_start_prob,
                args.min_hours,
                args.max_hours,
                t.step_seconds,
            );
            data_err(block_mask(&t, &params, args.seed))?
        }
        other => {
            return Err((
                2,
                Error::Config(format!("pattern must be `point` or `block`, got `{other}`")),
            ))
        }
    };
    run_err(csvio::write_mask_csv(&mask, &t, &args.out))?;
    println!(
        "masked {} of {} observed entries ({:.2}%)",
        mask.hidden_count(),
        t.observed_count(),
        100.0 * mask.hidden_count() as f64 / t.observed_count().max(1) as f64
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let t_raw = data_err(load_data(&args.data))?;
    let adj = data_err(build_graph(&args.adjacency, &t_raw))?;
    let spec = data_err(split_spec(&args.split))?;
    let (model_cfg, train_cfg) = data_err(resolve_configs(&args.model, &args.train))?;
    let mask = data_err(load_optional_mask(args.mask.as_ref(), &t_raw))?;

    let hidden = match &mask {
        Some(m) => data_err(hide_masked(&t_raw, m))?,
        None => t_raw.clone(),
    };
    let (train_seg, val_seg, _) = data_err(split_chronological(&hidden, &spec))?;
    let stats = data_err(NormStats::fit(&train_seg))?;
    let train_n = normalize(&train_seg, &stats);
    let val_n = normalize(&val_seg, &stats);

    let mut model = data_err(crate::model::init_model(&model_cfg, train_cfg.seed))?;
    let report = run_err(fit(&mut model, &train_n, &val_n, &adj, &train_cfg))?;

    run_err(save_checkpoint(&model, &args.checkpoint))?;
    if let Some(history) = &args.history {
        run_err(csvio::write_history_csv(&report.history, history))?;
    }
    println!(
        "trained {} epochs; best validation mae {:.6} at epoch {}",
        report.history.len(),
        report.best_val_mae,
        report.best_epoch
    );
    Ok(())
}

fn cmd_impute(args: ImputeArgs) -> CliResult {
    let t_raw = data_err(load_data(&args.data))?;
    let adj = data_err(build_graph(&args.adjacency, &t_raw))?;
    let spec = data_err(split_spec(&args.split))?;
    let (model_cfg, _) = data_err(resolve_configs(&args.model, &TrainOpts {
        lr: None,
        max_epochs: None,
        window: None,
        dropedge_p: None,
        train_mask_ratio: None,
        patience: None,
        seed: None,
        loss: None,
    }))?;
    let mask = data_err(load_optional_mask(args.mask.as_ref(), &t_raw))?;
    let hidden = match &mask {
        Some(m) => data_err(hide_masked(&t_raw, m))?,
        None => t_raw.clone(),
    };

    // Normalization statistics come from the training fraction of the
    // supplied series, mirroring how the checkpoint was fitted.
    let (train_seg, _, _) = data_err(split_chronological(&hidden, &spec))?;
    let stats = data_err(NormStats::fit(&train_seg))?;
    let model = data_err(load_checkpoint(&args.checkpoint, &model_cfg))?;

    let filled = run_err(impute(&model, &hidden, &adj, &stats, args.window))?;
    run_err(csvio::write_data_csv(&filled, &args.out))?;
    println!(
        "imputed {} entries into {}",
        hidden.observed.iter().filter(|&&o| !o).count(),
        args.out.display()
    );
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let truth = data_err(csvio::read_data_csv(&args.truth, args.step_seconds))?;
    let mut mask = data_err(csvio::read_mask_csv(&args.mask, &truth))?;
    if let Some(label) = &args.pattern {
        mask.pattern = match label.to_ascii_lowercase().as_str() {
            "point" => crate::masking::MaskPattern::Point,
            "block" => crate::masking::MaskPattern::Block,
            other => {
                return Err((
                    2,
                    Error::Config(format!("pattern must be `point` or `block`, got `{other}`")),
                ))
            }
        };
    }

    let (imputed, method) = if let Some(path) = &args.imputed {
        let t = data_err(csvio::read_data_csv(path, Some(truth.step_seconds)))?;
        (t, args.method.clone().unwrap_or_else(|| file_stem(path)))
    } else {
        let name = args.baseline.clone().ok_or((
            1,
            Error::Config("either --imputed or --baseline is required".into()),
        ))?;
        let filled = match name.to_ascii_lowercase().as_str() {
            "mean" => data_err(baseline_mean(&truth, &mask))?,
            "da" => data_err(baseline_da(&truth, &mask))?,
            "knn" => {
                let distances_path = args.distances.as_ref().ok_or_else(|| {
                    (
                        1,
                        Error::Config("--distances is required for the knn baseline".into()),
                    )
                })?;
                let adj = data_err(build_graph(
                    &AdjacencyOpts {
                        distances: distances_path.clone(),
                        sigma: "auto".into(),
                        threshold: 0.1,
                        no_self_loops: false,
                    },
                    &truth,
                ))?;
                data_err(baseline_knn(&truth, &adj, &mask, args.k))?
            }
            other => {
                return Err((
                    2,
                    Error::Config(format!(
                        "baseline must be mean, da, or knn, got `{other}`"
                    )),
                ))
            }
        };
        (filled, args.method.clone().unwrap_or(name))
    };

    let report = data_err(evaluate(&imputed, &truth, &mask))?
        .with_dataset(&args.dataset.clone().unwrap_or_else(|| file_stem(&args.truth)));
    match &args.out {
        Some(path) => run_err(csvio::write_report_csv(
            &[(method, report)],
            path,
        ))?,
        None => {
            println!("dataset,pattern,method,mae,mse,n_scored");
            println!(
                "{},{},{},{},{},{}",
                report.dataset_tag,
                report.pattern.as_str(),
                method,
                report.mae,
                report.mse,
                report.n_scored
            );
        }
    }
    Ok(())
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for piece in raw.split(',') {
        let v: usize = piece
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{what}: unparsable entry `{piece}`")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{what}: empty list")));
    }
    Ok(out)
}

fn cmd_sweep(args: SweepArgs) -> CliResult {
    let t_raw = data_err(load_data(&args.data))?;
    let adj = data_err(build_graph(&args.adjacency, &t_raw))?;
    let spec = data_err(split_spec(&args.split))?;
    let model_opts = ModelOpts {
        config: args.model.config.clone(),
        d_model: None,
        layers: None,
        heads: args.model.heads,
        gat_heads: args.model.gat_heads,
        conv_width: args.model.conv_width,
    };
    let (model_cfg, train_cfg) = data_err(resolve_configs(&model_opts, &args.train))?;
    let layers = data_err(parse_list(&args.layers, "--layers"))?;
    let d_models = data_err(parse_list(&args.d_models, "--d-models"))?;

    let mask = match data_err(load_optional_mask(args.mask.as_ref(), &t_raw))? {
        Some(m) => m,
        None => data_err(point_mask(&t_raw, args.eval_ratio, args.mask_seed))?,
    };

    let rows = run_err(sweep(
        &t_raw,
        &adj,
        &mask,
        &SweepSpec {
            layers,
            d_models,
            model: model_cfg,
            train: train_cfg,
            split: spec,
        },
    ))?;
    run_err(csvio::write_sweep_csv(&rows, &args.out))?;
    println!("swept {} cells into {}", rows.len(), args.out.display());
    Ok(())
}
