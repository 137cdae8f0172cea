//! Plain-text configuration files: one `key = value` per line, `#` comments.
//! Keys mirror the training and model configuration fields; explicit
//! command-line flags always win over file values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{LossKind, TrainConfig};

pub const KNOWN_KEYS: &[&str] = &[
    "learning_rate",
    "max_epochs",
    "window",
    "dropedge_p",
    "train_mask_ratio",
    "patience",
    "seed",
    "loss",
    "d_model",
    "n_layers",
    "n_heads",
    "gat_heads",
    "conv_width",
];

/// Parse a config file into a key-value map, rejecting unknown keys.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected `key = value`, found `{raw}`",
                path.display(),
                idx + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                idx + 1
            )));
        }
        map.insert(key, value);
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key `{key}`: unparsable value `{raw}`"))),
    }
}

/// Overlay file values onto a training config; fields present in `flags`
/// (already resolved) stay untouched by passing them as `Some`.
pub struct TrainOverlay {
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub window: Option<usize>,
    pub dropedge_p: Option<f64>,
    pub train_mask_ratio: Option<f64>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub loss: Option<LossKind>,
}

pub struct ModelOverlay {
    pub d_model: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub gat_heads: Option<usize>,
    pub conv_width: Option<usize>,
}

/// Resolve the training config: defaults, then file values, then flags.
pub fn resolve_train_config(
    file: Option<&BTreeMap<String, String>>,
    flags: &TrainOverlay,
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(map) = file {
        if let Some(v) = parse_value(map, "learning_rate")? {
            cfg.learning_rate = v;
        }
        if let Some(v) = parse_value(map, "max_epochs")? {
            cfg.max_epochs = v;
        }
        if let Some(v) = parse_value(map, "window")? {
            cfg.window = v;
        }
        if let Some(v) = parse_value(map, "dropedge_p")? {
            cfg.dropedge_p = v;
        }
        if let Some(v) = parse_value(map, "train_mask_ratio")? {
            cfg.train_mask_ratio = v;
        }
        if let Some(v) = parse_value(map, "patience")? {
            cfg.patience = v;
        }
        if let Some(v) = parse_value(map, "seed")? {
            cfg.seed = v;
        }
        if let Some(raw) = map.get("loss") {
            cfg.loss = raw.parse()?;
        }
    }
    if let Some(v) = flags.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = flags.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = flags.window {
        cfg.window = v;
    }
    if let Some(v) = flags.dropedge_p {
        cfg.dropedge_p = v;
    }
    if let Some(v) = flags.train_mask_ratio {
        cfg.train_mask_ratio = v;
    }
    if let Some(v) = flags.patience {
        cfg.patience = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.loss {
        cfg.loss = v;
    }
    Ok(cfg)
}

/// Resolve the model config the same way.
pub fn resolve_model_config(
    file: Option<&BTreeMap<String, String>>,
    flags: &ModelOverlay,
) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::default();
    if let Some(map) = file {
        if let Some(v) = parse_value(map, "d_model")? {
            cfg.d_model = v;
        }
        if let Some(v) = parse_value(map, "n_layers")? {
            cfg.n_layers = v;
        }
        if let Some(v) = parse_value(map, "n_heads")? {
            cfg.n_heads = v;
        }
        if let Some(v) = parse_value(map, "gat_heads")? {
            cfg.gat_heads = v;
        }
        if let Some(v) = parse_value(map, "conv_width")? {
            cfg.conv_width = v;
        }
    }
    if let Some(v) = flags.d_model {
        cfg.d_model = v;
    }
    if let Some(v) = flags.n_layers {
        cfg.n_layers = v;
    }
    if let Some(v) = flags.n_heads {
        cfg.n_heads = v;
    }
    if let Some(v) = flags.gat_heads {
        cfg.gat_heads = v;
    }
    if let Some(v) = flags.conv_width {
        cfg.conv_width = v;
    }
    Ok(cfg)
}
