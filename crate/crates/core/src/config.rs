//! Experiment configuration as plain `key = value` text.
//!
//! Blank lines and `#` comments are ignored. Later assignments win, so
//! applying file entries and then command-line overrides gives
//! flag > file > default.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SyntheticConfig;
use crate::models::{AutoencoderDims, ModelDims};
use crate::training::{AutoencoderTrainConfig, TrainConfig};
use crate::uq::McConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for '{key}': {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: SyntheticConfig,
    pub data_seed: u64,
    /// Root of every other random stream (split, encoder, training, sampling).
    pub seed: u64,
    pub train_years: u32,
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Days of history before the target day.
    pub window: usize,
    pub embedding_dim: usize,
    pub decoder_units: usize,
    pub padding: usize,
    pub hidden_units: usize,
    pub dense_units: usize,
    pub delta_layers: usize,
    pub head_layers: usize,
    pub baseline_dense_layers: usize,
    pub train: TrainConfig,
    pub ae: AutoencoderTrainConfig,
    pub mc_samples: usize,
    pub mc_dropout: f64,
    pub tolerance: f64,
    /// Independent training runs per model.
    pub runs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: SyntheticConfig::default(),
            data_seed: 7,
            seed: 1,
            train_years: 4,
            train_fraction: 0.4,
            val_fraction: 0.2,
            window: 7,
            embedding_dim: 5,
            decoder_units: 8,
            padding: 10,
            hidden_units: 8,
            dense_units: 5,
            delta_layers: 2,
            head_layers: 2,
            baseline_dense_layers: 4,
            train: TrainConfig::default(),
            ae: AutoencoderTrainConfig::default(),
            mc_samples: 100,
            mc_dropout: 0.2,
            tolerance: 1e-5,
            runs: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true or false".into(),
        }),
    }
}

/// `(key, value)` pairs in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "years",
        "depths",
        "max_depth_m",
        "noise_sd",
        "obs_interval_days",
        "obs_depth_fraction",
        "thermocline_depth_m",
        "start_date",
        "data_seed",
        "seed",
        "train_years",
        "train_fraction",
        "val_fraction",
        "window",
        "embedding_dim",
        "decoder_units",
        "padding",
        "hidden_units",
        "dense_units",
        "delta_layers",
        "head_layers",
        "baseline_dense_layers",
        "learning_rate",
        "epochs",
        "batch_size",
        "lambda_z",
        "lambda_r",
        "lambda_phy",
        "dropout",
        "train_dropout",
        "patience",
        "ae_epochs",
        "ae_learning_rate",
        "ae_batch_size",
        "mc_samples",
        "mc_dropout",
        "tolerance",
        "runs",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value;
        match key {
            "years" => self.data.years = parse(key, v)?,
            "depths" => self.data.depth_count = parse(key, v)?,
            "max_depth_m" => self.data.max_depth_m = parse(key, v)?,
            "noise_sd" => self.data.noise_sd = parse(key, v)?,
            "obs_interval_days" => self.data.obs_interval_days = parse(key, v)?,
            "obs_depth_fraction" => self.data.obs_depth_fraction = parse(key, v)?,
            "thermocline_depth_m" => self.data.thermocline_depth_m = parse(key, v)?,
            "start_date" => self.data.start = parse::<NaiveDate>(key, v)?,
            "data_seed" => self.data_seed = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "train_years" => self.train_years = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "val_fraction" => self.val_fraction = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "embedding_dim" => self.embedding_dim = parse(key, v)?,
            "decoder_units" => self.decoder_units = parse(key, v)?,
            "padding" => self.padding = parse(key, v)?,
            "hidden_units" => self.hidden_units = parse(key, v)?,
            "dense_units" => self.dense_units = parse(key, v)?,
            "delta_layers" => self.delta_layers = parse(key, v)?,
            "head_layers" => self.head_layers = parse(key, v)?,
            "baseline_dense_layers" => self.baseline_dense_layers = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "lambda_z" => self.train.lambda_z = parse(key, v)?,
            "lambda_r" => self.train.lambda_r = parse(key, v)?,
            "lambda_phy" => self.train.lambda_phy = parse(key, v)?,
            "dropout" => self.train.dropout = parse(key, v)?,
            "train_dropout" => self.train.train_dropout = parse_bool(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "ae_epochs" => self.ae.epochs = parse(key, v)?,
            "ae_learning_rate" => self.ae.learning_rate = parse(key, v)?,
            "ae_batch_size" => self.ae.batch_size = parse(key, v)?,
            "mc_samples" => self.mc_samples = parse(key, v)?,
            "mc_dropout" => self.mc_dropout = parse(key, v)?,
            "tolerance" => self.tolerance = parse(key, v)?,
            "runs" => self.runs = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    fn get(&self, key: &str) -> String {
        match key {
            "years" => self.data.years.to_string(),
            "depths" => self.data.depth_count.to_string(),
            "max_depth_m" => self.data.max_depth_m.to_string(),
            "noise_sd" => self.data.noise_sd.to_string(),
            "obs_interval_days" => self.data.obs_interval_days.to_string(),
            "obs_depth_fraction" => self.data.obs_depth_fraction.to_string(),
            "thermocline_depth_m" => self.data.thermocline_depth_m.to_string(),
            "start_date" => self.data.start.to_string(),
            "data_seed" => self.data_seed.to_string(),
            "seed" => self.seed.to_string(),
            "train_years" => self.train_years.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "val_fraction" => self.val_fraction.to_string(),
            "window" => self.window.to_string(),
            "embedding_dim" => self.embedding_dim.to_string(),
            "decoder_units" => self.decoder_units.to_string(),
            "padding" => self.padding.to_string(),
            "hidden_units" => self.hidden_units.to_string(),
            "dense_units" => self.dense_units.to_string(),
            "delta_layers" => self.delta_layers.to_string(),
            "head_layers" => self.head_layers.to_string(),
            "baseline_dense_layers" => self.baseline_dense_layers.to_string(),
            "learning_rate" => self.train.learning_rate.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "lambda_z" => self.train.lambda_z.to_string(),
            "lambda_r" => self.train.lambda_r.to_string(),
            "lambda_phy" => self.train.lambda_phy.to_string(),
            "dropout" => self.train.dropout.to_string(),
            "train_dropout" => self.train.train_dropout.to_string(),
            "patience" => self.train.patience.to_string(),
            "ae_epochs" => self.ae.epochs.to_string(),
            "ae_learning_rate" => self.ae.learning_rate.to_string(),
            "ae_batch_size" => self.ae.batch_size.to_string(),
            "mc_samples" => self.mc_samples.to_string(),
            "mc_dropout" => self.mc_dropout.to_string(),
            "tolerance" => self.tolerance.to_string(),
            "runs" => self.runs.to_string(),
            _ => unreachable!("key list and getter disagree"),
        }
    }

    /// Every key in canonical order; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k));
        }
        s
    }

    pub fn model_dims(&self, n_features: usize) -> ModelDims {
        ModelDims {
            n_features,
            embedding_dim: self.embedding_dim,
            hidden_units: self.hidden_units,
            dense_units: self.dense_units,
            delta_layers: self.delta_layers,
            head_layers: self.head_layers,
            baseline_dense_layers: self.baseline_dense_layers,
        }
    }

    pub fn autoencoder_dims(&self, n_inputs: usize) -> AutoencoderDims {
        AutoencoderDims {
            n_inputs,
            embedding_dim: self.embedding_dim,
            decoder_units: self.decoder_units,
            window_len: self.window + 1,
        }
    }

    pub fn mc(&self, seed: u64) -> McConfig {
        McConfig {
            n_samples: self.mc_samples,
            dropout: self.mc_dropout,
            seed,
        }
    }
}
