//! Flat `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::{OptimizerKind, TrainConfig};
use crate::dst::PruneMode;
use crate::error::{Error, Result};
use crate::model::{AuxCutoff, LossKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::config(format!("precision must be f32 or f64, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// Everything a training run needs: hyperparameters plus file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// When absent and the aux head is enabled, a balanced clustering is
    /// computed from the training data.
    pub clustering_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            train_path: None,
            test_path: None,
            clustering_path: None,
            output_dir: PathBuf::from("run"),
            precision: Precision::F32,
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_config_string`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "train_path",
    "test_path",
    "clustering_path",
    "output_dir",
    "precision",
    "seed",
    "epochs",
    "batch_size",
    "lr_encoder",
    "lr_classifier",
    "lr_aux",
    "lr_intermediate",
    "warmup_steps",
    "weight_decay_encoder",
    "weight_decay_classifier",
    "optimizer_encoder",
    "optimizer_classifier",
    "eval_every_epoch",
    "dropout",
    "encoder_dims",
    "use_intermediate",
    "intermediate_size",
    "fan_in",
    "loss",
    "bce_pos_weight",
    "aux_enabled",
    "num_clusters",
    "aux_cutoff",
    "aux_initial_scale",
    "prune_mode",
    "rewire_fraction",
    "rewire_threshold",
    "rewire_interval",
    "rewire_stop",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Parses a config file body. Later keys override earlier ones.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        // Threshold and fraction are stored together until the mode is known.
        let mut mode = "fraction".to_string();
        let mut fraction = match cfg.train.rewire.mode {
            PruneMode::Fraction(f) => f,
            PruneMode::Threshold(_) => 0.25,
        };
        let mut threshold = 0.0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "prune_mode" => mode = value.to_string(),
                "rewire_fraction" => fraction = parse(key, value)?,
                "rewire_threshold" => threshold = parse(key, value)?,
                _ => cfg.set(key, value)?,
            }
        }
        cfg.train.rewire.mode = match mode.as_str() {
            "fraction" => PruneMode::Fraction(fraction),
            "threshold" => PruneMode::Threshold(threshold),
            other => return Err(Error::config(format!("prune_mode must be fraction or threshold, got {other:?}"))),
        };
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key. Prune settings are handled here too, each key updating
    /// the current mode in place.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let m = &mut t.model;
        match key {
            "train_path" => self.train_path = optional_path(value),
            "test_path" => self.test_path = optional_path(value),
            "clustering_path" => self.clustering_path = optional_path(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "precision" => self.precision = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr_encoder" => t.lr_encoder = parse(key, value)?,
            "lr_classifier" => t.lr_classifier = parse(key, value)?,
            "lr_aux" => t.lr_aux = parse(key, value)?,
            "lr_intermediate" => t.lr_intermediate = parse(key, value)?,
            "warmup_steps" => t.warmup_steps = parse(key, value)?,
            "weight_decay_encoder" => t.weight_decay_encoder = parse(key, value)?,
            "weight_decay_classifier" => t.weight_decay_classifier = parse(key, value)?,
            "optimizer_encoder" => t.optimizer_encoder = value.parse::<OptimizerKind>()?,
            "optimizer_classifier" => t.optimizer_classifier = value.parse::<OptimizerKind>()?,
            "eval_every_epoch" => t.eval_every_epoch = parse_bool(key, value)?,
            "dropout" => m.dropout = parse(key, value)?,
            "encoder_dims" => {
                let mut dims = vec![0];
                for part in value.split(',') {
                    dims.push(parse(key, part.trim())?);
                }
                m.encoder_dims = dims;
            }
            "use_intermediate" => m.use_intermediate = parse_bool(key, value)?,
            "intermediate_size" => m.intermediate_size = parse(key, value)?,
            "fan_in" => m.fan_in = parse(key, value)?,
            "loss" => m.loss = value.parse::<LossKind>()?,
            "bce_pos_weight" => m.bce_pos_weight = parse(key, value)?,
            "aux_enabled" => m.aux_enabled = parse_bool(key, value)?,
            "num_clusters" => m.num_clusters = parse(key, value)?,
            "aux_cutoff" => m.aux_cutoff = value.parse::<AuxCutoff>()?,
            "aux_initial_scale" => m.aux_initial_scale = parse(key, value)?,
            "prune_mode" => {
                t.rewire.mode = match (value, t.rewire.mode) {
                    ("fraction", PruneMode::Threshold(_)) => PruneMode::Fraction(0.25),
                    ("threshold", PruneMode::Fraction(_)) => PruneMode::Threshold(0.0),
                    ("fraction" | "threshold", same) => same,
                    _ => return Err(Error::config(format!("prune_mode must be fraction or threshold, got {value:?}"))),
                }
            }
            "rewire_fraction" => t.rewire.mode = PruneMode::Fraction(parse(key, value)?),
            "rewire_threshold" => t.rewire.mode = PruneMode::Threshold(parse(key, value)?),
            "rewire_interval" => t.rewire.interval = parse(key, value)?,
            "rewire_stop" => t.rewire.stop_fraction = parse(key, value)?,
            _ => {
                return Err(Error::config(format!(
                    "unknown config key {key:?}; valid keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Serializes every key; parsing the result gives back an equal config.
    pub fn to_config_string(&self) -> String {
        let t = &self.train;
        let m = &t.model;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let dims: Vec<String> = m.encoder_dims[1..].iter().map(|d| d.to_string()).collect();
        let (mode, fraction, threshold) = match t.rewire.mode {
            PruneMode::Fraction(f) => ("fraction", f, 0.0),
            PruneMode::Threshold(th) => ("threshold", 0.25, th),
        };
        let values: Vec<(&str, String)> = vec![
            ("train_path", path(&self.train_path)),
            ("test_path", path(&self.test_path)),
            ("clustering_path", path(&self.clustering_path)),
            ("output_dir", self.output_dir.display().to_string()),
            ("precision", self.precision.to_string()),
            ("seed", t.seed.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr_encoder", t.lr_encoder.to_string()),
            ("lr_classifier", t.lr_classifier.to_string()),
            ("lr_aux", t.lr_aux.to_string()),
            ("lr_intermediate", t.lr_intermediate.to_string()),
            ("warmup_steps", t.warmup_steps.to_string()),
            ("weight_decay_encoder", t.weight_decay_encoder.to_string()),
            ("weight_decay_classifier", t.weight_decay_classifier.to_string()),
            ("optimizer_encoder", t.optimizer_encoder.to_string()),
            ("optimizer_classifier", t.optimizer_classifier.to_string()),
            ("eval_every_epoch", t.eval_every_epoch.to_string()),
            ("dropout", m.dropout.to_string()),
            ("encoder_dims", dims.join(",")),
            ("use_intermediate", m.use_intermediate.to_string()),
            ("intermediate_size", m.intermediate_size.to_string()),
            ("fan_in", m.fan_in.to_string()),
            ("loss", m.loss.to_string()),
            ("bce_pos_weight", m.bce_pos_weight.to_string()),
            ("aux_enabled", m.aux_enabled.to_string()),
            ("num_clusters", m.num_clusters.to_string()),
            ("aux_cutoff", m.aux_cutoff.to_string()),
            ("aux_initial_scale", m.aux_initial_scale.to_string()),
            ("prune_mode", mode.to_string()),
            ("rewire_fraction", fraction.to_string()),
            ("rewire_threshold", threshold.to_string()),
            ("rewire_interval", t.rewire.interval.to_string()),
            ("rewire_stop", t.rewire.stop_fraction.to_string()),
        ];
        debug_assert_eq!(values.len(), CONFIG_KEYS.len());
        let mut s = String::new();
        for (k, v) in values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
