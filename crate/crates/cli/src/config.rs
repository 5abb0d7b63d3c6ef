//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown or repeated keys are rejected. Command-line `--set`
//! overrides are applied after the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cfl_core::data::{ShapeClass, SplitConfig};
use cfl_core::detector::DetectorConfig;
use cfl_core::pipeline::ScheduleConfig;
use cfl_core::CflError;
use serde::{Deserialize, Serialize};

/// Overrides the root under which relative output directories are placed.
pub const OUTPUT_ROOT_ENV: &str = "CFL_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub split: SplitConfig,
    pub schedule: ScheduleConfig,
    pub eval_score_threshold: f64,
    pub eval_nms: f64,
    /// Annotated images written per evaluation.
    pub eval_images: usize,
    /// Periodic checkpoint interval in iterations; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            split: SplitConfig::default(),
            schedule: ScheduleConfig::default(),
            eval_score_threshold: 0.05,
            eval_nms: 0.5,
            eval_images: 16,
            checkpoint_every: 500,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "output_dir",
    "data_seed",
    "id_classes",
    "ood_classes",
    "num_labeled",
    "num_unlabeled",
    "num_test",
    "image_size",
    "lr",
    "momentum",
    "weight_decay",
    "grad_clip",
    "ema_momentum",
    "pseudo_threshold",
    "pseudo_nms",
    "alpha_t_init",
    "alpha_t_final",
    "stage1_iters",
    "stage2_iters",
    "lambda",
    "beta",
    "tau",
    "alpha",
    "k_mine",
    "labeled_batch",
    "unlabeled_batch",
    "enable_fc",
    "enable_uc",
    "store_ood_in_pool",
    "literal_denominator",
    "pool_capacity",
    "pool_start_iter",
    "eval_score_threshold",
    "eval_nms",
    "eval_images",
    "checkpoint_every",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CflError> {
    value
        .parse()
        .map_err(|_| CflError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CflError> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(CflError::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn parse_classes(key: &str, value: &str) -> Result<Vec<ShapeClass>, CflError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<ShapeClass>().map_err(|e| CflError::Config(format!("{key}: {e}"))))
        .collect()
}

fn join_classes(c: &[ShapeClass]) -> String {
    c.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CflError> {
        let v = value.trim();
        let s = &mut self.schedule;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "data_seed" => self.split.seed = parse(key, v)?,
            "id_classes" => self.split.id_classes = parse_classes(key, v)?,
            "ood_classes" => self.split.ood_classes = parse_classes(key, v)?,
            "num_labeled" => self.split.num_labeled = parse(key, v)?,
            "num_unlabeled" => self.split.num_unlabeled = parse(key, v)?,
            "num_test" => self.split.num_test = parse(key, v)?,
            "image_size" => self.split.image_size = parse(key, v)?,
            "lr" => s.lr = parse(key, v)?,
            "momentum" => s.momentum = parse(key, v)?,
            "weight_decay" => s.weight_decay = parse(key, v)?,
            "grad_clip" => s.grad_clip = parse(key, v)?,
            "ema_momentum" => s.ema_momentum = parse(key, v)?,
            "pseudo_threshold" => s.pseudo_threshold = parse(key, v)?,
            "pseudo_nms" => s.pseudo_nms = parse(key, v)?,
            "alpha_t_init" => s.alpha_t_init = parse(key, v)?,
            "alpha_t_final" => s.alpha_t_final = parse(key, v)?,
            "stage1_iters" => s.stage1_iters = parse(key, v)?,
            "stage2_iters" => s.stage2_iters = parse(key, v)?,
            "lambda" => s.lambda = parse(key, v)?,
            "beta" => s.beta = parse(key, v)?,
            "tau" => s.tau = parse(key, v)?,
            "alpha" => s.alpha = parse(key, v)?,
            "k_mine" => s.k_mine = parse(key, v)?,
            "labeled_batch" => s.labeled_batch = parse(key, v)?,
            "unlabeled_batch" => s.unlabeled_batch = parse(key, v)?,
            "enable_fc" => s.enable_fc = parse_bool(key, v)?,
            "enable_uc" => s.enable_uc = parse_bool(key, v)?,
            "store_ood_in_pool" => s.store_ood_in_pool = parse_bool(key, v)?,
            "literal_denominator" => s.literal_denominator = parse_bool(key, v)?,
            "pool_capacity" => s.pool_capacity = parse(key, v)?,
            "pool_start_iter" => s.pool_start_iter = parse(key, v)?,
            "eval_score_threshold" => self.eval_score_threshold = parse(key, v)?,
            "eval_nms" => self.eval_nms = parse(key, v)?,
            "eval_images" => self.eval_images = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            _ => return Err(CflError::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.schedule;
        Some(match key {
            "seed" => self.seed.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "data_seed" => self.split.seed.to_string(),
            "id_classes" => join_classes(&self.split.id_classes),
            "ood_classes" => join_classes(&self.split.ood_classes),
            "num_labeled" => self.split.num_labeled.to_string(),
            "num_unlabeled" => self.split.num_unlabeled.to_string(),
            "num_test" => self.split.num_test.to_string(),
            "image_size" => self.split.image_size.to_string(),
            "lr" => s.lr.to_string(),
            "momentum" => s.momentum.to_string(),
            "weight_decay" => s.weight_decay.to_string(),
            "grad_clip" => s.grad_clip.to_string(),
            "ema_momentum" => s.ema_momentum.to_string(),
            "pseudo_threshold" => s.pseudo_threshold.to_string(),
            "pseudo_nms" => s.pseudo_nms.to_string(),
            "alpha_t_init" => s.alpha_t_init.to_string(),
            "alpha_t_final" => s.alpha_t_final.to_string(),
            "stage1_iters" => s.stage1_iters.to_string(),
            "stage2_iters" => s.stage2_iters.to_string(),
            "lambda" => s.lambda.to_string(),
            "beta" => s.beta.to_string(),
            "tau" => s.tau.to_string(),
            "alpha" => s.alpha.to_string(),
            "k_mine" => s.k_mine.to_string(),
            "labeled_batch" => s.labeled_batch.to_string(),
            "unlabeled_batch" => s.unlabeled_batch.to_string(),
            "enable_fc" => s.enable_fc.to_string(),
            "enable_uc" => s.enable_uc.to_string(),
            "store_ood_in_pool" => s.store_ood_in_pool.to_string(),
            "literal_denominator" => s.literal_denominator.to_string(),
            "pool_capacity" => s.pool_capacity.to_string(),
            "pool_start_iter" => s.pool_start_iter.to_string(),
            "eval_score_threshold" => self.eval_score_threshold.to_string(),
            "eval_nms" => self.eval_nms.to_string(),
            "eval_images" => self.eval_images.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            _ => return None,
        })
    }

    /// Parse config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self, CflError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CflError::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(CflError::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                CflError::Config(m) => CflError::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CflError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CflError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Apply `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), CflError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CflError::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// The fully resolved configuration in the same format `parse_str` reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), CflError> {
        self.split.validate()?;
        self.schedule.validate()?;
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.eval_score_threshold) || !unit(self.eval_nms) {
            return Err(CflError::Config("eval_score_threshold and eval_nms must lie in (0, 1)".into()));
        }
        self.detector().validate()
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            num_id_classes: self.split.id_classes.len(),
            image_size: self.split.image_size,
            open_set: self.schedule.enable_uc,
            ..DetectorConfig::default()
        }
    }

    /// Output directory, placed under `$CFL_OUTPUT_ROOT` when it is set and
    /// the configured path is relative.
    pub fn run_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Display name of an internal label.
    pub fn class_name(&self, label: usize) -> String {
        self.split
            .id_classes
            .get(label)
            .map_or_else(|| "unknown".to_string(), |c| c.name().to_string())
    }
}
