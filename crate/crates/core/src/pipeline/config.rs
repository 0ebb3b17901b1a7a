use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::LrSchedule;
use crate::error::{validation, Result};
use crate::parsing::Reduction;

/// Settings for a full clustering/training run.
///
/// The text form is one `key=value` per line using exactly the field names
/// below; `#` starts a comment and blank lines are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Part count including background.
    pub k: usize,
    pub alpha: f64,
    /// Epochs of training between clustering rounds.
    pub reassign_interval: usize,
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    pub warmup_start_lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: Vec<usize>,
    /// Pixels per optimizer step (0 = full batch).
    pub batch_size: usize,
    pub margin: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Independent stage-2 k-means++ runs per person and round; the lowest inertia wins.
    pub cluster_restarts: usize,
    /// Start each round's part clustering from the previous round's centroids.
    pub warm_start: bool,
    /// Stop once fewer than 0.1% of pixels change label between rounds.
    pub early_stop: bool,
    pub loss_reduction: Reduction,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 6,
            alpha: 0.1,
            reassign_interval: 1,
            total_epochs: 120,
            warmup_epochs: 10,
            base_lr: 3.5e-4,
            warmup_start_lr: 3.5e-5,
            lr_decay_factor: 0.1,
            lr_decay_epochs: vec![40, 70],
            batch_size: 64,
            margin: 0.3,
            epsilon: 0.1,
            seed: 0,
            cluster_restarts: crate::cluster::DEFAULT_RESTARTS,
            warm_start: true,
            early_stop: false,
            loss_reduction: Reduction::Mean,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "k",
    "alpha",
    "reassign_interval",
    "total_epochs",
    "warmup_epochs",
    "base_lr",
    "warmup_start_lr",
    "lr_decay_factor",
    "lr_decay_epochs",
    "batch_size",
    "margin",
    "epsilon",
    "seed",
    "cluster_restarts",
    "warm_start",
    "early_stop",
    "loss_reduction",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| validation!("invalid value {value:?} for {key}"))
}

impl RunConfig {
    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "k" => self.k = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "reassign_interval" => self.reassign_interval = parse(key, value)?,
            "total_epochs" => self.total_epochs = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "warmup_start_lr" => self.warmup_start_lr = parse(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, value)?,
            "lr_decay_epochs" => {
                self.lr_decay_epochs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "margin" => self.margin = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "cluster_restarts" => self.cluster_restarts = parse(key, value)?,
            "warm_start" => self.warm_start = parse(key, value)?,
            "early_stop" => self.early_stop = parse(key, value)?,
            "loss_reduction" => {
                self.loss_reduction = match value.trim() {
                    "mean" => Reduction::Mean,
                    "sum" => Reduction::Sum,
                    other => return Err(validation!("loss_reduction must be mean or sum, got {other:?}")),
                }
            }
            other => return Err(validation!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Parses `key=value` lines on top of the defaults and validates the result.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| validation!("config line {}: expected key=value, got {raw:?}", n + 1))?;
            cfg.set(key.trim(), value).map_err(|e| validation!("config line {}: {e}", n + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let decay: Vec<String> = self.lr_decay_epochs.iter().map(usize::to_string).collect();
        let reduction = match self.loss_reduction {
            Reduction::Mean => "mean",
            Reduction::Sum => "sum",
        };
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "reassign_interval={}", self.reassign_interval);
        let _ = writeln!(s, "total_epochs={}", self.total_epochs);
        let _ = writeln!(s, "warmup_epochs={}", self.warmup_epochs);
        let _ = writeln!(s, "base_lr={}", self.base_lr);
        let _ = writeln!(s, "warmup_start_lr={}", self.warmup_start_lr);
        let _ = writeln!(s, "lr_decay_factor={}", self.lr_decay_factor);
        let _ = writeln!(s, "lr_decay_epochs={}", decay.join(","));
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "margin={}", self.margin);
        let _ = writeln!(s, "epsilon={}", self.epsilon);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "cluster_restarts={}", self.cluster_restarts);
        let _ = writeln!(s, "warm_start={}", self.warm_start);
        let _ = writeln!(s, "early_stop={}", self.early_stop);
        let _ = writeln!(s, "loss_reduction={reduction}");
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=255).contains(&self.k) {
            return Err(validation!("k must be in 2..=255, got {}", self.k));
        }
        if self.cluster_restarts == 0 {
            return Err(validation!("cluster_restarts must be >= 1"));
        }
        if self.reassign_interval == 0 {
            return Err(validation!("reassign_interval must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(validation!("epsilon must be in [0, 1)"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0 && self.margin.is_finite() && self.margin >= 0.0) {
            return Err(validation!("alpha and margin must be finite and non-negative"));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(
            self.warmup_start_lr,
            self.base_lr,
            self.warmup_epochs,
            self.lr_decay_factor,
            self.lr_decay_epochs.clone(),
            self.total_epochs,
        )
    }
}
