//! Run configuration: defaults, `key = value` config files, and
//! command-line overrides. Every command writes the fully resolved
//! configuration as JSON next to its outputs so a run can be reproduced
//! from the snapshot alone.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gsat_core::model::{AttentionKind, ModelConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attention {
    Spiking,
    Baseline,
}

impl Attention {
    pub fn kind(self) -> AttentionKind {
        match self {
            Attention::Spiking => AttentionKind::Spiking,
            Attention::Baseline => AttentionKind::Baseline,
        }
    }
}

impl std::str::FromStr for Attention {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spiking" => Ok(Attention::Spiking),
            "baseline" => Ok(Attention::Baseline),
            other => bail!("unknown attention kind {other:?} (expected spiking or baseline)"),
        }
    }
}

/// All tunables of a run. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub attention: Attention,
    /// Firing threshold.
    pub mu: f64,
    /// Spike-train length T.
    pub steps: usize,
    pub heads: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub eval_passes: usize,
    pub normalize_features: bool,
    pub attack_rate: f64,
    /// Threshold grid of the `sweep` command.
    pub mu_grid: Vec<f64>,
    /// Step-count grid of the `sweep` command.
    pub t_grid: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            attention: Attention::Spiking,
            mu: 0.1,
            steps: 8,
            heads: 8,
            hidden: 8,
            epochs: 300,
            patience: 100,
            learning_rate: 0.005,
            weight_decay: 5e-4,
            eval_passes: 1,
            normalize_features: true,
            attack_rate: 0.0,
            mu_grid: vec![0.02, 0.05, 0.1, 0.2, 0.4],
            t_grid: vec![2, 4, 8, 16],
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .with_context(|| format!("invalid list item {item:?}"))
        })
        .collect()
}

impl RunConfig {
    /// Apply one `key = value` assignment (config-file line or flag
    /// override).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = value.parse().context("invalid seed")?,
            "attention" => self.attention = value.parse()?,
            "mu" => self.mu = value.parse().context("invalid mu")?,
            "steps" | "T" => self.steps = value.parse().context("invalid step count")?,
            "heads" => self.heads = value.parse().context("invalid head count")?,
            "hidden" => self.hidden = value.parse().context("invalid hidden width")?,
            "epochs" => self.epochs = value.parse().context("invalid epoch count")?,
            "patience" => self.patience = value.parse().context("invalid patience")?,
            "learning_rate" => {
                self.learning_rate = value.parse().context("invalid learning rate")?
            }
            "weight_decay" => {
                self.weight_decay = value.parse().context("invalid weight decay")?
            }
            "eval_passes" => {
                self.eval_passes = value.parse().context("invalid eval pass count")?
            }
            "normalize_features" => {
                self.normalize_features =
                    value.parse().context("invalid normalize_features flag")?
            }
            "attack_rate" => self.attack_rate = value.parse().context("invalid attack rate")?,
            "mu_grid" => self.mu_grid = parse_list(value)?,
            "t_grid" => self.t_grid = parse_list(value)?,
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    /// Merge a `key = value` config file (`#` starts a comment) into the
    /// current values.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, found {raw:?}",
                    path.display(),
                    lineno + 1
                );
            };
            self.set(key.trim(), value)
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    /// Instantiate the two-layer model for a dataset of the given input
    /// width and class count.
    pub fn model_config(&self, in_dim: usize, num_classes: usize) -> ModelConfig {
        let mut config = ModelConfig::two_layer(
            in_dim,
            self.hidden,
            num_classes,
            self.heads,
            self.attention.kind(),
        );
        config.mu = self.mu;
        config.steps = self.steps;
        config.epochs = self.epochs;
        config.patience = self.patience;
        config.adam.lr = self.learning_rate;
        config.weight_decay = self.weight_decay;
        config.seed = self.seed;
        config.eval_passes = self.eval_passes;
        config
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
    }
}
