use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, AdamConfig};
use crate::error::{Error, Result};
use crate::ib::BetaSchedule;

/// Which side of the flow is compressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Bottlenecks over the source past; predict the target future.
    SourcePast,
    /// Bottlenecks over the target future; predict the source past.
    TargetFuture,
}

/// How the compressed window is cut into independent bottlenecks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Monolithic,
    PerChannel,
    PerTimestep,
    PerChannelTimestep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub const fn leaky(width: usize) -> Self {
        Self {
            width,
            activation: Activation::LeakyRelu,
        }
    }

    pub const fn tanh(width: usize) -> Self {
        Self {
            width,
            activation: Activation::Tanh,
        }
    }
}

pub(crate) fn hidden(layers: &[LayerSpec]) -> Vec<(usize, Activation)> {
    layers.iter().map(|l| (l.width, l.activation)).collect()
}

/// Layer widths for every network in a scheme. All encoders are MLPs over
/// flattened windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub bottleneck_hidden: Vec<LayerSpec>,
    pub bottleneck_dim: usize,
    pub context_hidden: Vec<LayerSpec>,
    pub context_dim: usize,
    pub head_hidden: Vec<LayerSpec>,
    pub predicted_hidden: Vec<LayerSpec>,
    pub embed_dim: usize,
}

impl Architecture {
    /// Widths for the synthetic Boolean experiments, with dense tanh layers
    /// standing in for the recurrent layers of the reference setup.
    pub fn synthetic() -> Self {
        Self {
            bottleneck_hidden: vec![LayerSpec::leaky(64)],
            bottleneck_dim: 8,
            context_hidden: vec![LayerSpec::tanh(128), LayerSpec::leaky(64)],
            context_dim: 32,
            head_hidden: vec![LayerSpec::leaky(256), LayerSpec::leaky(256)],
            predicted_hidden: vec![LayerSpec::tanh(128), LayerSpec::leaky(64)],
            embed_dim: 32,
        }
    }

    /// Widths for long-horizon continuous recordings.
    pub fn continuous() -> Self {
        Self {
            bottleneck_hidden: vec![LayerSpec::leaky(256)],
            bottleneck_dim: 8,
            context_hidden: vec![LayerSpec::tanh(128), LayerSpec::tanh(128), LayerSpec::leaky(256)],
            context_dim: 32,
            head_hidden: vec![LayerSpec::leaky(256)],
            predicted_hidden: vec![LayerSpec::tanh(128), LayerSpec::tanh(128), LayerSpec::leaky(256)],
            embed_dim: 32,
        }
    }

    /// Narrow networks for short binary windows; a fraction of the cost of
    /// [`Architecture::synthetic`].
    pub fn compact() -> Self {
        Self {
            bottleneck_hidden: vec![LayerSpec::leaky(32)],
            bottleneck_dim: 8,
            context_hidden: vec![LayerSpec::leaky(32)],
            context_dim: 16,
            head_hidden: vec![LayerSpec::leaky(64), LayerSpec::leaky(64)],
            predicted_hidden: vec![LayerSpec::leaky(32)],
            embed_dim: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.bottleneck_dim, self.context_dim, self.embed_dim];
        let widths = self
            .bottleneck_hidden
            .iter()
            .chain(&self.context_hidden)
            .chain(&self.head_hidden)
            .chain(&self.predicted_hidden)
            .map(|l| l.width);
        if dims.into_iter().chain(widths).any(|d| d == 0) {
            return Err(Error::Config("all layer widths and dimensions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything that defines one decomposition run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub direction: Direction,
    pub partition: Partition,
    pub tau: usize,
    pub architecture: Architecture,
    pub schedule: BetaSchedule,
    /// Steps at `beta_initial` before annealing starts, as a fraction of
    /// `schedule.total_steps`.
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub val_batch_size: usize,
    pub max_val_batches: usize,
    pub log_every: usize,
    /// Keep a parameter snapshot every this many log points (0: final only).
    pub snapshot_every: usize,
    pub adam: AdamConfig,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl SchemeConfig {
    /// Hyperparameters of the synthetic Boolean-network experiments.
    pub fn synthetic() -> Self {
        Self {
            direction: Direction::SourcePast,
            partition: Partition::PerChannelTimestep,
            tau: 3,
            architecture: Architecture::synthetic(),
            schedule: BetaSchedule::default(),
            warmup_fraction: 0.1,
            batch_size: 128,
            val_batch_size: 512,
            max_val_batches: 4,
            log_every: 100,
            snapshot_every: 1,
            adam: AdamConfig::default(),
            train_fraction: 0.8,
            seed: 0,
        }
    }

    /// Hyperparameters for continuous recordings (horizon 10, β from 1e-3 to 1).
    pub fn continuous() -> Self {
        Self {
            tau: 10,
            architecture: Architecture::continuous(),
            schedule: BetaSchedule {
                beta_initial: 1e-3,
                beta_final: 1.0,
                total_steps: 20_000,
            },
            ..Self::synthetic()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "synthetic" => Ok(Self::synthetic()),
            "continuous" => Ok(Self::continuous()),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_fraction * self.schedule.total_steps as f64).round() as usize
    }

    pub fn total_run_steps(&self) -> usize {
        self.warmup_steps() + self.schedule.total_steps
    }

    /// β applied at optimizer step `step` (warm-up, then the schedule).
    pub fn beta_for_step(&self, step: usize) -> Result<f64> {
        let w = self.warmup_steps();
        if step < w {
            Ok(self.schedule.beta_initial)
        } else {
            self.schedule.beta_at(step - w)
        }
    }

    /// Collects every violated constraint instead of stopping at the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.tau == 0 {
            v.push("tau must be at least 1".into());
        }
        if let Err(e) = self.architecture.validate() {
            v.push(e.to_string());
        }
        if let Err(e) = self.schedule.validate() {
            v.push(e.to_string());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            v.push(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if self.batch_size < 2 {
            v.push("batch_size must be at least 2".into());
        }
        if self.val_batch_size < 2 {
            v.push("val_batch_size must be at least 2".into());
        }
        if self.max_val_batches == 0 {
            v.push("max_val_batches must be at least 1".into());
        }
        if self.log_every == 0 {
            v.push("log_every must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            v.push(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.adam.learning_rate > 0.0) {
            v.push("learning rate must be positive".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}
