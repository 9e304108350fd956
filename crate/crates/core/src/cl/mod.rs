//! The episode loop: one fresh trunk per incoming domain, replay of the
//! domains the ensemble currently finds hardest, and ensemble prediction by
//! averaging the heads trained for a domain.

mod buffer;
mod ensemble;
mod run;
mod select;

pub use buffer::{buffer_insert, largest_remainder, ReplayBuffer, Stored};
pub use ensemble::{to_batch, EnsembleModel, EpisodeModel};
pub use run::{head_seed, run_sequence, train_episode, trunk_seed, DomainPredictions, EpisodeRecord, EpisodeStats, RunOutput};
pub use select::{compute_weights, select_domains, weights_from_nll, DomainWeights};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{NetConfig, OptimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Replay and shared heads across selected domains.
    Bolt,
    /// Each episode sees only its own domain.
    Isolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// The `b − 1` heaviest weights; ties go to the lower domain id.
    Highest,
    /// Weighted draws without replacement.
    Multinomial,
    /// Half heaviest (rounded up), the rest lightest.
    Split50,
    /// About 10% heaviest, the rest lightest.
    Split10High,
    /// About 10% lightest, the rest heaviest.
    Split10Low,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maintenance {
    /// Reservoir sampling per (domain, class), capacity split by class
    /// frequency.
    Reservoir,
    Fifo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rehearsal {
    /// Uniform draws, interleaved across classes.
    UniformBalanced,
    /// Samples the current ensemble is least sure about.
    MinConfidence,
    /// Samples with the highest ensemble loss.
    MaxLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelStrategy {
    TrueLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferConfig {
    pub capacity_per_domain: usize,
    pub maintenance: Maintenance,
    pub rehearsal: Rehearsal,
    pub labels: LabelStrategy,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            capacity_per_domain: 100,
            maintenance: Maintenance::Reservoir,
            rehearsal: Rehearsal::UniformBalanced,
            labels: LabelStrategy::TrueLabel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: RunMode,
    /// Most domains trained together in one episode, the new one included.
    pub b: usize,
    pub selection: Selection,
    pub epochs_per_episode: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
    pub filters: usize,
    pub conv: usize,
    pub bn: usize,
    pub buffer: BufferConfig,
    /// Trailing share of each train split held out for the domain weights.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Bolt,
            b: 5,
            selection: Selection::Highest,
            epochs_per_episode: 1,
            batch_size: 32,
            optim: OptimConfig::default(),
            filters: 80,
            conv: 2,
            bn: 1,
            buffer: BufferConfig::default(),
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, num_domains: usize) -> Result<()> {
        if self.b == 0 || self.b > num_domains.max(1) {
            return Err(Error::config(
                "run.b",
                format!("must be in 1..={num_domains}, got {}", self.b),
            ));
        }
        if self.epochs_per_episode == 0 {
            return Err(Error::config("run.epochs_per_episode", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("run.batch_size", "must be positive"));
        }
        if self.buffer.capacity_per_domain == 0 {
            return Err(Error::config("run.buffer.capacity_per_domain", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction.is_nan() {
            return Err(Error::config("run.validation_fraction", "must lie in [0, 1)"));
        }
        self.optim.validate()
    }

    pub fn net_config(&self, in_channels: usize, image_size: usize) -> NetConfig {
        NetConfig {
            in_channels,
            image_size,
            filters: self.filters,
            n_conv: self.conv,
            n_bn: self.bn,
            num_classes: crate::sim::ClassLabel::COUNT,
        }
    }
}
