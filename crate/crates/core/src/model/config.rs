use serde::{Deserialize, Serialize};

use crate::data::{ChannelSpec, NUM_STAGES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Gated multimodal unit.
    #[default]
    Gmu,
    /// Plain concatenation of channel features (ablation baseline).
    Concat,
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::Gmu => "gmu",
            FusionMode::Concat => "concat",
        })
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmu" => Ok(FusionMode::Gmu),
            "concat" => Ok(FusionMode::Concat),
            _ => Err(Error::Config(format!("unknown fusion mode {s:?} (expected gmu or concat)"))),
        }
    }
}

/// Activation applied to the Q/K/V projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionActivation {
    #[default]
    Identity,
    Tanh,
}

/// Architecture hyperparameters that do not depend on the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub blocks: usize,
    pub attn_dropout: f64,
    pub gmu_shared_dim: usize,
    pub classifier_hidden: usize,
    pub classifier_dropout: f64,
    pub fusion: FusionMode,
    pub qkv_activation: ProjectionActivation,
    /// Chain full-width single-head attentions instead of running the heads
    /// side by side.
    pub sequential_heads: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            heads: 8,
            ff_hidden: 128,
            blocks: 3,
            attn_dropout: 0.4,
            gmu_shared_dim: 64,
            classifier_hidden: 64,
            classifier_dropout: 0.5,
            fusion: FusionMode::Gmu,
            qkv_activation: ProjectionActivation::Identity,
            sequential_heads: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: Vec<ChannelSpec>,
    pub arch: ArchConfig,
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn new(channels: Vec<ChannelSpec>, arch: ArchConfig) -> Result<Self> {
        let cfg = Self { channels, arch, num_classes: NUM_STAGES };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        let bad = |m: String| Err(Error::Config(m));
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        let mut names: Vec<&str> = self.channels.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("channel names must be unique".into());
        }
        if let Some(c) = self.channels.iter().find(|c| c.t == 0 || c.f == 0) {
            return bad(format!("channel {:?} has an empty shape", c.name));
        }
        if a.embed_dim == 0 || a.heads == 0 || a.embed_dim % a.heads != 0 {
            return bad(format!("embed_dim {} must be a positive multiple of heads {}", a.embed_dim, a.heads));
        }
        if a.embed_dim % 2 != 0 {
            return bad(format!("embed_dim {} must be even for sinusoidal positions", a.embed_dim));
        }
        if a.embed_dim < 2 {
            return bad("embed_dim must be at least 2 for layer norm".into());
        }
        if a.ff_hidden == 0 || a.gmu_shared_dim == 0 || a.classifier_hidden == 0 {
            return bad("hidden sizes must be positive".into());
        }
        for (name, rate) in [("attn_dropout", a.attn_dropout), ("classifier_dropout", a.classifier_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1), got {rate}"));
            }
        }
        if self.num_classes != NUM_STAGES {
            return bad(format!("num_classes must be {NUM_STAGES}"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.arch.embed_dim / self.arch.heads
    }

    /// Width of the fused feature fed to the classifier.
    pub fn fused_dim(&self) -> usize {
        match self.arch.fusion {
            FusionMode::Gmu => self.arch.gmu_shared_dim,
            FusionMode::Concat => self.channels.len() * self.arch.embed_dim,
        }
    }

    /// Trainable scalar count, from the configuration alone.
    pub fn parameter_count(&self) -> usize {
        let a = &self.arch;
        let p = a.embed_dim;
        let c = self.channels.len();
        let per_block = 4 * p * p + 2 * p * a.ff_hidden + 4 * p;
        let encoders: usize = self
            .channels
            .iter()
            .map(|ch| ch.f * p + p + a.blocks * per_block)
            .sum();
        let fusion = match a.fusion {
            FusionMode::Gmu => c * p * a.gmu_shared_dim + c * (c * p) * a.gmu_shared_dim,
            FusionMode::Concat => 0,
        };
        let h = a.classifier_hidden;
        let classifier = self.fused_dim() * h + h + h * self.num_classes + self.num_classes;
        encoders + fusion + classifier
    }
}
