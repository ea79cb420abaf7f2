//! Run configuration: one JSON document, every field defaulted, unknown keys
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sleepgmu::model::ArchConfig;
use sleepgmu::preprocess::{StftParams, WearableLayout, DEFAULT_WAKE_MARGIN};
use sleepgmu::synth::SynthSpec;
use sleepgmu::trainer::{AblationVariant, SplitSpec, TrainConfig};
use sleepgmu::{Error, Result};

use crate::io::read_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// EEG/EOG-like channels: detrend, STFT, normalise.
    #[default]
    Psg,
    /// Wrist-worn respiration, heart rate and steps: align and interpolate.
    Wearable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub name: String,
    pub mode: InputMode,
    /// PSG sample rate shared by all channels.
    pub sample_rate_hz: f64,
    /// PSG channels to keep, in order; empty keeps every channel found.
    pub channels: Vec<String>,
    /// Polynomial order removed before the STFT; `null` disables detrending.
    pub detrend_order: Option<usize>,
    /// Channels that get detrended; `null` means all of them.
    pub detrend_channels: Option<Vec<String>>,
    pub stft: StftParams,
    /// Wake epochs kept around the sleep period; `null` keeps all.
    pub wake_margin: Option<usize>,
    pub wearable: WearableLayout,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            name: "dataset".into(),
            mode: InputMode::Psg,
            sample_rate_hz: 100.0,
            channels: Vec::new(),
            detrend_order: Some(1),
            detrend_channels: None,
            stft: StftParams::default(),
            wake_margin: Some(DEFAULT_WAKE_MARGIN),
            wearable: WearableLayout::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn detrends(&self, channel: &str) -> Option<usize> {
        match &self.detrend_channels {
            Some(list) if !list.iter().any(|c| c == channel) => None,
            _ => self.detrend_order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; `--seed` overrides it.
    pub seed: u64,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub preprocess: PreprocessConfig,
    pub synth: SynthSpec,
    pub ablation: Vec<AblationVariant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            preprocess: PreprocessConfig::default(),
            synth: SynthSpec::default(),
            ablation: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    /// Defaults when `path` is `None`; `seed` overrides the file's seed.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_json(&String::from_utf8_lossy(&read_file(p)?))?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.validate()?;
        cfg.split.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }
}
