//! Planted-signature dataset generator.
//!
//! Spectrogram channels light up one frequency band per stage: the `F`
//! columns are cut into five equal bands and stage `s` adds
//! `separation · informativeness` to band `s`. Timeseries channels shift the
//! mean to `separation · informativeness · (s − 2) / 2` and scale the noise
//! by `1 + informativeness · s / 8`. Gaussian noise of standard deviation
//! `noise` is added everywhere. A channel with informativeness 0 is
//! independent of the label.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ChannelSpec, Dataset, EpochRecord, Stage, NUM_STAGES};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Spectrogram,
    Timeseries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthChannel {
    pub name: String,
    pub kind: ChannelKind,
    pub t: usize,
    pub f: usize,
    #[serde(default = "one")]
    pub informativeness: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub epochs: usize,
    /// Requested share of each stage (W, N1, N2, N3, REM); normalised.
    pub stage_proportions: [f64; NUM_STAGES],
    pub channels: Vec<SynthChannel>,
    pub separation: f64,
    pub noise: f64,
    /// Refuse specs whose strongest signal is below the noise level.
    pub reject_below_noise_floor: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            epochs: 1000,
            stage_proportions: [0.2; NUM_STAGES],
            channels: vec![
                SynthChannel {
                    name: "eeg".into(),
                    kind: ChannelKind::Spectrogram,
                    t: 8,
                    f: 15,
                    informativeness: 1.0,
                },
                SynthChannel {
                    name: "eog".into(),
                    kind: ChannelKind::Timeseries,
                    t: 8,
                    f: 10,
                    informativeness: 1.0,
                },
            ],
            separation: 1.0,
            noise: 1.0,
            reject_below_noise_floor: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 {
            return Err(Error::Config("synthetic data needs at least 2 channels".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("synthetic data needs at least one epoch".into()));
        }
        let total: f64 = self.stage_proportions.iter().sum();
        if self.stage_proportions.iter().any(|p| !(*p >= 0.0)) || !(total > 0.0) {
            return Err(Error::Config("stage proportions must be non-negative and not all zero".into()));
        }
        if !(self.noise >= 0.0) || !self.separation.is_finite() {
            return Err(Error::Config("noise must be >= 0 and separation finite".into()));
        }
        for c in &self.channels {
            if c.t == 0 || c.f == 0 {
                return Err(Error::Config(format!("channel {:?} has an empty shape", c.name)));
            }
            if c.kind == ChannelKind::Spectrogram && c.f < NUM_STAGES {
                return Err(Error::Config(format!(
                    "spectrogram channel {:?} needs at least {NUM_STAGES} bins",
                    c.name
                )));
            }
            if !(0.0..=1.0).contains(&c.informativeness) {
                return Err(Error::Config(format!("informativeness of {:?} must be in [0, 1]", c.name)));
            }
        }
        if self.reject_below_noise_floor {
            let strongest = self.channels.iter().map(|c| c.informativeness).fold(0.0, f64::max);
            if self.separation.abs() * strongest < self.noise {
                return Err(Error::Config(format!(
                    "separation {} is below the noise floor {}",
                    self.separation, self.noise
                )));
            }
        }
        Ok(())
    }

    /// Per-stage counts by largest remainder; they sum to `epochs` exactly.
    pub fn stage_counts(&self) -> [usize; NUM_STAGES] {
        let total: f64 = self.stage_proportions.iter().sum();
        let exact: Vec<f64> = self
            .stage_proportions
            .iter()
            .map(|p| p / total * self.epochs as f64)
            .collect();
        let mut counts = [0usize; NUM_STAGES];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..NUM_STAGES).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        let short = self.epochs - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        counts
    }
}

fn band(f: usize, stage: usize) -> std::ops::Range<usize> {
    (stage * f / NUM_STAGES)..((stage + 1) * f / NUM_STAGES)
}

fn channel_matrix<R: Rng + ?Sized>(c: &SynthChannel, spec: &SynthSpec, stage: Stage, rng: &mut R) -> Tensor {
    let s = stage.index();
    let signal = spec.separation * c.informativeness;
    let mut data = Vec::with_capacity(c.t * c.f);
    match c.kind {
        ChannelKind::Spectrogram => {
            let lit = band(c.f, s);
            for _ in 0..c.t {
                for col in 0..c.f {
                    let z: f64 = rng.sample(StandardNormal);
                    let level = if lit.contains(&col) { signal } else { 0.0 };
                    data.push(level + spec.noise * z);
                }
            }
        }
        ChannelKind::Timeseries => {
            let mean = signal * (s as f64 - 2.0) / 2.0;
            let sd = spec.noise * (1.0 + c.informativeness * s as f64 / 8.0);
            for _ in 0..c.t * c.f {
                let z: f64 = rng.sample(StandardNormal);
                data.push(mean + sd * z);
            }
        }
    }
    Tensor::new(vec![c.t, c.f], data).expect("shape checked")
}

/// Generates the dataset; labels are shuffled, epoch indices are `0..n`.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream_rng(seed, Stream::Synth);
    let mut labels: Vec<Stage> = spec
        .stage_counts()
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(Stage::ALL[k], n))
        .collect();
    labels.shuffle(&mut rng);
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(epoch_index, label)| EpochRecord {
            channels: spec
                .channels
                .iter()
                .map(|c| (c.name.clone(), channel_matrix(c, spec, label, &mut rng)))
                .collect::<BTreeMap<_, _>>(),
            label,
            epoch_index,
        })
        .collect();
    let channels = spec
        .channels
        .iter()
        .map(|c| ChannelSpec { name: c.name.clone(), t: c.t, f: c.f })
        .collect();
    Dataset::new(channels, records)
}
