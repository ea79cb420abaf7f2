//! Sleep stages, epoch records and in-memory datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const NUM_STAGES: usize = 5;

/// AASM sleep stage after N3/N4 merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    W,
    N1,
    N2,
    N3,
    #[serde(rename = "REM")]
    Rem,
}

impl Stage {
    pub const ALL: [Stage; NUM_STAGES] = [Stage::W, Stage::N1, Stage::N2, Stage::N3, Stage::Rem];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Stage> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::W => "W",
            Stage::N1 => "N1",
            Stage::N2 => "N2",
            Stage::N3 => "N3",
            Stage::Rem => "REM",
        }
    }

    /// Plotting depth for hypnograms: W=4, REM=3, N1=2, N2=1, N3=0.
    pub fn hypnogram_level(self) -> u8 {
        match self {
            Stage::W => 4,
            Stage::Rem => 3,
            Stage::N1 => 2,
            Stage::N2 => 1,
            Stage::N3 => 0,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "W" => Ok(Stage::W),
            "N1" => Ok(Stage::N1),
            "N2" => Ok(Stage::N2),
            "N3" => Ok(Stage::N3),
            "REM" | "R" => Ok(Stage::Rem),
            other => Err(Error::Validation(format!("unknown stage {other:?}"))),
        }
    }
}

/// One 30 s multimodal sample: a `[T, F]` matrix per channel plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub channels: BTreeMap<String, Tensor>,
    pub label: Stage,
    pub epoch_index: usize,
}

impl EpochRecord {
    pub fn channel(&self, name: &str) -> Result<&Tensor> {
        self.channels
            .get(name)
            .ok_or_else(|| Error::Validation(format!("epoch {} has no channel {name:?}", self.epoch_index)))
    }
}

/// Declared shape of one input channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
    /// Time steps per epoch.
    pub t: usize,
    /// Features per time step.
    pub f: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub channels: Vec<ChannelSpec>,
    pub records: Vec<EpochRecord>,
}

impl Dataset {
    /// Checks every record against the declared channel shapes.
    pub fn new(channels: Vec<ChannelSpec>, records: Vec<EpochRecord>) -> Result<Self> {
        for r in &records {
            for c in &channels {
                let t = r.channel(&c.name)?;
                if t.shape() != [c.t, c.f] {
                    return Err(Error::shape("dataset", t.shape(), &[c.t, c.f]));
                }
            }
        }
        Ok(Self { channels, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Stage> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn channel_spec(&self, name: &str) -> Result<&ChannelSpec> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("unknown channel {name:?}")))
    }

    pub fn stage_histogram(&self) -> [usize; NUM_STAGES] {
        let mut h = [0; NUM_STAGES];
        for r in &self.records {
            h[r.label.index()] += 1;
        }
        h
    }

    /// Restricts the dataset to `names`, in that order.
    pub fn select_channels(&self, names: &[String]) -> Result<Dataset> {
        let channels = names
            .iter()
            .map(|n| self.channel_spec(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        let records = self
            .records
            .iter()
            .map(|r| EpochRecord {
                channels: names
                    .iter()
                    .map(|n| (n.clone(), r.channels[n].clone()))
                    .collect(),
                label: r.label,
                epoch_index: r.epoch_index,
            })
            .collect();
        Ok(Dataset { channels, records })
    }
}

/// Stacks one channel of the selected records into `[B, T, F]`.
pub fn stack_channel(records: &[&EpochRecord], name: &str) -> Result<Tensor> {
    let first = records
        .first()
        .ok_or_else(|| Error::Input("cannot stack an empty batch".into()))?
        .channel(name)?;
    let shape = first.shape().to_vec();
    let mut data = Vec::with_capacity(records.len() * first.len());
    for r in records {
        let t = r.channel(name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::shape("stack_channel", &shape, t.shape()));
        }
        data.extend_from_slice(t.data());
    }
    let mut full = vec![records.len()];
    full.extend(shape);
    Tensor::new(full, data)
}

/// One-hot `[B, K]` label matrix.
pub fn one_hot(labels: &[Stage]) -> Tensor {
    let mut data = vec![0.0; labels.len() * NUM_STAGES];
    for (i, s) in labels.iter().enumerate() {
        data[i * NUM_STAGES + s.index()] = 1.0;
    }
    Tensor::new(vec![labels.len(), NUM_STAGES], data).expect("non-empty label batch")
}
