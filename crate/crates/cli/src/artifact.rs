//! Dataset directory: `manifest.json`, one `channel_<name>.bin` tensor of
//! shape `[N, T, F]` per channel and `labels.bin` of shape `[N, 2]` holding
//! `(epoch_index, stage_index)` rows.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sleepgmu::data::NUM_STAGES;
use sleepgmu::formats::{decode_tensor, encode_tensor};
use sleepgmu::numerics::Tensor;
use sleepgmu::synth::{ChannelKind, SynthSpec};
use sleepgmu::{ChannelSpec, Dataset, EpochRecord, Error, Result, Stage};

use crate::config::PreprocessConfig;
use crate::io::{create_dir, read_file, write_file};

pub const MANIFEST: &str = "manifest.json";
pub const LABELS: &str = "labels.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestChannel {
    pub name: String,
    pub kind: ChannelKind,
    pub t: usize,
    pub f: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase", deny_unknown_fields)]
pub enum Provenance {
    Synth { seed: u64, spec: SynthSpec },
    Preprocess { seed: u64, config: PreprocessConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub channels: Vec<ManifestChannel>,
    pub epochs: usize,
    pub stage_histogram: BTreeMap<Stage, usize>,
    /// Input recordings, relative to the input directory.
    pub sources: Vec<String>,
    pub provenance: Provenance,
    /// Labelled epochs dropped for missing or unusable signal.
    pub excluded_epochs: usize,
    /// Wearable slots filled by interpolation.
    pub interpolated_slots: usize,
}

impl DatasetManifest {
    pub fn describe(
        name: &str,
        dataset: &Dataset,
        kinds: &[ChannelKind],
        sources: Vec<String>,
        provenance: Provenance,
    ) -> Self {
        let hist = dataset.stage_histogram();
        Self {
            name: name.to_string(),
            channels: dataset
                .channels
                .iter()
                .zip(kinds)
                .map(|(c, &kind)| ManifestChannel { name: c.name.clone(), kind, t: c.t, f: c.f })
                .collect(),
            epochs: dataset.len(),
            stage_histogram: Stage::ALL.iter().map(|&s| (s, hist[s.index()])).collect(),
            sources,
            provenance,
            excluded_epochs: 0,
            interpolated_slots: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.stage_histogram.values().sum();
        if total != self.epochs {
            return Err(Error::Validation(format!(
                "manifest histogram sums to {total} but lists {} epochs",
                self.epochs
            )));
        }
        for c in &self.channels {
            check_channel_name(&c.name)?;
        }
        Ok(())
    }

    pub fn channel_specs(&self) -> Vec<ChannelSpec> {
        self.channels
            .iter()
            .map(|c| ChannelSpec { name: c.name.clone(), t: c.t, f: c.f })
            .collect()
    }
}

/// Channel names become file names, so keep them to a safe alphabet.
pub fn check_channel_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.len() <= 64
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("channel name {name:?} must match [A-Za-z0-9_.-]{{1,64}}")))
    }
}

fn channel_file(name: &str) -> String {
    format!("channel_{name}.bin")
}

pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, dataset: &Dataset) -> Result<()> {
    manifest.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("refusing to write an empty dataset".into()));
    }
    create_dir(dir)?;
    for c in &dataset.channels {
        let mut data = Vec::with_capacity(dataset.len() * c.t * c.f);
        for r in &dataset.records {
            data.extend_from_slice(r.channel(&c.name)?.data());
        }
        let t = Tensor::new(vec![dataset.len(), c.t, c.f], data)?;
        write_file(&dir.join(channel_file(&c.name)), encode_tensor(&t))?;
    }
    let labels: Vec<f64> = dataset
        .records
        .iter()
        .flat_map(|r| [r.epoch_index as f64, r.label.index() as f64])
        .collect();
    write_file(&dir.join(LABELS), encode_tensor(&Tensor::new(vec![dataset.len(), 2], labels)?))?;
    write_file(
        &dir.join(MANIFEST),
        serde_json::to_string_pretty(manifest).expect("manifest serialises") + "\n",
    )
}

fn label_rows(t: &Tensor, n: usize) -> Result<Vec<(usize, Stage)>> {
    if t.shape() != [n, 2] {
        return Err(Error::Validation(format!("labels.bin has shape {:?}, expected [{n}, 2]", t.shape())));
    }
    t.data()
        .chunks_exact(2)
        .map(|row| {
            let as_index = |v: f64| (v >= 0.0 && v.fract() == 0.0 && v < 1e15).then_some(v as usize);
            let epoch = as_index(row[0]);
            let stage = as_index(row[1]).filter(|&s| s < NUM_STAGES).and_then(Stage::from_index);
            epoch
                .zip(stage)
                .ok_or_else(|| Error::Validation(format!("bad label row {row:?}")))
        })
        .collect()
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Dataset)> {
    let manifest: DatasetManifest = serde_json::from_slice(&read_file(&dir.join(MANIFEST))?)
        .map_err(|e| Error::Validation(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    manifest.validate()?;
    let n = manifest.epochs;
    let labels = label_rows(&decode_tensor(&read_file(&dir.join(LABELS))?)?, n)?;
    let mut records: Vec<EpochRecord> = labels
        .iter()
        .map(|&(epoch_index, label)| EpochRecord { channels: BTreeMap::new(), label, epoch_index })
        .collect();
    for c in &manifest.channels {
        let t = decode_tensor(&read_file(&dir.join(channel_file(&c.name)))?)?;
        if t.shape() != [n, c.t, c.f] {
            return Err(Error::Validation(format!(
                "{} has shape {:?}, manifest says [{n}, {}, {}]",
                channel_file(&c.name),
                t.shape(),
                c.t,
                c.f
            )));
        }
        for (r, chunk) in records.iter_mut().zip(t.data().chunks_exact(c.t * c.f)) {
            r.channels.insert(c.name.clone(), Tensor::new(vec![c.t, c.f], chunk.to_vec())?);
        }
    }
    let dataset = Dataset::new(manifest.channel_specs(), records)?;
    let hist = dataset.stage_histogram();
    if Stage::ALL.iter().any(|s| manifest.stage_histogram.get(s).copied().unwrap_or(0) != hist[s.index()]) {
        return Err(Error::Validation("manifest histogram disagrees with labels.bin".into()));
    }
    Ok((manifest, dataset))
}
