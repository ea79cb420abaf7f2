//! Raw recordings on disk to an in-memory dataset.
//!
//! An input directory holds `signals.csv` and `labels.csv`, or one
//! subdirectory per recording holding both. Epoch `k` of a recording covers
//! `[30k, 30k + 30)` seconds. Epoch indices are renumbered so they stay
//! increasing across recordings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sleepgmu::formats::{parse_labels, parse_signals, LabelRow, SignalTable};
use sleepgmu::preprocess::wearable::{EPOCH_SECONDS, HEART_RATE, RESPIRATION, STEPS};
use sleepgmu::preprocess::{
    align_wearable, relabel_epochs_with, spectrogram_epoch, LabelWindow, TimedSample, WearableStreams,
};
use sleepgmu::synth::ChannelKind;
use sleepgmu::{ChannelSpec, Dataset, EpochRecord, Error, Result};

use crate::artifact::check_channel_name;
use crate::config::{InputMode, PreprocessConfig};
use crate::io::read_file;

pub const SIGNALS: &str = "signals.csv";
pub const LABELS: &str = "labels.csv";

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dataset: Dataset,
    pub kinds: Vec<ChannelKind>,
    pub sources: Vec<String>,
    pub excluded_epochs: usize,
    pub interpolated_slots: usize,
}

/// Recording directories under `input`, sorted by name.
pub fn discover(input: &Path) -> Result<Vec<(String, PathBuf)>> {
    if input.join(SIGNALS).is_file() {
        return Ok(vec![(".".into(), input.to_path_buf())]);
    }
    let entries = fs::read_dir(input)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", input.display())))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.join(SIGNALS).is_file() && path.join(LABELS).is_file() {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            found.push((name, path));
        }
    }
    if found.is_empty() {
        return Err(Error::Input(format!("no {SIGNALS}/{LABELS} pair under {}", input.display())));
    }
    found.sort();
    Ok(found)
}

fn load(dir: &Path) -> Result<(SignalTable, Vec<LabelRow>)> {
    let sig = dir.join(SIGNALS);
    let lab = dir.join(LABELS);
    let signals = parse_signals(read_file(&sig)?.as_slice(), &sig.display().to_string())?;
    let labels = parse_labels(read_file(&lab)?.as_slice(), &lab.display().to_string())?;
    Ok((signals, labels))
}

/// Epoch index and cleaned stage of every kept label.
fn kept_labels(labels: &[LabelRow], cfg: &PreprocessConfig) -> Result<Vec<(usize, sleepgmu::Stage)>> {
    let raw: Vec<&str> = labels.iter().map(|r| r.stage.as_str()).collect();
    let stages = relabel_epochs_with(&raw, cfg.wake_margin)?;
    Ok(labels
        .iter()
        .zip(stages)
        .filter_map(|(r, s)| s.map(|s| (r.epoch_index, s)))
        .collect())
}

fn dense_samples(samples: &[(f64, Option<f64>)], fs: f64, channel: &str) -> Result<Vec<Option<f64>>> {
    let mut out: Vec<Option<f64>> = Vec::new();
    for &(t, v) in samples {
        if t < 0.0 {
            return Err(Error::Validation(format!("channel {channel:?} has a negative timestamp {t}")));
        }
        let idx = (t * fs).round();
        if idx > 1e9 {
            return Err(Error::Validation(format!("channel {channel:?} timestamp {t} is out of range")));
        }
        let idx = idx as usize;
        if idx >= out.len() {
            out.resize(idx + 1, None);
        }
        out[idx] = v;
    }
    Ok(out)
}

struct Batch {
    records: Vec<EpochRecord>,
    excluded: usize,
    interpolated: usize,
    /// One past the largest labelled epoch index.
    span: usize,
}

fn psg_recording(
    signals: &SignalTable,
    labels: &[LabelRow],
    channels: &[String],
    cfg: &PreprocessConfig,
) -> Result<Batch> {
    let fs = cfg.sample_rate_hz;
    let per_epoch = (EPOCH_SECONDS * fs).round() as usize;
    let mut dense = BTreeMap::new();
    for name in channels {
        let samples = signals
            .channels
            .get(name)
            .ok_or_else(|| Error::Validation(format!("recording has no channel {name:?}")))?;
        dense.insert(name.clone(), dense_samples(samples, fs, name)?);
    }
    let mut batch = Batch {
        records: Vec::new(),
        excluded: 0,
        interpolated: 0,
        span: labels.last().map_or(0, |r| r.epoch_index + 1),
    };
    'epochs: for (k, stage) in kept_labels(labels, cfg)? {
        let range = k * per_epoch..(k + 1) * per_epoch;
        let mut chans = BTreeMap::new();
        for name in channels {
            let Some(window) = dense[name].get(range.clone()) else {
                batch.excluded += 1;
                continue 'epochs;
            };
            let Some(samples) = window.iter().copied().collect::<Option<Vec<f64>>>() else {
                batch.excluded += 1;
                continue 'epochs;
            };
            chans.insert(name.clone(), spectrogram_epoch(&samples, fs, cfg.detrends(name), &cfg.stft)?);
        }
        batch.records.push(EpochRecord { channels: chans, label: stage, epoch_index: k });
    }
    Ok(batch)
}

fn timed(samples: Option<&Vec<(f64, Option<f64>)>>) -> Vec<TimedSample> {
    samples
        .into_iter()
        .flatten()
        .filter_map(|&(t, v)| v.map(|value| TimedSample { t, value }))
        .collect()
}

fn wearable_recording(signals: &SignalTable, labels: &[LabelRow], cfg: &PreprocessConfig) -> Result<Batch> {
    for required in [RESPIRATION, HEART_RATE] {
        if !signals.channels.contains_key(required) {
            return Err(Error::Validation(format!("wearable recording has no {required:?} channel")));
        }
    }
    let streams = WearableStreams {
        respiration: timed(signals.channels.get(RESPIRATION)),
        heart_rate: timed(signals.channels.get(HEART_RATE)),
        steps: timed(signals.channels.get(STEPS)),
        labels: kept_labels(labels, cfg)?
            .into_iter()
            .map(|(epoch_index, stage)| LabelWindow {
                epoch_index,
                start: epoch_index as f64 * EPOCH_SECONDS,
                stage,
            })
            .collect(),
    };
    let aligned = align_wearable(&streams, cfg.wearable)?;
    Ok(Batch {
        records: aligned.epochs,
        excluded: aligned.excluded.len(),
        interpolated: aligned.interpolated_slots,
        span: labels.last().map_or(0, |r| r.epoch_index + 1),
    })
}

pub fn preprocess_dir(input: &Path, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    let recordings = discover(input)?;
    let mut out = Preprocessed {
        dataset: Dataset::default(),
        kinds: Vec::new(),
        sources: Vec::new(),
        excluded_epochs: 0,
        interpolated_slots: 0,
    };
    let mut channels: Vec<String> = Vec::new();
    let mut offset = 0usize;
    let mut records = Vec::new();
    for (name, dir) in &recordings {
        log::info!("reading recording {name}");
        let (signals, labels) = load(dir)?;
        let batch = match cfg.mode {
            InputMode::Psg => {
                if channels.is_empty() {
                    channels = if cfg.channels.is_empty() {
                        signals.channels.keys().cloned().collect()
                    } else {
                        cfg.channels.clone()
                    };
                    for c in &channels {
                        check_channel_name(c)?;
                    }
                }
                psg_recording(&signals, &labels, &channels, cfg)?
            }
            InputMode::Wearable => wearable_recording(&signals, &labels, cfg)?,
        };
        out.excluded_epochs += batch.excluded;
        out.interpolated_slots += batch.interpolated;
        for mut r in batch.records {
            r.epoch_index += offset;
            records.push(r);
        }
        offset += batch.span;
        out.sources.push(name.clone());
    }
    let Some(first) = records.first() else {
        return Err(Error::Input("preprocessing produced no usable epochs".into()));
    };
    let specs: Vec<ChannelSpec> = first
        .channels
        .iter()
        .map(|(name, t)| ChannelSpec { name: name.clone(), t: t.shape()[0], f: t.shape()[1] })
        .collect();
    let specs = match cfg.mode {
        InputMode::Psg => channels
            .iter()
            .map(|c| specs.iter().find(|s| &s.name == c).cloned().expect("channel present"))
            .collect(),
        InputMode::Wearable => specs,
    };
    let kind = match cfg.mode {
        InputMode::Psg => ChannelKind::Spectrogram,
        InputMode::Wearable => ChannelKind::Timeseries,
    };
    out.kinds = vec![kind; specs.len()];
    out.dataset = Dataset::new(specs, records)?;
    Ok(out)
}
