//! Alignment of wrist-worn sensor streams onto 30 s label windows.
//!
//! Respiration is slotted at 0.02 s (1500 slots per window) and heart rate
//! at 5 s (6 slots). Samples snap to the nearest nominal slot. Empty slots
//! are filled by linear interpolation between the nearest filled slots, or by
//! the nearest value at the window edges. Each respiration slot is paired
//! with the heart-rate slot of the 5 s interval that contains it, and step
//! counts land in the respiration slot of their timestamp (0 elsewhere).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{EpochRecord, Stage};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const EPOCH_SECONDS: f64 = 30.0;
pub const RESPIRATION_PERIOD: f64 = 0.02;
pub const HEART_RATE_PERIOD: f64 = 5.0;
pub const RESPIRATION_SLOTS: usize = 1500;
pub const HEART_RATE_SLOTS: usize = 6;
const SLOTS_PER_HEART_RATE: usize = RESPIRATION_SLOTS / HEART_RATE_SLOTS;

pub const RESPIRATION: &str = "respiration";
pub const HEART_RATE: &str = "heart_rate";
pub const STEPS: &str = "steps";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    /// Seconds since recording origin.
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelWindow {
    pub epoch_index: usize,
    /// Window start, seconds since recording origin.
    pub start: f64,
    pub stage: Stage,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WearableStreams {
    pub respiration: Vec<TimedSample>,
    pub heart_rate: Vec<TimedSample>,
    /// Step events; `value` is the count.
    pub steps: Vec<TimedSample>,
    pub labels: Vec<LabelWindow>,
}

/// How the 1500 aligned slots are folded into a `[T, F]` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WearableLayout {
    /// Time steps per epoch; must divide 1500.
    pub segments: usize,
}

impl Default for WearableLayout {
    fn default() -> Self {
        Self { segments: 30 }
    }
}

impl WearableLayout {
    pub fn shape(&self) -> Result<[usize; 2]> {
        if self.segments == 0 || RESPIRATION_SLOTS % self.segments != 0 {
            return Err(Error::Config(format!(
                "wearable segments ({}) must divide {RESPIRATION_SLOTS}",
                self.segments
            )));
        }
        Ok([self.segments, RESPIRATION_SLOTS / self.segments])
    }
}

/// Flat per-window channels before folding into matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWindow {
    pub respiration: Vec<f64>,
    /// The six 5 s heart-rate values.
    pub heart_rate_slots: Vec<f64>,
    /// Heart rate paired with every respiration slot.
    pub heart_rate: Vec<f64>,
    pub steps: Vec<f64>,
    /// Slots filled by interpolation, over both streams.
    pub interpolated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWearable {
    pub epochs: Vec<EpochRecord>,
    /// Epoch indices of windows with no valid samples in some stream.
    pub excluded: Vec<usize>,
    pub interpolated_slots: usize,
}

/// Fills `None` slots by linear interpolation between filled neighbours and
/// by nearest-value extension at the ends. Returns `None` when nothing is
/// filled, otherwise the dense values and the number of slots filled in.
pub fn fill_gaps(slots: &[Option<f64>]) -> Option<(Vec<f64>, usize)> {
    let known: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; slots.len()];
    let mut filled = 0;
    for (i, o) in out.iter_mut().enumerate() {
        *o = match slots[i] {
            Some(v) => v,
            None => {
                filled += 1;
                if i < first {
                    slots[first].unwrap()
                } else if i > last {
                    slots[last].unwrap()
                } else {
                    let hi = known.partition_point(|&k| k < i);
                    let (l, r) = (known[hi - 1], known[hi]);
                    let (vl, vr) = (slots[l].unwrap(), slots[r].unwrap());
                    vl + (vr - vl) * (i - l) as f64 / (r - l) as f64
                }
            }
        };
    }
    Some((out, filled))
}

/// Averages the samples snapping to each of `n` slots of width `period`
/// starting at `start`.
fn slot_samples(samples: &[TimedSample], start: f64, period: f64, n: usize) -> Vec<Option<f64>> {
    let mut sums = vec![(0.0, 0usize); n];
    let lo = samples.partition_point(|s| s.t < start - period);
    for s in &samples[lo..] {
        if s.t >= start + n as f64 * period + period {
            break;
        }
        if !s.value.is_finite() {
            continue;
        }
        let k = ((s.t - start) / period).round();
        if k >= 0.0 && (k as usize) < n {
            let e = &mut sums[k as usize];
            e.0 += s.value;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Aligns one 30 s window; `None` if respiration or heart rate has no valid
/// sample in it.
pub fn align_window(streams: &WearableStreams, start: f64) -> Option<AlignedWindow> {
    let resp = slot_samples(&streams.respiration, start, RESPIRATION_PERIOD, RESPIRATION_SLOTS);
    let hr = slot_samples(&streams.heart_rate, start, HEART_RATE_PERIOD, HEART_RATE_SLOTS);
    let (respiration, resp_filled) = fill_gaps(&resp)?;
    let (heart_rate_slots, hr_filled) = fill_gaps(&hr)?;
    let heart_rate = (0..RESPIRATION_SLOTS)
        .map(|k| heart_rate_slots[k / SLOTS_PER_HEART_RATE])
        .collect();
    let mut steps = vec![0.0; RESPIRATION_SLOTS];
    let lo = streams.steps.partition_point(|s| s.t < start);
    for s in &streams.steps[lo..] {
        let k = ((s.t - start) / RESPIRATION_PERIOD).floor();
        if k as usize >= RESPIRATION_SLOTS {
            break;
        }
        if s.value.is_finite() {
            steps[k as usize] += s.value;
        }
    }
    Some(AlignedWindow {
        respiration,
        heart_rate_slots,
        heart_rate,
        steps,
        interpolated: resp_filled + hr_filled,
    })
}

fn sorted(mut v: Vec<TimedSample>) -> Vec<TimedSample> {
    v.sort_by(|a, b| a.t.total_cmp(&b.t));
    v
}

/// Aligns every label window, returning one epoch per usable window.
pub fn align_wearable(streams: &WearableStreams, layout: WearableLayout) -> Result<AlignedWearable> {
    let shape = layout.shape()?;
    for pair in streams.labels.windows(2) {
        if !(pair[1].start >= pair[0].start + EPOCH_SECONDS - 1e-9) {
            return Err(Error::Validation(format!(
                "label windows must be consecutive and non-overlapping (epoch {} starts at {}, epoch {} at {})",
                pair[0].epoch_index, pair[0].start, pair[1].epoch_index, pair[1].start
            )));
        }
    }
    let streams = WearableStreams {
        respiration: sorted(streams.respiration.clone()),
        heart_rate: sorted(streams.heart_rate.clone()),
        steps: sorted(streams.steps.clone()),
        labels: streams.labels.clone(),
    };
    let mut out = AlignedWearable {
        epochs: Vec::new(),
        excluded: Vec::new(),
        interpolated_slots: 0,
    };
    for label in &streams.labels {
        let Some(w) = align_window(&streams, label.start) else {
            out.excluded.push(label.epoch_index);
            continue;
        };
        out.interpolated_slots += w.interpolated;
        let mut channels = BTreeMap::new();
        for (name, values) in [(RESPIRATION, w.respiration), (HEART_RATE, w.heart_rate), (STEPS, w.steps)] {
            channels.insert(name.to_string(), Tensor::new(shape.to_vec(), values)?);
        }
        out.epochs.push(EpochRecord {
            channels,
            label: label.stage,
            epoch_index: label.epoch_index,
        });
    }
    Ok(out)
}
