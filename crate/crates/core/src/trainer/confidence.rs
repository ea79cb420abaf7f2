use serde::{Deserialize, Serialize};

use crate::data::{EpochRecord, Stage};
use crate::error::{Error, Result};

/// Thresholds used for the confidence distribution summaries.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.4, 0.5, 0.6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub epoch_index: usize,
    pub truth: Stage,
    pub predicted: Stage,
    /// Largest class probability.
    pub max_prob: f64,
    pub probs: Vec<f64>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfidenceSeries {
    pub points: Vec<ConfidencePoint>,
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

impl ConfidenceSeries {
    pub fn from_probabilities(records: &[&EpochRecord], probs: &[Vec<f64>]) -> Result<Self> {
        if records.len() != probs.len() {
            return Err(Error::Input(format!(
                "{} records but {} probability rows",
                records.len(),
                probs.len()
            )));
        }
        let points = records
            .iter()
            .zip(probs)
            .map(|(r, p)| {
                let k = argmax(p);
                let predicted = Stage::from_index(k)
                    .ok_or_else(|| Error::Input(format!("probability row of width {}", p.len())))?;
                Ok(ConfidencePoint {
                    epoch_index: r.epoch_index,
                    truth: r.label,
                    predicted,
                    max_prob: p[k],
                    probs: p.clone(),
                    correct: predicted == r.label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }

    /// `epoch,maxprob,correct` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,maxprob,correct\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.epoch_index, p.max_prob, u8::from(p.correct)));
        }
        s
    }
}

/// Five-number summary plus mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    /// Linear interpolation between order statistics at `q·(n-1)`.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub threshold: f64,
    /// Epochs whose confidence is strictly above the threshold.
    pub count_above: usize,
    pub fraction_above: f64,
    /// `None` when no epoch falls on that side.
    pub accuracy_above: Option<f64>,
    pub accuracy_below: Option<f64>,
    /// Distribution of the confidences above the threshold.
    pub quantiles_above: Option<Quantiles>,
}

/// Per-threshold split of the series into confident and unconfident epochs.
pub fn confidence_estimate(series: &ConfidenceSeries, thresholds: &[f64]) -> Result<Vec<ThresholdSummary>> {
    if series.points.is_empty() {
        return Err(Error::Input("confidence series is empty".into()));
    }
    let accuracy = |pts: &[&ConfidencePoint]| {
        (!pts.is_empty()).then(|| pts.iter().filter(|p| p.correct).count() as f64 / pts.len() as f64)
    };
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let (above, below): (Vec<&ConfidencePoint>, Vec<&ConfidencePoint>) =
                series.points.iter().partition(|p| p.max_prob > threshold);
            let confidences: Vec<f64> = above.iter().map(|p| p.max_prob).collect();
            ThresholdSummary {
                threshold,
                count_above: above.len(),
                fraction_above: above.len() as f64 / series.points.len() as f64,
                accuracy_above: accuracy(&above),
                accuracy_below: accuracy(&below),
                quantiles_above: Quantiles::of(&confidences),
            }
        })
        .collect())
}
