use serde::{Deserialize, Serialize};

use crate::data::{Stage, NUM_STAGES};
use crate::error::{Error, Result};

/// Counts with rows = true stage, columns = predicted stage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_STAGES]; NUM_STAGES],
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[Stage], predicted: &[Stage]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Input(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = Self::default();
        for (t, p) in truth.iter().zip(predicted) {
            cm.counts[t.index()][p.index()] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_STAGES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_total(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }
}

/// Overall and per-class scores derived from a confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub kappa: f64,
    pub mf1: f64,
    pub mean_sensitivity: f64,
    pub mean_specificity: f64,
    /// Indexed by stage: W, N1, N2, N3, REM.
    pub per_class_f1: [f64; NUM_STAGES],
    pub per_class_sensitivity: [f64; NUM_STAGES],
    pub per_class_specificity: [f64; NUM_STAGES],
    /// Stages with neither true nor predicted instances (their F1 is 0).
    pub absent_classes: Vec<Stage>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Ratios with a zero denominator are reported as 0.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let n = cm.total();
        if n == 0 {
            return Err(Error::Input("cannot score an empty confusion matrix".into()));
        }
        let nf = n as f64;
        let p_o = cm.correct() as f64 / nf;
        let p_e: f64 = (0..NUM_STAGES)
            .map(|k| cm.row_total(k) as f64 * cm.col_total(k) as f64)
            .sum::<f64>()
            / (nf * nf);
        // p_e == 1 only when every count sits in one diagonal cell.
        let kappa = if p_e >= 1.0 { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };

        let mut f1 = [0.0; NUM_STAGES];
        let mut sens = [0.0; NUM_STAGES];
        let mut spec = [0.0; NUM_STAGES];
        let mut absent = Vec::new();
        for k in 0..NUM_STAGES {
            let tp = cm.counts[k][k];
            let fn_ = cm.row_total(k) - tp;
            let fp = cm.col_total(k) - tp;
            let tn = n - tp - fn_ - fp;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            f1[k] = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            sens[k] = recall;
            spec[k] = ratio(tn, tn + fp);
            if cm.row_total(k) == 0 && cm.col_total(k) == 0 {
                absent.push(Stage::ALL[k]);
            }
        }
        let mean = |v: &[f64; NUM_STAGES]| v.iter().sum::<f64>() / NUM_STAGES as f64;
        Ok(Self {
            accuracy: p_o,
            kappa,
            mf1: mean(&f1),
            mean_sensitivity: mean(&sens),
            mean_specificity: mean(&spec),
            per_class_f1: f1,
            per_class_sensitivity: sens,
            per_class_specificity: spec,
            absent_classes: absent,
        })
    }

    pub fn from_predictions(truth: &[Stage], predicted: &[Stage]) -> Result<(Self, ConfusionMatrix)> {
        let cm = ConfusionMatrix::from_predictions(truth, predicted)?;
        Ok((Self::from_confusion(&cm)?, cm))
    }
}
