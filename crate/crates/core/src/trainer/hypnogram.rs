use serde::{Deserialize, Serialize};

use crate::data::Stage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypnogramRow {
    pub epoch_index: usize,
    pub truth: Stage,
    pub predicted: Stage,
}

/// True and predicted stage per epoch, in epoch order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hypnogram {
    pub rows: Vec<HypnogramRow>,
}

impl Hypnogram {
    /// Epoch indices must be strictly increasing.
    pub fn with_epochs(epochs: &[usize], truth: &[Stage], predicted: &[Stage]) -> Result<Self> {
        if truth.len() != predicted.len() || epochs.len() != truth.len() {
            return Err(Error::Input(format!(
                "hypnogram needs equal lengths, got {} epochs, {} true and {} predicted stages",
                epochs.len(),
                truth.len(),
                predicted.len()
            )));
        }
        if epochs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("hypnogram epoch indices must be strictly increasing".into()));
        }
        let rows = epochs
            .iter()
            .zip(truth.iter().zip(predicted))
            .map(|(&epoch_index, (&truth, &predicted))| HypnogramRow { epoch_index, truth, predicted })
            .collect();
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mismatches(&self) -> usize {
        self.rows.iter().filter(|r| r.truth != r.predicted).count()
    }

    /// `epoch,true,pred` with stage names.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,true,pred\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.epoch_index, r.truth, r.predicted));
        }
        s
    }

    /// Plot depths ([`Stage::hypnogram_level`]) for the true and predicted
    /// traces.
    pub fn levels(&self) -> Vec<(u8, u8)> {
        self.rows
            .iter()
            .map(|r| (r.truth.hypnogram_level(), r.predicted.hypnogram_level()))
            .collect()
    }
}

/// Hypnogram over consecutive epochs `0..n`.
pub fn hypnogram_export(truth: &[Stage], predicted: &[Stage]) -> Result<Hypnogram> {
    let epochs: Vec<usize> = (0..truth.len()).collect();
    Hypnogram::with_epochs(&epochs, truth, predicted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(hypnogram_export(&[Stage::W], &[]), Err(Error::Input(_))));
    }

    #[test]
    fn csv_rows() {
        let h = hypnogram_export(&[Stage::W, Stage::N3], &[Stage::W, Stage::Rem]).unwrap();
        assert_eq!(h.to_csv(), "epoch,true,pred\n0,W,W\n1,N3,REM\n");
        assert_eq!(h.mismatches(), 1);
        assert_eq!(h.levels(), vec![(4, 4), (0, 3)]);
    }

    #[test]
    fn indices_must_increase() {
        let s = [Stage::W, Stage::W];
        assert!(Hypnogram::with_epochs(&[3, 3], &s, &s).is_err());
    }
}
