use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Stage, NUM_STAGES};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Minimum records per present stage for a stratified split.
pub const MIN_PER_STAGE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.val_fraction, self.test_fraction];
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!("split fractions must lie in [0, 1], got {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {f:?}")));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `n` items; train and val are rounded,
    /// test takes the rest.
    pub fn allocate(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64 * self.train_fraction).round() as usize).min(n);
        let val = ((n as f64 * self.val_fraction).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

/// Disjoint index lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Set when stratification was requested but could not be honoured.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn assign(indices: &mut [usize], spec: &SplitSpec, out: &mut Splits) {
    let (tr, va, _) = spec.allocate(indices.len());
    out.train.extend_from_slice(&indices[..tr]);
    out.val.extend_from_slice(&indices[tr..tr + va]);
    out.test.extend_from_slice(&indices[tr + va..]);
}

/// Shuffles and splits record indices. With `spec.stratified`, each stage
/// is split on its own so per-stage proportions hold to within one record;
/// if any present stage has fewer than [`MIN_PER_STAGE`] records the split
/// falls back to a global one and records a warning.
pub fn stratified_split(labels: &[Stage], spec: &SplitSpec, seed: u64) -> Result<Splits> {
    spec.validate()?;
    let mut rng = stream_rng(seed, Stream::Split);
    let mut out = Splits::default();
    let mut by_stage: Vec<Vec<usize>> = vec![Vec::new(); NUM_STAGES];
    for (i, s) in labels.iter().enumerate() {
        by_stage[s.index()].push(i);
    }
    let sparse: Vec<Stage> = Stage::ALL
        .into_iter()
        .filter(|s| (1..MIN_PER_STAGE).contains(&by_stage[s.index()].len()))
        .collect();
    if spec.stratified && sparse.is_empty() {
        for group in &mut by_stage {
            group.shuffle(&mut rng);
            assign(group, spec, &mut out);
        }
    } else {
        if spec.stratified {
            let msg = format!(
                "stages {sparse:?} have fewer than {MIN_PER_STAGE} records; using an unstratified split"
            );
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        assign(&mut all, spec, &mut out);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_must_sum_to_one() {
        let spec = SplitSpec { test_fraction: 0.3, ..SplitSpec::default() };
        assert!(matches!(stratified_split(&[Stage::W], &spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn sparse_stage_falls_back_with_warning() {
        let mut labels = vec![Stage::W; 30];
        labels.extend([Stage::N1; 3]);
        let s = stratified_split(&labels, &SplitSpec::default(), 1).unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 33);
    }
}
