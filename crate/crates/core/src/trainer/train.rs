use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::confidence::{argmax, ConfidenceSeries};
use super::hypnogram::Hypnogram;
use super::metrics::{ConfusionMatrix, MetricsReport};
use super::split::Splits;
use crate::data::{Dataset, EpochRecord, Stage};
use crate::error::{Error, Result};
use crate::model::{Inference, Model, ModelConfig};
use crate::numerics::{AdamState, Tape};
use crate::rng::{stream_rng, Stream};

/// Epochs evaluated per inference chunk.
pub const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop_patience: Option<usize>,
    /// Channels fed to the model; empty means all of them.
    pub channel_subset: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: Some(10),
            channel_subset: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub steps: u64,
}

impl TrainingLog {
    /// `epoch,loss,val_acc` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,val_acc\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_accuracy));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Model,
    pub log: TrainingLog,
}

fn select<'a>(dataset: &'a Dataset, idx: &[usize]) -> Vec<&'a EpochRecord> {
    idx.iter().map(|&i| &dataset.records[i]).collect()
}

/// Fraction of `records` whose argmax prediction matches the label.
pub fn accuracy_of(model: &Model, records: &[&EpochRecord]) -> Result<f64> {
    let inf = model.infer(records, EVAL_CHUNK)?;
    let hits = records
        .iter()
        .zip(&inf.probs)
        .filter(|(r, p)| argmax(p) == r.label.index())
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Minibatch Adam on cross-entropy, keeping the best-validation parameters.
pub fn train(
    dataset: &Dataset,
    splits: &Splits,
    model_config: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::Input("training needs non-empty train and validation splits".into()));
    }
    let mut model = Model::new(model_config.clone(), &mut stream_rng(seed, Stream::Init))?;
    let mut shuffle_rng = stream_rng(seed, Stream::Shuffle);
    let mut dropout_rng = stream_rng(seed, Stream::Dropout);
    let mut adam = AdamState::for_params(model.params().tensors(), config.lr);
    let val = select(dataset, &splits.val);
    let mut order = splits.train.clone();
    let mut tape = Tape::new();
    let mut log = TrainingLog { best_val_accuracy: f64::NEG_INFINITY, ..Default::default() };
    let mut best = model.clone();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch_idx in order.chunks(config.batch_size) {
            let batch = select(dataset, batch_idx);
            tape.reset();
            let bound = model.bind(&mut tape);
            let (loss, out) = model.loss(&mut tape, &bound, &batch, true, &mut dropout_rng)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                let logits = tape.value(out.logits);
                let max_abs = logits.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                return Err(Error::Numerical(format!(
                    "non-finite loss {value} at epoch {epoch}, step {} (batch of {}, max |logit| {max_abs:e})",
                    log.steps + 1,
                    batch.len()
                )));
            }
            tape.backward(loss)?;
            model.collect_grads(&tape, &bound)?;
            adam.step(model.params_mut().tensors_mut())?;
            log.steps += 1;
            loss_sum += value * batch.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_accuracy = accuracy_of(&model, &val)?;
        log::info!("epoch {epoch}: loss {train_loss:.5} val_acc {val_accuracy:.4}");
        log.epochs.push(EpochLog { epoch, train_loss, val_accuracy });
        if val_accuracy > log.best_val_accuracy {
            log.best_val_accuracy = val_accuracy;
            log.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if config.early_stop_patience.is_some_and(|p| stale >= p) {
                log::info!("early stop after {epoch} epochs");
                break;
            }
        }
    }
    if log.epochs.is_empty() {
        log.best_val_accuracy = accuracy_of(&model, &val)?;
    }
    for t in best.params_mut().tensors_mut() {
        t.clear_grad();
    }
    Ok(TrainOutcome { model: best, log })
}

/// Everything derived from one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub confidence: ConfidenceSeries,
    pub hypnogram: Hypnogram,
    pub inference: Inference,
}

impl Evaluation {
    pub fn predicted(&self) -> Vec<Stage> {
        self.confidence.points.iter().map(|p| p.predicted).collect()
    }
}

/// Scores `model` on `records`, which must be in increasing epoch order.
pub fn evaluate(model: &Model, records: &[&EpochRecord]) -> Result<Evaluation> {
    if records.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let inference = model.infer(records, EVAL_CHUNK)?;
    let confidence = ConfidenceSeries::from_probabilities(records, &inference.probs)?;
    let truth: Vec<Stage> = records.iter().map(|r| r.label).collect();
    let predicted: Vec<Stage> = confidence.points.iter().map(|p| p.predicted).collect();
    let (report, confusion) = MetricsReport::from_predictions(&truth, &predicted)?;
    let epochs: Vec<usize> = records.iter().map(|r| r.epoch_index).collect();
    let hypnogram = Hypnogram::with_epochs(&epochs, &truth, &predicted)?;
    Ok(Evaluation { report, confusion, confidence, hypnogram, inference })
}

/// Convenience: evaluate on the given index subset of `dataset`.
pub fn evaluate_indices(model: &Model, dataset: &Dataset, idx: &[usize]) -> Result<Evaluation> {
    evaluate(model, &select(dataset, idx))
}

/// Mean gate value per modality over all epochs and shared units.
pub fn mean_gates(inference: &Inference) -> Vec<f64> {
    let Some(first) = inference.gates.first() else { return Vec::new() };
    let mut sums = vec![0.0; first.len()];
    let mut counts = vec![0usize; first.len()];
    for epoch in &inference.gates {
        for (m, g) in epoch.iter().enumerate() {
            sums[m] += g.iter().sum::<f64>();
            counts[m] += g.len();
        }
    }
    sums.iter().zip(counts).map(|(s, c)| s / c.max(1) as f64).collect()
}
