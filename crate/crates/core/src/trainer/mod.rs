//! Splitting, training, evaluation metrics, confidence analysis and
//! hypnogram export.

mod ablation;
mod confidence;
mod hypnogram;
mod metrics;
mod split;
mod train;

pub use ablation::{ablation_csv, ablation_run, AblationRow, AblationVariant};
pub use confidence::{
    argmax, confidence_estimate, ConfidencePoint, ConfidenceSeries, Quantiles, ThresholdSummary,
    DEFAULT_THRESHOLDS,
};
pub use hypnogram::{hypnogram_export, Hypnogram, HypnogramRow};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use split::{stratified_split, SplitSpec, Splits, MIN_PER_STAGE};
pub use train::{
    accuracy_of, evaluate, evaluate_indices, mean_gates, train, EpochLog, Evaluation, TrainConfig,
    TrainOutcome, TrainingLog, EVAL_CHUNK,
};
