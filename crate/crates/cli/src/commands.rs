//! Subcommand bodies. Each writes its artifacts plus the resolved
//! `run_config.json` into the output directory; wall-clock times go only to
//! the `run.log` sidecar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sleepgmu::formats::{decode_checkpoint, encode_checkpoint};
use sleepgmu::model::{Model, ModelConfig};
use sleepgmu::synth::generate;
use sleepgmu::trainer::{
    ablation_csv, ablation_run, confidence_estimate, evaluate, mean_gates, stratified_split, train,
    AblationVariant, ConfusionMatrix, Evaluation, MetricsReport, Splits, ThresholdSummary, EVAL_CHUNK,
    DEFAULT_THRESHOLDS,
};
use sleepgmu::{Dataset, EpochRecord, Error, Result, Stage};

use crate::artifact::{read_dataset, write_dataset, DatasetManifest, Provenance};
use crate::config::RunConfig;
use crate::input::preprocess_dir;
use crate::io::{create_dir, read_file, write_file};

pub const RUN_CONFIG: &str = "run_config.json";
pub const RUN_LOG: &str = "run.log";
pub const CHECKPOINT: &str = "checkpoint.bin";

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Creates `out`, writes the resolved config, runs `body` and records start
/// and end times in the sidecar log.
fn in_run_dir(out: &Path, command: &str, cfg: &RunConfig, body: impl FnOnce() -> Result<()>) -> Result<()> {
    create_dir(out)?;
    let started = unix_now();
    write_file(&out.join(RUN_CONFIG), cfg.to_json())?;
    body()?;
    write_file(
        &out.join(RUN_LOG),
        format!("command={command}\nseed={}\nstarted_unix={started:.3}\nfinished_unix={:.3}\n", cfg.seed, unix_now()),
    )
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    in_run_dir(out, "synth", cfg, || {
        let dataset = generate(&cfg.synth, cfg.seed)?;
        let kinds: Vec<_> = cfg.synth.channels.iter().map(|c| c.kind).collect();
        let manifest = DatasetManifest::describe(
            "synthetic",
            &dataset,
            &kinds,
            Vec::new(),
            Provenance::Synth { seed: cfg.seed, spec: cfg.synth.clone() },
        );
        write_dataset(out, &manifest, &dataset)
    })
}

pub fn preprocess(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    in_run_dir(out, "preprocess", cfg, || {
        let pre = preprocess_dir(input, &cfg.preprocess)?;
        let mut manifest = DatasetManifest::describe(
            &cfg.preprocess.name,
            &pre.dataset,
            &pre.kinds,
            pre.sources,
            Provenance::Preprocess { seed: cfg.seed, config: cfg.preprocess.clone() },
        );
        manifest.excluded_epochs = pre.excluded_epochs;
        manifest.interpolated_slots = pre.interpolated_slots;
        log::info!(
            "{} epochs kept, {} excluded, {} slots interpolated",
            manifest.epochs,
            manifest.excluded_epochs,
            manifest.interpolated_slots
        );
        write_dataset(out, &manifest, &pre.dataset)
    })
}

/// Restricts `dataset` to the configured subset, as a validation error when
/// a name is not in the manifest.
fn training_view(dataset: &Dataset, subset: &[String]) -> Result<Dataset> {
    if subset.is_empty() {
        return Ok(dataset.clone());
    }
    dataset.select_channels(subset).map_err(|e| match e {
        Error::Config(m) => Error::Validation(format!("config names a channel the dataset lacks: {m}")),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsFile {
    pub split: String,
    pub epochs: usize,
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub confidence: Vec<ThresholdSummary>,
    /// Mean gate per channel; empty for concat fusion.
    pub mean_gates: BTreeMap<String, f64>,
}

fn write_evaluation(out: &Path, split: &str, model: &Model, eval: &Evaluation) -> Result<()> {
    let gates = mean_gates(&eval.inference);
    let metrics = MetricsFile {
        split: split.to_string(),
        epochs: eval.hypnogram.len(),
        report: eval.report.clone(),
        confusion: eval.confusion.clone(),
        confidence: confidence_estimate(&eval.confidence, &DEFAULT_THRESHOLDS)?,
        mean_gates: model
            .config()
            .channels
            .iter()
            .zip(gates)
            .map(|(c, g)| (c.name.clone(), g))
            .collect(),
    };
    write_file(&out.join("metrics.json"), serde_json::to_string_pretty(&metrics)? + "\n")?;
    write_file(&out.join("hypnogram.csv"), eval.hypnogram.to_csv())?;
    write_file(&out.join("confidence.csv"), eval.confidence.to_csv())
}

fn records<'a>(dataset: &'a Dataset, idx: &[usize]) -> Vec<&'a EpochRecord> {
    idx.iter().map(|&i| &dataset.records[i]).collect()
}

pub fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    in_run_dir(out, "train", cfg, || {
        let (_, dataset) = read_dataset(data)?;
        let view = training_view(&dataset, &cfg.train.channel_subset)?;
        let splits = stratified_split(&view.labels(), &cfg.split, cfg.seed)?;
        for w in &splits.warnings {
            log::warn!("{w}");
        }
        let model_config = ModelConfig::new(view.channels.clone(), cfg.arch.clone())?;
        let outcome = train(&view, &splits, &model_config, &cfg.train, cfg.seed)?;
        write_file(&out.join(CHECKPOINT), encode_checkpoint(&outcome.model, cfg.seed, outcome.log.steps)?)?;
        write_file(&out.join("train_log.csv"), outcome.log.to_csv())?;
        write_file(&out.join("splits.json"), serde_json::to_string(&splits)? + "\n")?;
        let eval = evaluate(&outcome.model, &records(&view, &splits.test))?;
        write_evaluation(out, "test", &outcome.model, &eval)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl SplitChoice {
    fn name(self) -> &'static str {
        match self {
            SplitChoice::Train => "train",
            SplitChoice::Val => "val",
            SplitChoice::Test => "test",
            SplitChoice::All => "all",
        }
    }

    fn indices(self, splits: &Splits, n: usize) -> Vec<usize> {
        match self {
            SplitChoice::Train => splits.train.clone(),
            SplitChoice::Val => splits.val.clone(),
            SplitChoice::Test => splits.test.clone(),
            SplitChoice::All => (0..n).collect(),
        }
    }
}

/// Loads a checkpoint and the dataset view it was trained on.
fn model_and_view(checkpoint: &Path, data: &Path) -> Result<(Model, u64, Dataset)> {
    let ckpt = decode_checkpoint(&read_file(checkpoint)?)?;
    let (_, dataset) = read_dataset(data)?;
    let names: Vec<String> = ckpt.model.config().channels.iter().map(|c| c.name.clone()).collect();
    let view = training_view(&dataset, &names)?;
    if view.channels != ckpt.model.config().channels {
        return Err(Error::Validation(format!(
            "checkpoint expects channels {:?}, dataset has {:?}",
            ckpt.model.config().channels,
            view.channels
        )));
    }
    Ok((ckpt.model, ckpt.seed, view))
}

/// With `seed` unset the split is rebuilt from the checkpoint's seed.
pub fn eval_cmd(
    cfg: &RunConfig,
    seed: Option<u64>,
    data: &Path,
    checkpoint: &Path,
    split: SplitChoice,
    out: &Path,
) -> Result<()> {
    let (model, ckpt_seed, view) = model_and_view(checkpoint, data)?;
    let cfg = RunConfig { seed: seed.unwrap_or(ckpt_seed), ..cfg.clone() };
    in_run_dir(out, "eval", &cfg, || {
        let splits = stratified_split(&view.labels(), &cfg.split, cfg.seed)?;
        let idx = split.indices(&splits, view.len());
        let eval = evaluate(&model, &records(&view, &idx))?;
        write_evaluation(out, split.name(), &model, &eval)
    })
}

/// `epoch,pred,p_W,...,p_REM` plus one gate column per channel for GMU.
pub fn predict_cmd(cfg: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let (model, _, view) = model_and_view(checkpoint, data)?;
    in_run_dir(out, "predict", cfg, || {
        let all: Vec<&EpochRecord> = view.records.iter().collect();
        let inf = model.infer(&all, EVAL_CHUNK)?;
        let mut csv = String::from("epoch,pred");
        for s in Stage::ALL {
            csv.push_str(&format!(",p_{s}"));
        }
        let gated = inf.gates.first().is_some_and(|g| !g.is_empty());
        if gated {
            for c in &model.config().channels {
                csv.push_str(&format!(",gate_{}", c.name));
            }
        }
        csv.push('\n');
        for (i, r) in all.iter().enumerate() {
            let p = &inf.probs[i];
            let pred = Stage::from_index(sleepgmu::trainer::argmax(p)).expect("K classes");
            csv.push_str(&format!("{},{pred}", r.epoch_index));
            for v in p {
                csv.push_str(&format!(",{v}"));
            }
            if gated {
                for g in &inf.gates[i] {
                    csv.push_str(&format!(",{}", g.iter().sum::<f64>() / g.len() as f64));
                }
            }
            csv.push('\n');
        }
        write_file(&out.join("predictions.csv"), csv)
    })
}

pub fn ablate_cmd(cfg: &RunConfig, extra: &[AblationVariant], data: &Path, out: &Path) -> Result<()> {
    let mut variants = cfg.ablation.clone();
    variants.extend_from_slice(extra);
    if variants.is_empty() {
        return Err(Error::Config("no ablation variants given (config `ablation` or --variant)".into()));
    }
    let cfg = RunConfig { ablation: variants.clone(), ..cfg.clone() };
    in_run_dir(out, "ablate", &cfg, || {
        let (_, dataset) = read_dataset(data)?;
        let splits = stratified_split(&dataset.labels(), &cfg.split, cfg.seed)?;
        let rows = ablation_run(&dataset, &cfg.arch, &cfg.train, &splits, &variants, cfg.seed)?;
        write_file(&out.join("ablation.csv"), ablation_csv(&rows))?;
        write_file(&out.join("ablation.json"), serde_json::to_string_pretty(&rows)? + "\n")
    })
}

/// Every file in `dir` except the timestamp sidecar, sorted by name.
pub fn artifact_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.file_name().is_some_and(|n| n != RUN_LOG));
    files.sort();
    Ok(files)
}
