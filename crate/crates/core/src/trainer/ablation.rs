use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::split::Splits;
use super::train::{evaluate_indices, mean_gates, train, TrainConfig};
use crate::data::{Dataset, Stage};
use crate::error::{Error, Result};
use crate::model::{ArchConfig, FusionMode, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationVariant {
    pub name: String,
    pub channels: Vec<String>,
    #[serde(default)]
    pub fusion: FusionMode,
}

impl AblationVariant {
    /// Parses `name=ch1+ch2:fusion`; the name and fusion parts are optional.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = match spec.split_once('=') {
            Some((n, r)) => (Some(n.trim()), r),
            None => (None, spec),
        };
        let (chans, fusion) = match rest.rsplit_once(':') {
            Some((c, f)) => (c, f.trim().parse()?),
            None => (rest, FusionMode::Gmu),
        };
        let channels: Vec<String> = chans.split('+').map(|c| c.trim().to_string()).collect();
        if channels.iter().any(String::is_empty) {
            return Err(Error::Config(format!("empty channel name in variant {spec:?}")));
        }
        let name = name.map_or_else(|| format!("{}:{fusion}", channels.join("+")), str::to_string);
        Ok(Self { name, channels, fusion })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub best_val_accuracy: f64,
    pub report: MetricsReport,
    /// Mean GMU gate per channel on the test split; empty for concat.
    pub mean_gates: Vec<f64>,
}

/// Trains and tests each variant on the same split and seed.
pub fn ablation_run(
    dataset: &Dataset,
    arch: &ArchConfig,
    train_config: &TrainConfig,
    splits: &Splits,
    variants: &[AblationVariant],
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if splits.test.is_empty() {
        return Err(Error::Input("ablation needs a non-empty test split".into()));
    }
    for v in variants {
        for c in &v.channels {
            dataset.channel_spec(c)?;
        }
    }
    variants
        .iter()
        .map(|v| {
            log::info!("ablation variant {}", v.name);
            let subset = dataset.select_channels(&v.channels)?;
            let arch = ArchConfig { fusion: v.fusion, ..arch.clone() };
            let cfg = ModelConfig::new(subset.channels.clone(), arch)?;
            let tc = TrainConfig { channel_subset: v.channels.clone(), ..train_config.clone() };
            let outcome = train(&subset, splits, &cfg, &tc, seed)?;
            let eval = evaluate_indices(&outcome.model, &subset, &splits.test)?;
            Ok(AblationRow {
                variant: v.clone(),
                best_val_accuracy: outcome.log.best_val_accuracy,
                report: eval.report,
                mean_gates: mean_gates(&eval.inference),
            })
        })
        .collect()
}

/// One row per variant: overall metrics then per-class F1.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,channels,fusion,accuracy,kappa,mf1,mean_sensitivity,mean_specificity");
    for st in Stage::ALL {
        s.push_str(&format!(",f1_{st}"));
    }
    s.push('\n');
    for r in rows {
        let m = &r.report;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            r.variant.name,
            r.variant.channels.join("+"),
            r.variant.fusion,
            m.accuracy,
            m.kappa,
            m.mf1,
            m.mean_sensitivity,
            m.mean_specificity
        ));
        for f in m.per_class_f1 {
            s.push_str(&format!(",{f}"));
        }
        s.push('\n');
    }
    s
}
