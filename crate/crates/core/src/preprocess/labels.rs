use std::str::FromStr;

use crate::data::Stage;
use crate::error::{Error, Result};

/// Wake epochs kept on each side of the sleep period by default (30 min).
pub const DEFAULT_WAKE_MARGIN: usize = 60;

/// Scoring label as it appears in source annotations (R&K plus artefacts).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawStage {
    W,
    S1,
    S2,
    S3,
    S4,
    Rem,
    Movement,
    Unknown,
}

impl RawStage {
    /// AASM stage, or `None` for epochs that are dropped.
    pub fn to_stage(self) -> Option<Stage> {
        match self {
            RawStage::W => Some(Stage::W),
            RawStage::S1 => Some(Stage::N1),
            RawStage::S2 => Some(Stage::N2),
            RawStage::S3 | RawStage::S4 => Some(Stage::N3),
            RawStage::Rem => Some(Stage::Rem),
            RawStage::Movement | RawStage::Unknown => None,
        }
    }
}

impl FromStr for RawStage {
    type Err = Error;

    /// Accepts R&K names, their AASM aliases, Sleep-EDF annotation strings
    /// ("Sleep stage 2", "Movement time", "Sleep stage ?") and the numeric
    /// wearable codes 0-5 (4 = N4, 5 = REM, -1 = unknown).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase();
        let key = norm.strip_prefix("SLEEP STAGE ").unwrap_or(&norm);
        Ok(match key {
            "W" | "WAKE" | "0" => RawStage::W,
            "S1" | "N1" | "1" => RawStage::S1,
            "S2" | "N2" | "2" => RawStage::S2,
            "S3" | "N3" | "3" => RawStage::S3,
            "S4" | "N4" | "4" => RawStage::S4,
            "R" | "REM" | "5" => RawStage::Rem,
            "MOVEMENT" | "MOVEMENT TIME" | "MT" | "M" => RawStage::Movement,
            "UNKNOWN" | "?" | "-1" => RawStage::Unknown,
            _ => return Err(Error::Validation(format!("unknown raw stage label {s:?}"))),
        })
    }
}

/// [`relabel_epochs_with`] using the default 60-epoch wake margin.
pub fn relabel_epochs<S: AsRef<str>>(raw: &[S]) -> Result<Vec<Option<Stage>>> {
    relabel_epochs_with(raw, Some(DEFAULT_WAKE_MARGIN))
}

/// Maps raw labels to AASM stages. `None` marks a dropped epoch: movement or
/// unknown epochs, and wake epochs further than `wake_margin` epochs before
/// the first or after the last sleep epoch. `wake_margin = None` disables
/// trimming; so does a recording with no sleep epochs at all.
pub fn relabel_epochs_with<S: AsRef<str>>(
    raw: &[S],
    wake_margin: Option<usize>,
) -> Result<Vec<Option<Stage>>> {
    let mut stages = raw
        .iter()
        .map(|s| s.as_ref().parse::<RawStage>().map(RawStage::to_stage))
        .collect::<Result<Vec<_>>>()?;
    let Some(margin) = wake_margin else {
        return Ok(stages);
    };
    let is_sleep = |s: &Option<Stage>| matches!(s, Some(st) if *st != Stage::W);
    if let (Some(first), Some(last)) = (
        stages.iter().position(is_sleep),
        stages.iter().rposition(is_sleep),
    ) {
        let keep_from = first.saturating_sub(margin);
        let keep_to = last.saturating_add(margin);
        for (i, s) in stages.iter_mut().enumerate() {
            if i < keep_from || i > keep_to {
                *s = None;
            }
        }
    }
    Ok(stages)
}
