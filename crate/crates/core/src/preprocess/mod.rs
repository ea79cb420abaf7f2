//! Signal preprocessing: detrending, log-power spectrograms, normalisation,
//! label cleanup and wearable stream alignment.

mod detrend;
mod labels;
mod normalize;
mod stft;
pub mod wearable;

pub use detrend::{detrend_polyfit, PolyFit};
pub use labels::{relabel_epochs, relabel_epochs_with, RawStage, DEFAULT_WAKE_MARGIN};
pub use normalize::{normalize_standardize, NormalizationParams};
pub use stft::{frame_count, hamming, stft_logpower, StftParams};
pub use wearable::{
    align_wearable, fill_gaps, AlignedWearable, LabelWindow, TimedSample, WearableLayout,
    WearableStreams,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{matmul, Tensor};

/// Raw samples of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawChannelSignal {
    pub channel_name: String,
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub start_time: f64,
}

impl RawChannelSignal {
    pub fn new(name: impl Into<String>, sample_rate_hz: f64, samples: Vec<f64>, start_time: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || samples.is_empty() {
            return Err(Error::Input(
                "channel signal needs a positive sample rate and at least one sample".into(),
            ));
        }
        Ok(Self {
            channel_name: name.into(),
            sample_rate_hz,
            samples,
            start_time,
        })
    }
}

/// Time-shared linear map `[T, F] · [F, P] -> [T, P]`.
pub fn project_features(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || weights.rank() != 2 {
        return Err(Error::shape("project_features", x.shape(), weights.shape()));
    }
    matmul(x, weights)
}

/// The EEG/EOG chain for one epoch: detrend, log-power STFT, then
/// normalise and standardise the whole time-frequency image.
pub fn spectrogram_epoch(
    samples: &[f64],
    sample_rate_hz: f64,
    detrend_order: Option<usize>,
    stft: &StftParams,
) -> Result<Tensor> {
    let detrended;
    let signal = match detrend_order {
        Some(order) => {
            detrended = detrend_polyfit(samples, order)?.0;
            &detrended
        }
        None => samples,
    };
    let image = stft_logpower(signal, sample_rate_hz, stft)?;
    Ok(normalize_standardize(&image)?.0)
}
