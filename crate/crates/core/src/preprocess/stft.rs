use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftParams {
    pub fft_size: usize,
    pub window_seconds: f64,
    /// Fraction of the window shared by consecutive frames.
    pub overlap: f64,
    pub log_floor: f64,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            fft_size: 256,
            window_seconds: 2.0,
            overlap: 0.5,
            log_floor: 1e-10,
        }
    }
}

impl StftParams {
    /// `(window, hop)` in samples.
    pub fn frame_geometry(&self, sample_rate_hz: f64) -> Result<(usize, usize)> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap must be in [0, 1), got {}", self.overlap)));
        }
        let window = (self.window_seconds * sample_rate_hz).round() as usize;
        if window < 2 || window > self.fft_size {
            return Err(Error::Config(format!(
                "window of {window} samples must be in [2, fft_size = {}]",
                self.fft_size
            )));
        }
        let hop = ((window as f64 * (1.0 - self.overlap)).round() as usize).max(1);
        Ok((window, hop))
    }

    /// Frequency bins kept per frame (DC dropped, Nyquist kept).
    pub fn bins(&self) -> usize {
        self.fft_size / 2
    }
}

/// `floor((n - window) / hop) + 1`, or 0 when the signal is too short.
pub fn frame_count(n: usize, window: usize, hop: usize) -> usize {
    if n < window {
        0
    } else {
        (n - window) / hop + 1
    }
}

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Log-power spectrogram `[T, fft_size/2]`.
///
/// Frames are Hamming windowed and zero padded to `fft_size`. Columns are
/// FFT bins `1..=fft_size/2`; each cell is `ln(|X|² + log_floor)`.
pub fn stft_logpower(signal: &[f64], sample_rate_hz: f64, params: &StftParams) -> Result<Tensor> {
    let (window, hop) = params.frame_geometry(sample_rate_hz)?;
    let frames = frame_count(signal.len(), window, hop);
    if frames == 0 {
        return Err(Error::Input(format!(
            "signal of {} samples is shorter than one {window}-sample window",
            signal.len()
        )));
    }
    let bins = params.bins();
    let taper = hamming(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); params.fft_size];
    let mut out = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = f * hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, (&s, &w)) in signal[start..start + window].iter().zip(&taper).enumerate() {
            buf[i] = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        out.extend(buf[1..=bins].iter().map(|c| (c.norm_sqr() + params.log_floor).ln()));
    }
    Tensor::new(vec![frames, bins], out)
}
