//! Mel filterbank and log-mel spectrograms.

use ndarray::Array2;

use crate::config::{FeatureConfig, MEL_LOG_FLOOR};
use crate::error::{Result, VcError};

use super::stft::LinearSpectrogram;

/// Log-amplitude mel spectrogram, `[frames x n_mels]`, on the same frame
/// grid as the linear spectrogram it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank `[n_mels x fft_bins]`. Each filter is scaled to
/// unit area over Hz (2 / bandwidth), so louder does not leak into wider.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Array2<f64> {
    let bins = cfg.fft_bins();
    let mel_lo = hz_to_mel(cfg.mel_fmin);
    let mel_hi = hz_to_mel(cfg.mel_fmax);
    // n_mels + 2 corner points, evenly spaced on the mel scale.
    let corners: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..bins)
        .map(|k| k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64)
        .collect();
    let mut fb = Array2::zeros((cfg.n_mels, bins));
    for m in 0..cfg.n_mels {
        let (lo, mid, hi) = (corners[m], corners[m + 1], corners[m + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..bins {
            let f = bin_hz[k];
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            fb[[m, k]] = w * norm;
        }
    }
    fb
}

/// Log-mel spectrogram: `log(max(filterbank . magnitudes, floor))`.
pub fn mel_spectrogram(lin: &LinearSpectrogram, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    if lin.fft_bins() != cfg.fft_bins() {
        return Err(VcError::DimensionMismatch {
            context: "mel_spectrogram".into(),
            expected: format!("{} fft bins", cfg.fft_bins()),
            got: format!("{} fft bins", lin.fft_bins()),
        });
    }
    let fb = mel_filterbank(cfg);
    // [frames x bins] . [bins x n_mels]
    let mel = lin.magnitudes.dot(&fb.t());
    let values = mel.mapv(|v| v.max(MEL_LOG_FLOOR).ln());
    Ok(MelSpectrogram { values })
}
