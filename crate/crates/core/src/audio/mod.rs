//! Audio I/O and spectral feature extraction.
//!
//! All feature functions are pure and deterministic; they may be called from
//! any number of concurrent workers.

mod mel;
mod stft;
mod wav;

pub use mel::{mel_filterbank, mel_spectrogram, MelSpectrogram};
pub use stft::{
    dft_basis, frame_count, hann_window, linear_spectrogram, FrameLayout,
    LinearSpectrogram,
};
pub use wav::{load_wav, save_wav};

use crate::error::{Result, VcError};

/// Time-domain audio with its sample rate. Samples live in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(VcError::WaveformTooShort { len: 0, min: 1 });
        }
        if !matches!(sample_rate, 16_000 | 24_000 | 48_000) {
            return Err(VcError::UnsupportedSampleRate { rate: sample_rate });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(VcError::Data("waveform contains non-finite samples".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Root-mean-square amplitude.
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Drop trailing samples so the length is a multiple of `hop`.
    pub fn truncated_to_hop(&self, hop: usize) -> Waveform {
        let len = (self.samples.len() / hop) * hop;
        Waveform {
            samples: self.samples[..len.max(hop.min(self.samples.len()))].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

/// RMS of a raw sample slice; 0 for an empty slice.
pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// RMS expressed in dBFS, floored at -120 dB for silent input.
pub fn rms_dbfs(samples: &[f64]) -> f64 {
    let r = rms(samples);
    if r <= 1e-6 {
        -120.0
    } else {
        (20.0 * r.log10()).max(-120.0)
    }
}

/// Integer-factor downsampling with a Hann-windowed-sinc anti-aliasing FIR.
///
/// Covers the 48k -> 24k -> 16k paths; arbitrary-rate resampling is out of
/// scope. Cutoff sits at 45% of the output Nyquist.
pub fn decimate(w: &Waveform, factor: usize) -> Result<Waveform> {
    if factor == 0 {
        return Err(VcError::Config("decimation factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(w.clone());
    }
    let out_rate = w.sample_rate / factor as u32;
    if w.sample_rate % factor as u32 != 0 || !matches!(out_rate, 16_000 | 24_000 | 48_000) {
        return Err(VcError::UnsupportedSampleRate { rate: out_rate });
    }
    // 8 zero crossings per side at the output rate.
    let half = 8 * factor;
    let cutoff = 0.45 / factor as f64;
    let taps: Vec<f64> = (-(half as isize)..=half as isize)
        .map(|i| {
            let x = i as f64;
            let sinc = if i == 0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * x).sin() / (std::f64::consts::PI * x)
            };
            let win = 0.5
                + 0.5
                    * (std::f64::consts::PI * x / (half as f64 + 1.0))
                        .cos();
            sinc * win
        })
        .collect();
    let norm: f64 = taps.iter().sum();
    let n_out = w.samples.len() / factor;
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let center = k * factor;
        let mut acc = 0.0;
        for (j, t) in taps.iter().enumerate() {
            let idx = center as isize + j as isize - half as isize;
            if idx >= 0 && (idx as usize) < w.samples.len() {
                acc += t * w.samples[idx as usize];
            }
        }
        out.push(acc / norm);
    }
    Waveform::new(out, out_rate)
}
