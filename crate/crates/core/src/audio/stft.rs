//! Short-time Fourier magnitude analysis.
//!
//! Framing uses reflect padding centered so that the frame count is exactly
//! ceil(len / hop); together with the decoder's length contract this keeps
//! frame-rate and sample-rate views of one utterance aligned.
//!
//! The DFT is evaluated as a dense matrix product against precomputed
//! cos/sin bases. That keeps one numeric path shared between plain feature
//! extraction and the differentiable reconstruction-loss spectrogram.

use ndarray::{Array1, Array2};

use crate::config::FeatureConfig;
use crate::error::{Result, VcError};

use super::Waveform;

/// Magnitude spectrogram, `[frames x fft_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpectrogram {
    pub magnitudes: Array2<f64>,
    pub frame_hop: usize,
    pub frame_length: usize,
}

impl LinearSpectrogram {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn fft_bins(&self) -> usize {
        self.magnitudes.ncols()
    }
}

/// How a signal of `len` samples is padded and cut into frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub len: usize,
    pub frame_length: usize,
    pub hop: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub frames: usize,
}

/// Frames produced for a signal of `len` samples: ceil(len / hop).
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

impl FrameLayout {
    pub fn new(len: usize, frame_length: usize, hop: usize) -> Result<Self> {
        if len < frame_length {
            return Err(VcError::WaveformTooShort {
                len,
                min: frame_length,
            });
        }
        let frames = frame_count(len, hop);
        let pad_left = (frame_length - hop) / 2;
        let total = (frames - 1) * hop + frame_length;
        let pad_right = total - len - pad_left;
        Ok(FrameLayout {
            len,
            frame_length,
            hop,
            pad_left,
            pad_right,
            frames,
        })
    }

    /// Map a position in the padded signal to a source index (reflection
    /// without edge repetition, numpy "reflect" style).
    pub fn source_index(&self, padded: usize) -> usize {
        let p = padded as isize - self.pad_left as isize;
        let n = self.len as isize;
        let idx = if p < 0 {
            -p
        } else if p >= n {
            2 * (n - 1) - p
        } else {
            p
        };
        debug_assert!(idx >= 0 && idx < n, "reflect pad exceeded signal length");
        idx as usize
    }

    /// Gather the (unwindowed) frame matrix `[frames x frame_length]`.
    pub fn gather(&self, samples: &[f64]) -> Array2<f64> {
        let mut frames = Array2::zeros((self.frames, self.frame_length));
        for f in 0..self.frames {
            for i in 0..self.frame_length {
                frames[[f, i]] = samples[self.source_index(f * self.hop + i)];
            }
        }
        frames
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Array1<f64> {
    Array1::from_iter(
        (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()),
    )
}

/// Real-DFT basis matrices `[frame_length x bins]` for an `fft_size`-point
/// transform of a (zero-padded) frame: `re = frames . cos`, `im = frames . sin`.
pub fn dft_basis(frame_length: usize, fft_size: usize) -> (Array2<f64>, Array2<f64>) {
    let bins = fft_size / 2 + 1;
    let mut cos_mat = Array2::zeros((frame_length, bins));
    let mut sin_mat = Array2::zeros((frame_length, bins));
    for n in 0..frame_length {
        for k in 0..bins {
            let phase = 2.0 * std::f64::consts::PI * (k * n) as f64 / fft_size as f64;
            cos_mat[[n, k]] = phase.cos();
            sin_mat[[n, k]] = -phase.sin();
        }
    }
    (cos_mat, sin_mat)
}

/// Short-time Fourier magnitudes of a waveform.
pub fn linear_spectrogram(w: &Waveform, cfg: &FeatureConfig) -> Result<LinearSpectrogram> {
    cfg.validate()?;
    let layout = FrameLayout::new(w.samples.len(), cfg.frame_length, cfg.frame_hop)?;
    let mut frames = layout.gather(&w.samples);
    let window = hann_window(cfg.frame_length);
    for mut row in frames.rows_mut() {
        row *= &window;
    }
    let (cos_mat, sin_mat) = dft_basis(cfg.frame_length, cfg.fft_size);
    let re = frames.dot(&cos_mat);
    let im = frames.dot(&sin_mat);
    let magnitudes = (&re * &re + &im * &im).mapv(f64::sqrt);
    Ok(LinearSpectrogram {
        magnitudes,
        frame_hop: cfg.frame_hop,
        frame_length: cfg.frame_length,
    })
}
