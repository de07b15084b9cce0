//! Configuration types for feature extraction, model dimensions and training.
//!
//! Everything that affects numerics lives here so experiments (and tests)
//! can shrink the system without touching code. Config files are TOML;
//! unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VcError};

/// Spectral feature extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub frame_hop: usize,
    pub frame_length: usize,
    pub n_mels: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 24_000,
            fft_size: 1024,
            frame_hop: 256,
            frame_length: 1024,
            n_mels: 80,
            mel_fmin: 0.0,
            mel_fmax: 12_000.0,
        }
    }
}

/// Amplitude floor applied before the log in mel spectrograms.
pub const MEL_LOG_FLOOR: f64 = 1e-5;

impl FeatureConfig {
    pub fn fft_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.sample_rate, 16_000 | 24_000 | 48_000) {
            return Err(VcError::UnsupportedSampleRate {
                rate: self.sample_rate,
            });
        }
        if self.frame_hop == 0 || self.frame_hop > self.frame_length {
            return Err(VcError::Config(format!(
                "frame_hop {} must be in 1..=frame_length {}",
                self.frame_hop, self.frame_length
            )));
        }
        if self.frame_length > self.fft_size {
            return Err(VcError::Config(format!(
                "frame_length {} exceeds fft_size {}",
                self.frame_length, self.fft_size
            )));
        }
        if self.n_mels == 0 {
            return Err(VcError::Config("n_mels must be positive".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.mel_fmin < 0.0 || self.mel_fmin >= self.mel_fmax || self.mel_fmax > nyquist {
            return Err(VcError::Config(format!(
                "mel band [{}, {}] must satisfy 0 <= fmin < fmax <= {}",
                self.mel_fmin, self.mel_fmax, nyquist
            )));
        }
        Ok(())
    }
}

/// Where frame-level linguistic features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinguisticSource {
    /// Small trainable conformer block stack over mel input.
    Conformer,
    /// Precomputed per-utterance `.ppg` feature files from the manifest.
    PpgFile,
}

/// Model dimensions and architecture knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Linguistic embedding width.
    pub d_g: usize,
    /// Latent width shared by prior/posterior/decoder.
    pub d_z: usize,
    /// Speaker embedding width.
    pub d_s: usize,
    pub linguistic_source: LinguisticSource,
    /// Train the conformer jointly (false) or keep it frozen (true).
    pub freeze_linguistic: bool,
    /// Temporal subsampling of linguistic frames relative to mel frames.
    pub linguistic_subsample: usize,
    pub conformer_blocks: usize,
    pub conformer_heads: usize,
    pub conformer_conv_kernel: usize,
    pub prior_blocks: usize,
    pub prior_heads: usize,
    pub prior_hidden: usize,
    pub prior_ffn_kernel: usize,
    pub posterior_layers: usize,
    pub posterior_hidden: usize,
    pub posterior_kernel: usize,
    pub posterior_dilation_cycle: usize,
    pub decoder: DecoderConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_g: 192,
            d_z: 192,
            d_s: 256,
            linguistic_source: LinguisticSource::Conformer,
            freeze_linguistic: false,
            linguistic_subsample: 1,
            conformer_blocks: 2,
            conformer_heads: 4,
            conformer_conv_kernel: 7,
            prior_blocks: 4,
            prior_heads: 2,
            prior_hidden: 192,
            prior_ffn_kernel: 3,
            posterior_layers: 16,
            posterior_hidden: 192,
            posterior_kernel: 5,
            posterior_dilation_cycle: 1,
            decoder: DecoderConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, features: &FeatureConfig) -> Result<()> {
        let product: usize = self.decoder.upsample_factors.iter().product();
        if product != features.frame_hop {
            return Err(VcError::Config(format!(
                "product of upsample_factors {:?} is {}, must equal frame_hop {}",
                self.decoder.upsample_factors, product, features.frame_hop
            )));
        }
        if self.decoder.mrf_kernel_sizes.len() != self.decoder.mrf_dilations.len() {
            return Err(VcError::Config(
                "mrf_kernel_sizes and mrf_dilations must have equal length".into(),
            ));
        }
        if self.linguistic_subsample == 0 {
            return Err(VcError::Config("linguistic_subsample must be >= 1".into()));
        }
        if self.prior_hidden % self.prior_heads != 0 {
            return Err(VcError::Config(
                "prior_hidden must be divisible by prior_heads".into(),
            ));
        }
        if self.d_g % self.conformer_heads != 0 {
            return Err(VcError::Config(
                "d_g must be divisible by conformer_heads".into(),
            ));
        }
        Ok(())
    }
}

/// Waveform decoder (generator) architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub upsample_factors: Vec<usize>,
    pub mrf_kernel_sizes: Vec<usize>,
    pub mrf_dilations: Vec<Vec<usize>>,
    pub base_channels: usize,
    pub leaky_slope: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            upsample_factors: vec![8, 8, 2, 2],
            mrf_kernel_sizes: vec![3, 7, 11],
            mrf_dilations: vec![vec![1, 3, 5], vec![1, 3, 5], vec![1, 3, 5]],
            base_channels: 512,
            leaky_slope: 0.1,
        }
    }
}

impl DecoderConfig {
    /// Samples produced per latent frame.
    pub fn total_upsample(&self) -> usize {
        self.upsample_factors.iter().product()
    }
}

/// Multi-period / multi-scale discriminator architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    pub scales: usize,
    pub mpd_base_channels: usize,
    pub mpd_layers: usize,
    pub msd_base_channels: usize,
    pub msd_kernel_sizes: Vec<usize>,
    pub msd_strides: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            periods: vec![2, 3, 5, 7, 11],
            scales: 3,
            mpd_base_channels: 32,
            mpd_layers: 4,
            msd_base_channels: 16,
            msd_kernel_sizes: vec![15, 41, 41, 5],
            msd_strides: vec![1, 4, 4, 1],
            leaky_slope: 0.1,
        }
    }
}

impl DiscriminatorConfig {
    /// Total number of sub-discriminators (periods + scales).
    pub fn sub_discriminator_count(&self) -> usize {
        self.periods.len() + self.scales
    }
}

/// Per-term weights applied to the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub recon: f64,
    pub kl: f64,
    pub adv_g: f64,
    pub fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            recon: 1.0,
            kl: 1.0,
            adv_g: 1.0,
            fm: 1.0,
        }
    }
}

impl LossWeights {
    /// Weighting used by production VITS/HiFiGAN-class recipes. The default
    /// keeps every weight at 1.0; this preset trades fidelity for faster
    /// convergence on real corpora.
    pub fn practical() -> Self {
        LossWeights {
            recon: 45.0,
            kl: 1.0,
            adv_g: 1.0,
            fm: 2.0,
        }
    }
}

/// Full training configuration; serializable as the experiment record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub segment_frames: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Noise scale used by the conversion path when none is given.
    pub convert_noise_scale: f64,
    pub loss_weights: LossWeights,
    pub features: FeatureConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            segment_frames: 32,
            batch_size: 1,
            lr_generator: 2e-4,
            lr_discriminator: 2e-4,
            lr_decay: 0.999,
            adam_beta1: 0.8,
            adam_beta2: 0.99,
            adam_eps: 1e-9,
            total_steps: 2000,
            seed: 1234,
            checkpoint_every: 1000,
            convert_noise_scale: 0.667,
            loss_weights: LossWeights::default(),
            features: FeatureConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segment_frames < 8 {
            return Err(VcError::Config(format!(
                "segment_frames {} must be >= 8",
                self.segment_frames
            )));
        }
        if self.batch_size == 0 {
            return Err(VcError::Config("batch_size must be >= 1".into()));
        }
        for (name, v) in [
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
            ("lr_decay", self.lr_decay),
        ] {
            if v <= 0.0 {
                return Err(VcError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        self.features.validate()?;
        self.model.validate(&self.features)?;
        Ok(())
    }

    /// Parse a TOML config document. Unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| VcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| VcError::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// A configuration small enough to train on a laptop CPU in minutes.
    /// Same architecture, reduced widths and 16 kHz features.
    pub fn desk_small() -> Self {
        let features = FeatureConfig {
            sample_rate: 16_000,
            fft_size: 512,
            frame_hop: 256,
            frame_length: 512,
            n_mels: 40,
            mel_fmin: 0.0,
            mel_fmax: 8_000.0,
        };
        let model = ModelConfig {
            d_g: 64,
            d_z: 64,
            d_s: 32,
            conformer_blocks: 1,
            conformer_heads: 2,
            conformer_conv_kernel: 7,
            prior_blocks: 2,
            prior_heads: 2,
            prior_hidden: 64,
            prior_ffn_kernel: 3,
            posterior_layers: 4,
            posterior_hidden: 64,
            posterior_kernel: 5,
            posterior_dilation_cycle: 1,
            decoder: DecoderConfig {
                upsample_factors: vec![8, 8, 2, 2],
                mrf_kernel_sizes: vec![3, 7],
                mrf_dilations: vec![vec![1, 3], vec![1, 3]],
                base_channels: 64,
                leaky_slope: 0.1,
            },
            discriminator: DiscriminatorConfig {
                periods: vec![2, 3, 5, 7, 11],
                scales: 3,
                mpd_base_channels: 8,
                mpd_layers: 4,
                msd_base_channels: 8,
                msd_kernel_sizes: vec![15, 21, 21, 5],
                msd_strides: vec![1, 4, 4, 1],
                leaky_slope: 0.1,
            },
            ..ModelConfig::default()
        };
        TrainConfig {
            features,
            model,
            ..TrainConfig::default()
        }
    }
}
