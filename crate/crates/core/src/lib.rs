//! End-to-end PPG-based voice conversion at desk scale.
//!
//! The crate covers the full pipeline: spectral feature extraction, a
//! conditional-VAE conversion model (linguistic/prior/posterior encoders,
//! reparameterized latent, upsampling waveform decoder) trained adversarially
//! against multi-period and multi-scale discriminators, silence-oriented
//! post-processing attacks, and equal-error-rate evaluation of anti-spoofing
//! scores. Everything runs in 64-bit on the CPU and is deterministic under a
//! fixed seed.

pub mod audio;
pub mod autodiff;
pub mod config;
pub mod discriminators;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod postprocess;

pub use audio::{LinearSpectrogram, MelSpectrogram, Waveform};
pub use config::{DecoderConfig, DiscriminatorConfig, FeatureConfig, ModelConfig, TrainConfig};
pub use error::{Result, VcError};
