//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum VcError {
    /// File not found or other I/O failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// WAV header too short to parse.
    #[error("truncated wav header in {path}")]
    TruncatedWavHeader { path: String },

    /// WAV file is not 16-bit PCM.
    #[error("unsupported wav encoding in {path}: {detail}")]
    NonPcmWav { path: String, detail: String },

    /// WAV file has more than one channel.
    #[error("multichannel wav not supported ({channels} channels in {path})")]
    MultichannelWav { path: String, channels: u16 },

    /// Sample rate outside the supported set.
    #[error("unsupported sample rate {rate} (expected one of 16000, 24000, 48000)")]
    UnsupportedSampleRate { rate: u32 },

    /// Waveform too short for the requested operation.
    #[error("waveform too short: {len} samples, need at least {min}")]
    WaveformTooShort { len: usize, min: usize },

    /// Tensor/feature dimensions disagree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// Configuration file or value is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Manifest, trial list, score file or other data inputs are malformed.
    #[error("data error: {0}")]
    Data(String),

    /// Speaker id absent from the trained speaker table.
    #[error("unknown speaker id: {0}")]
    UnknownSpeaker(String),

    /// A training loss went non-finite; carries the offending term.
    #[error("numerical divergence at step {step}: loss term `{term}` is non-finite")]
    Divergence { term: String, step: u64 },

    /// Checkpoint file is malformed or from an incompatible version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Silence bank is empty or unusable.
    #[error("silence bank error: {0}")]
    SilenceBank(String),
}

impl VcError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        VcError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code class for the CLI: 1 usage, 2 data, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            VcError::Divergence { .. } => 3,
            VcError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, VcError>;
