//! RIFF/WAVE PCM 16-bit mono codec.
//!
//! Hand-rolled so the error taxonomy (missing file, non-PCM, multichannel,
//! truncated header) stays exact and the sample scaling is pinned: i16
//! divided by 32768 on read, round-to-nearest clamped on write.

use std::io::Read;
use std::path::Path;

use super::Waveform;
use crate::error::{Result, VcError};

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Load a 16-bit PCM mono WAV file. Samples are scaled to [-1, 1) by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| VcError::io(&pstr, e))?;

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(VcError::TruncatedWavHeader { path: pstr });
    }

    // Walk chunks; require an fmt chunk before data.
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(&bytes, pos + 4) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(VcError::TruncatedWavHeader { path: pstr });
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(VcError::TruncatedWavHeader { path: pstr });
                }
                fmt = Some((
                    read_u16(&bytes, body_start),
                    read_u16(&bytes, body_start + 2),
                    read_u32(&bytes, body_start + 4),
                    read_u16(&bytes, body_start + 14),
                ));
            }
            b"data" => {
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_start + size + (size & 1);
        if data.is_some() && fmt.is_some() {
            break;
        }
    }

    let (format, channels, rate, bits) = fmt.ok_or(VcError::TruncatedWavHeader {
        path: pstr.clone(),
    })?;
    let data = data.ok_or(VcError::TruncatedWavHeader {
        path: pstr.clone(),
    })?;

    if format != 1 || bits != 16 {
        return Err(VcError::NonPcmWav {
            path: pstr,
            detail: format!("format tag {format}, {bits} bits per sample"),
        });
    }
    if channels != 1 {
        return Err(VcError::MultichannelWav {
            path: pstr,
            channels,
        });
    }

    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, rate)
}

/// Write a waveform as 16-bit PCM mono. Samples are clamped to [-1, 1].
pub fn save_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let n = w.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for s in &w.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| VcError::io(&pstr, e))
}
