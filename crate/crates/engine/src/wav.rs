//! 16-bit PCM mono WAV files.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a 16-bit PCM mono WAV: {0}")]
    Format(&'static str),
}

/// `round(x * 32767)`, saturating; so +1.0 maps to 32767.
#[inline]
pub fn quantize(x: f32) -> i16 {
    let v = (x as f64 * 32767.0).round();
    v.clamp(-32768.0, 32767.0) as i16
}

#[inline]
pub fn dequantize(v: i16) -> f32 {
    (v as f32 / 32767.0).max(-1.0)
}

/// Encodes samples as a RIFF/WAVE PCM 16-bit mono file image.
pub fn encode(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

/// Decodes a PCM 16-bit mono file image into `(sample_rate, samples)`.
pub fn decode(bytes: &[u8]) -> Result<(u32, Vec<f32>), WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::Format("missing RIFF/WAVE header"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let mut pos = 12;
    let mut rate = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(pos + 4) as usize;
        let body = pos + 8;
        if body + len > bytes.len() {
            return Err(WavError::Format("chunk extends past end of file"));
        }
        match id {
            b"fmt " => {
                if len < 16 || u16_at(body) != 1 || u16_at(body + 2) != 1 || u16_at(body + 14) != 16 {
                    return Err(WavError::Format("expected PCM, 1 channel, 16 bits"));
                }
                rate = Some(u32_at(body + 4));
            }
            b"data" => {
                let rate = rate.ok_or(WavError::Format("data chunk before fmt chunk"))?;
                let samples = bytes[body..body + len]
                    .chunks_exact(2)
                    .map(|c| dequantize(i16::from_le_bytes([c[0], c[1]])))
                    .collect();
                return Ok((rate, samples));
            }
            _ => {}
        }
        pos = body + len + (len & 1);
    }
    Err(WavError::Format("no data chunk"))
}

pub fn write_wav(samples: &[f32], sample_rate: u32, path: &Path) -> Result<(), WavError> {
    fs::write(path, encode(samples, sample_rate)).map_err(|source| WavError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_wav(path: &Path) -> Result<(u32, Vec<f32>), WavError> {
    let bytes = fs::read(path).map_err(|source| WavError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}
