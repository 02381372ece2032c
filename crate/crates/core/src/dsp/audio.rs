use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

const PCM_SCALE: f64 = 32768.0;

/// Mono 16 kHz audio with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
}

impl AudioClip {
    /// Rejects non-finite samples and samples outside `[-1, 1]`.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "audio sample {bad} outside [-1, 1]"
            )));
        }
        Ok(Self { samples })
    }

    /// Hard-clips to `[-1, 1]`, returning the clip and how many samples were
    /// clipped. Non-finite samples are an error.
    pub fn clipped(mut samples: Vec<f64>) -> Result<(Self, usize)> {
        let mut count = 0;
        for s in &mut samples {
            if !s.is_finite() {
                return Err(Error::NonFinite("audio synthesis".into()));
            }
            if s.abs() > 1.0 {
                *s = s.clamp(-1.0, 1.0);
                count += 1;
            }
        }
        if count > 0 {
            warn!("clipped {count} of {} samples to [-1, 1]", samples.len());
        }
        Ok((Self { samples }, count))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a RIFF/WAVE PCM 16-bit mono 16 kHz file image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| Error::Wav("truncated fmt chunk".into()))?;
                if end - body < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let mut tag = le_u16(bytes, body);
                // WAVE_FORMAT_EXTENSIBLE carries the real format in its sub-GUID.
                if tag == 0xFFFE && end - body >= 26 {
                    tag = le_u16(bytes, body + 24);
                }
                format = Some((
                    tag,
                    le_u16(bytes, body + 2),
                    le_u32(bytes, body + 4),
                    le_u16(bytes, body + 14),
                ));
            }
            b"data" => {
                // Streaming writers leave a placeholder size; take what is there.
                let end = end.unwrap_or(bytes.len());
                data = Some(&bytes[body..end]);
            }
            _ => {}
        }
        pos = body.saturating_add(size + (size & 1));
    }
    let (tag, channels, rate, bits) =
        format.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    if tag != 1 {
        return Err(Error::Wav(format!(
            "unsupported format tag {tag} (want PCM)"
        )));
    }
    if channels != 1 {
        return Err(Error::Wav(format!(
            "expected mono, got {channels} channels"
        )));
    }
    if rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(rate));
    }
    if bits != 16 {
        return Err(Error::Wav(format!("expected 16-bit samples, got {bits}")));
    }
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / PCM_SCALE)
        .collect();
    Ok(AudioClip { samples })
}

/// Quantizes to PCM-16 with round-half-away-from-zero.
pub fn quantize(sample: f64) -> i16 {
    (sample * PCM_SCALE)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = (clip.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_wav(&bytes).map_err(|e| match e {
        Error::Wav(msg) => Error::Wav(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    fs::write(path, encode_wav(clip))?;
    Ok(())
}
