use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::audio::AudioClip;
use crate::error::{Error, Result};

/// A synthesized noisy utterance and how it was made.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub noisy: AudioClip,
    /// `g * noise_segment`, exactly what was added to the clean signal.
    pub scaled_noise: Vec<f64>,
    pub gain: f64,
    pub offset: usize,
    /// Samples hard-clipped to `[-1, 1]` in `noisy`.
    pub clipped: usize,
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// `len` samples of `noise` read circularly from `offset`.
pub fn noise_segment(noise: &[f64], offset: usize, len: usize) -> Vec<f64> {
    noise
        .iter()
        .cycle()
        .skip(offset)
        .take(len)
        .copied()
        .collect()
}

/// Adds noise to `clean` at `snr_db` (full-utterance RMS). The noise segment
/// starts at a circular offset drawn from `seed`.
pub fn mix_at_snr(clean: &AudioClip, noise: &AudioClip, snr_db: f64, seed: u64) -> Result<Mixture> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "snr must be finite, got {snr_db}"
        )));
    }
    if noise.len() < clean.len() {
        return Err(Error::InvalidArgument(format!(
            "noise has {} samples, clean needs {}",
            noise.len(),
            clean.len()
        )));
    }
    let clean_rms = rms(clean.samples());
    if clean_rms == 0.0 {
        return Err(Error::InvalidArgument("clean signal is silent".into()));
    }
    let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0..noise.len());
    let segment = noise_segment(noise.samples(), offset, clean.len());
    let noise_rms = rms(&segment);
    if noise_rms == 0.0 {
        return Err(Error::InvalidArgument("noise segment is silent".into()));
    }
    let gain = clean_rms / (noise_rms * 10f64.powf(snr_db / 20.0));
    let scaled_noise: Vec<f64> = segment.iter().map(|n| gain * n).collect();
    let mixed = clean
        .samples()
        .iter()
        .zip(&scaled_noise)
        .map(|(c, n)| c + n)
        .collect();
    let (noisy, clipped) = AudioClip::clipped(mixed)?;
    Ok(Mixture {
        noisy,
        scaled_noise,
        gain,
        offset,
        clipped,
    })
}
