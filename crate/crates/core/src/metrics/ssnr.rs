use crate::dsp::AudioClip;
use crate::error::{shape_err, Error, Result};

/// 20 ms at 16 kHz.
pub const SSNR_SEGMENT: usize = 320;
pub const SSNR_MIN_DB: f64 = -10.0;
pub const SSNR_MAX_DB: f64 = 35.0;
/// Segments whose reference energy falls below this are skipped.
pub const SSNR_SILENCE_ENERGY: f64 = 1e-8;

/// Segmental SNR in dB: mean over non-overlapping 20 ms segments (the last
/// one may be shorter) of the per-segment SNR clipped to [-10, 35].
pub fn ssnr(reference: &AudioClip, test: &AudioClip) -> Result<f64> {
    ssnr_samples(reference.samples(), test.samples())
}

pub fn ssnr_samples(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.len() != test.len() {
        return shape_err(
            "ssnr",
            format!("{} vs {} samples", reference.len(), test.len()),
        );
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, t) in reference
        .chunks(SSNR_SEGMENT)
        .zip(test.chunks(SSNR_SEGMENT))
    {
        let signal: f64 = r.iter().map(|v| v * v).sum();
        if signal < SSNR_SILENCE_ENERGY {
            continue;
        }
        let error: f64 = r.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let snr = if error == 0.0 {
            SSNR_MAX_DB
        } else {
            10.0 * (signal / error).log10()
        };
        total += snr.clamp(SSNR_MIN_DB, SSNR_MAX_DB);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Metric(
            "ssnr: every reference segment is silent".into(),
        ));
    }
    Ok(total / count as f64)
}
