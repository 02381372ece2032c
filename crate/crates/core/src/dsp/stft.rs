//! 20 ms / 10 ms STFT log-power features and overlap-add resynthesis.
//!
//! Frames are taken from the clip with one hop of leading zeros and enough
//! trailing zeros that every original sample lies under exactly two frames,
//! so resynthesis is exact across the whole clip. Each windowed frame is
//! rotated by half its length before the transform, which references phase
//! to the frame centre.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::audio::AudioClip;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

pub const FRAME_LEN: usize = 320;
pub const HOP: usize = 160;
pub const NUM_BINS: usize = FRAME_LEN / 2 + 1;
/// Power floor applied before the natural log.
pub const POWER_FLOOR: f64 = 1e-10;

/// Log-power and phase of one utterance, both `[NUM_BINS, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectroFrameSequence {
    pub log_power: Tensor,
    pub phase: Tensor,
    pub num_samples: usize,
}

impl SpectroFrameSequence {
    pub fn num_frames(&self) -> usize {
        self.log_power.shape()[1]
    }

    /// `|X| = exp(log_power / 2)` as a `[NUM_BINS, T]` tensor.
    pub fn magnitude(&self) -> Tensor {
        let data = self
            .log_power
            .data()
            .iter()
            .map(|v| (v / 2.0).exp())
            .collect();
        Tensor::from_parts(self.log_power.shape().to_vec(), data)
    }
}

/// Number of frames for a clip of `num_samples` samples.
pub fn num_frames(num_samples: usize) -> usize {
    num_samples.max(1).div_ceil(HOP) + 1
}

/// Length of the zero-padded signal the frames are cut from.
pub fn padded_len(num_samples: usize) -> usize {
    HOP * (num_frames(num_samples) + 1)
}

/// Periodic Hann window of `FRAME_LEN` points.
pub fn hann_window() -> Vec<f64> {
    (0..FRAME_LEN)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / FRAME_LEN as f64).cos())
        .collect()
}

/// Reusable transform plans and window.
pub struct Stft {
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let mut planner = RealFftPlanner::new();
        Self {
            window: hann_window(),
            forward: planner.plan_fft_forward(FRAME_LEN),
            inverse: planner.plan_fft_inverse(FRAME_LEN),
        }
    }

    /// Complex spectra, one `Vec` of `NUM_BINS` per frame.
    pub fn spectra(&self, samples: &[f64]) -> Vec<Vec<Complex<f64>>> {
        let t_len = num_frames(samples.len());
        let mut padded = vec![0.0; padded_len(samples.len())];
        padded[HOP..HOP + samples.len()].copy_from_slice(samples);
        let mut frame = vec![0.0; FRAME_LEN];
        let mut scratch = self.forward.make_scratch_vec();
        (0..t_len)
            .map(|t| {
                let src = &padded[t * HOP..t * HOP + FRAME_LEN];
                for ((d, s), w) in frame.iter_mut().zip(src).zip(&self.window) {
                    *d = s * w;
                }
                frame.rotate_left(FRAME_LEN / 2);
                let mut spec = self.forward.make_output_vec();
                self.forward
                    .process_with_scratch(&mut frame, &mut spec, &mut scratch)
                    .expect("buffer sizes come from the plan");
                spec
            })
            .collect()
    }

    pub fn analyze(&self, clip: &AudioClip) -> Result<SpectroFrameSequence> {
        if clip.is_empty() {
            return Err(Error::InvalidArgument("stft of an empty clip".into()));
        }
        let spectra = self.spectra(clip.samples());
        let t_len = spectra.len();
        let mut log_power = vec![0.0; NUM_BINS * t_len];
        let mut phase = vec![0.0; NUM_BINS * t_len];
        for (t, spec) in spectra.iter().enumerate() {
            for (k, c) in spec.iter().enumerate() {
                log_power[k * t_len + t] = c.norm_sqr().max(POWER_FLOOR).ln();
                let mut p = c.arg();
                if p <= -PI {
                    p += 2.0 * PI;
                }
                phase[k * t_len + t] = p;
            }
        }
        Ok(SpectroFrameSequence {
            log_power: Tensor::from_parts(vec![NUM_BINS, t_len], log_power),
            phase: Tensor::from_parts(vec![NUM_BINS, t_len], phase),
            num_samples: clip.len(),
        })
    }

    /// Overlap-add resynthesis of `[NUM_BINS, T]` log-power with the given
    /// phase, normalized by the summed squared window. Samples are returned
    /// unclipped.
    pub fn synthesize_samples(
        &self,
        log_power: &Tensor,
        phase: &Tensor,
        num_samples: usize,
    ) -> Result<Vec<f64>> {
        if log_power.shape().len() != 2 || log_power.shape()[0] != NUM_BINS {
            return shape_err(
                "istft",
                format!("log-power {:?}, want [161, T]", log_power.shape()),
            );
        }
        if phase.shape() != log_power.shape() {
            return shape_err(
                "istft",
                format!(
                    "phase {:?} vs log-power {:?}",
                    phase.shape(),
                    log_power.shape()
                ),
            );
        }
        let t_len = log_power.shape()[1];
        let total = HOP * (t_len + 1);
        if HOP + num_samples > HOP * t_len {
            return shape_err(
                "istft",
                format!("{t_len} frames cannot cover {num_samples} samples"),
            );
        }
        let mut acc = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut spec = self.inverse.make_input_vec();
        let mut frame = self.inverse.make_output_vec();
        let mut scratch = self.inverse.make_scratch_vec();
        let (lp, ph) = (log_power.data(), phase.data());
        for t in 0..t_len {
            for (k, c) in spec.iter_mut().enumerate() {
                let mag = (lp[k * t_len + t] / 2.0).exp();
                *c = Complex::from_polar(mag, ph[k * t_len + t]);
            }
            // A real frame has purely real DC and Nyquist bins.
            spec[0].im = 0.0;
            spec[NUM_BINS - 1].im = 0.0;
            self.inverse
                .process_with_scratch(&mut spec, &mut frame, &mut scratch)
                .expect("buffer sizes come from the plan");
            frame.rotate_right(FRAME_LEN / 2);
            let base = t * HOP;
            for (n, (&y, &w)) in frame.iter().zip(&self.window).enumerate() {
                acc[base + n] += w * y / FRAME_LEN as f64;
                norm[base + n] += w * w;
            }
        }
        Ok(acc[HOP..HOP + num_samples]
            .iter()
            .zip(&norm[HOP..HOP + num_samples])
            .map(|(a, n)| if *n > 1e-8 { a / n } else { 0.0 })
            .collect())
    }
}

pub fn stft(clip: &AudioClip) -> Result<SpectroFrameSequence> {
    Stft::new().analyze(clip)
}

/// Rebuilds audio from log-power and phase; output is clipped to `[-1, 1]`.
pub fn istft_with_phase(
    log_power: &Tensor,
    phase: &Tensor,
    num_samples: usize,
) -> Result<AudioClip> {
    let samples = Stft::new().synthesize_samples(log_power, phase, num_samples)?;
    Ok(AudioClip::clipped(samples)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        for n in [1, 159, 160, 161, 319, 320, 321, 16000] {
            let t = num_frames(n);
            assert_eq!(t, (padded_len(n) - FRAME_LEN) / HOP + 1);
            // every sample is under two frames
            assert!(HOP + n <= HOP * t);
        }
    }

    #[test]
    fn zero_signal_is_floored() {
        let seq = stft(&AudioClip::new(vec![0.0; 800]).unwrap()).unwrap();
        assert_eq!(seq.log_power.shape(), &[NUM_BINS, num_frames(800)]);
        assert!(seq.log_power.data().iter().all(|&v| v == POWER_FLOOR.ln()));
    }

    #[test]
    fn empty_clip_is_rejected() {
        assert!(stft(&AudioClip::new(vec![]).unwrap()).is_err());
    }

    #[test]
    fn synthesis_shape_checks() {
        let lp = Tensor::zeros([NUM_BINS, 4]);
        assert!(istft_with_phase(&lp, &Tensor::zeros([NUM_BINS, 3]), 100).is_err());
        assert!(istft_with_phase(&lp, &lp, 10_000).is_err());
        assert!(istft_with_phase(&Tensor::zeros([10, 4]), &Tensor::zeros([10, 4]), 10).is_err());
    }
}
