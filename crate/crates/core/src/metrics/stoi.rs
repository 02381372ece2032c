//! Short-time objective intelligibility, numerically following the widely
//! used `pystoi` implementation: Octave-compatible Kaiser-windowed polyphase
//! resampling to 10 kHz, energy VAD, one-third-octave envelopes and
//! per-segment correlation.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use realfft::{RealFftPlanner, RealToComplex};

use crate::dsp::{AudioClip, SAMPLE_RATE};
use crate::error::{shape_err, Error, Result};

pub const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per correlation segment (384 ms).
pub const STOI_SEGMENT_FRAMES: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

// 16 kHz -> 10 kHz is up 5, down 8.
const UP: usize = 5;
const DOWN: usize = 8;

pub fn stoi(reference: &AudioClip, test: &AudioClip) -> Result<f64> {
    stoi_samples(reference.samples(), test.samples())
}

/// STOI of 16 kHz sample vectors.
pub fn stoi_samples(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.len() != test.len() {
        return shape_err(
            "stoi",
            format!("{} vs {} samples", reference.len(), test.len()),
        );
    }
    debug_assert_eq!(SAMPLE_RATE * UP as u32 / DOWN as u32, STOI_RATE);
    let x = resample_to_10k(reference);
    let y = resample_to_10k(test);
    let (x, y) = remove_silent_frames(&x, &y)?;
    let x_tob = band_envelopes(&x);
    let y_tob = band_envelopes(&y);
    let frames = x_tob.len();
    if frames < STOI_SEGMENT_FRAMES {
        return Err(Error::Metric(format!(
            "stoi: {frames} speech-active frames after silence removal, need {STOI_SEGMENT_FRAMES} (384 ms)"
        )));
    }
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let segments = frames - STOI_SEGMENT_FRAMES + 1;
    let mut sum = 0.0;
    let mut xs = [0.0; STOI_SEGMENT_FRAMES];
    let mut ys = [0.0; STOI_SEGMENT_FRAMES];
    for start in 0..segments {
        for band in 0..BANDS {
            for j in 0..STOI_SEGMENT_FRAMES {
                xs[j] = x_tob[start + j][band];
                ys[j] = y_tob[start + j][band];
            }
            let scale = norm(&xs) / (norm(&ys) + EPS);
            for (yv, xv) in ys.iter_mut().zip(&xs) {
                *yv = (*yv * scale).min(xv * clip);
            }
            center(&mut ys);
            center(&mut xs);
            let (ny, nx) = (norm(&ys) + EPS, norm(&xs) + EPS);
            sum += ys
                .iter()
                .zip(&xs)
                .map(|(a, b)| (a / ny) * (b / nx))
                .sum::<f64>();
        }
    }
    Ok(sum / (segments * BANDS) as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= mean);
}

fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let q = x * x / 4.0;
    for k in 1..500 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Anti-aliasing filter: Kaiser-windowed sinc, 60 dB rejection, cutoff at
/// half the lower of the two Nyquist rates, normalized to unit DC gain.
fn resample_filter() -> &'static [f64] {
    static FILTER: OnceLock<Vec<f64>> = OnceLock::new();
    FILTER.get_or_init(|| {
        let rejection_db = 60.0;
        let cutoff = 1.0 / (2 * UP.max(DOWN)) as f64;
        let roll_off = cutoff / 10.0;
        let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
        let beta = 0.1102 * (rejection_db - 8.7);
        let m = (2 * half + 1) as f64;
        let mut h: Vec<f64> = (-half..=half)
            .enumerate()
            .map(|(n, t)| {
                let r = 2.0 * n as f64 / (m - 1.0) - 1.0;
                let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta);
                let arg = 2.0 * cutoff * t as f64;
                let sinc = if t == 0 {
                    1.0
                } else {
                    (PI * arg).sin() / (PI * arg)
                };
                kaiser * 2.0 * UP as f64 * cutoff * sinc
            })
            .collect();
        let total: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v *= UP as f64 / total);
        h
    })
}

/// Polyphase 16 kHz -> 10 kHz resampling with zero-padded edges; output
/// length `ceil(n * 5 / 8)`.
pub fn resample_to_10k(x: &[f64]) -> Vec<f64> {
    let h = resample_filter();
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() * UP).div_ceil(DOWN);
    (0..n_out)
        .map(|m| {
            // tap index k = half + m*down - n*up must lie in [0, len)
            let centre = half + m * DOWN;
            let lo = (centre + UP).saturating_sub(h.len()) / UP;
            let hi = (centre / UP).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            let mut n = lo;
            while n <= hi {
                let k = centre - n * UP;
                if k < h.len() {
                    acc += x[n] * h[k];
                }
                n += 1;
            }
            acc
        })
        .collect()
}

/// `hanning(n + 2)[1..=n]`, the MATLAB-style window without zero endpoints.
fn hanning(n: usize) -> Vec<f64> {
    let m = (n + 2) as f64;
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (m - 1.0)).cos())
        .collect()
}

/// Frame starts `0, hop, ...` strictly below `len - frame`.
fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drops frames of both signals where the reference is more than 40 dB below
/// its loudest frame, then overlap-adds the survivors.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = hanning(FRAME);
    let window = |s: &[f64], i: usize| -> Vec<f64> {
        w.iter().zip(&s[i..i + FRAME]).map(|(a, b)| a * b).collect()
    };
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    if starts.is_empty() {
        return Err(Error::Metric(format!(
            "stoi: clip of {} samples at 10 kHz is shorter than one frame",
            x.len()
        )));
    }
    let x_frames: Vec<Vec<f64>> = starts.iter().map(|&i| window(x, i)).collect();
    let energies: Vec<f64> = x_frames
        .iter()
        .map(|f| 20.0 * (norm(f) + EPS).log10())
        .collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = (0..starts.len())
        .filter(|&i| max - DYN_RANGE_DB - energies[i] < 0.0)
        .collect();
    let len = (keep.len() - 1) * HOP + FRAME;
    let mut xs = vec![0.0; len];
    let mut ys = vec![0.0; len];
    for (j, &i) in keep.iter().enumerate() {
        let yf = window(y, starts[i]);
        for n in 0..FRAME {
            xs[j * HOP + n] += x_frames[i][n];
            ys[j * HOP + n] += yf[n];
        }
    }
    Ok((xs, ys))
}

/// One-third-octave band edges as FFT bin ranges `[lo, hi)`.
fn band_bins() -> &'static [(usize, usize); BANDS] {
    static BINS: OnceLock<[(usize, usize); BANDS]> = OnceLock::new();
    BINS.get_or_init(|| {
        let nearest = |freq: f64| {
            (0..=NFFT / 2)
                .min_by(|&a, &b| {
                    let fa = a as f64 * STOI_RATE as f64 / NFFT as f64 - freq;
                    let fb = b as f64 * STOI_RATE as f64 / NFFT as f64 - freq;
                    (fa * fa).total_cmp(&(fb * fb))
                })
                .unwrap()
        };
        std::array::from_fn(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
    })
}

/// Per frame, the square root of summed spectral power in each band.
fn band_envelopes(x: &[f64]) -> Vec<[f64; BANDS]> {
    let fft: Arc<dyn RealToComplex<f64>> = RealFftPlanner::new().plan_fft_forward(NFFT);
    let w = hanning(FRAME);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let bins = band_bins();
    frame_starts(x.len())
        .map(|i| {
            input.iter_mut().for_each(|v| *v = 0.0);
            for n in 0..FRAME {
                input[n] = w[n] * x[i + n];
            }
            fft.process(&mut input, &mut spectrum).expect("plan sizes");
            std::array::from_fn(|b| {
                let (lo, hi) = bins[b];
                spectrum[lo..hi]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
        })
        .collect()
}
