#![allow(dead_code)]

pub mod checks;
pub mod gradcheck;
pub mod oracle;

use std::f64::consts::PI;

use grucnn::dsp::{AudioClip, SAMPLE_RATE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Voiced-speech stand-in: a few harmonics of a gliding pitch under a
/// syllable-rate envelope.
pub fn speechlike(seconds: f64, seed: u64) -> AudioClip {
    let mut r = rng(seed);
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let f0 = r.gen_range(110.0..220.0);
    let rate = r.gen_range(3.0..5.0);
    let amps: Vec<f64> = (1..=6).map(|h| r.gen_range(0.3..1.0) / h as f64).collect();
    let mut phase = 0.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let f = f0 * (1.0 + 0.1 * (2.0 * PI * 0.7 * t).sin());
            phase += 2.0 * PI * f / SAMPLE_RATE as f64;
            let env = (0.5 - 0.5 * (2.0 * PI * rate * t).cos()).powi(2);
            let v: f64 = amps
                .iter()
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
                .sum();
            0.25 * env * v
        })
        .collect();
    AudioClip::new(samples).unwrap()
}

pub fn white_noise(seconds: f64, scale: f64, seed: u64) -> AudioClip {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    AudioClip::new(uniform(&mut rng(seed), n, scale)).unwrap()
}

pub fn tensor(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> grucnn::tensor::Tensor {
    let n = shape.iter().product();
    grucnn::tensor::Tensor::new(shape.to_vec(), uniform(rng, n, scale)).unwrap()
}

/// pystoi 0.4.1 on `stoi_pair(0..10)`, produced by tests/oracle/stoi_reference.py.
pub const PYSTOI: [f64; 10] = [
    0.7220654377583424,
    0.7036836965019391,
    0.7325651971255763,
    0.7526455379530608,
    0.8367720408199254,
    0.794289879388469,
    0.775286177152244,
    0.8557552814604859,
    0.891724143783062,
    0.8420004452517844,
];

/// Reference/degraded pairs for comparing STOI against an outside
/// implementation: speech-like signals with silent gaps, white noise at
/// SNRs from -5 to 20 dB, a few lengths.
pub fn stoi_pair(i: u64) -> (AudioClip, AudioClip) {
    let seconds = 1.5 + 0.25 * (i % 4) as f64;
    let clean = speechlike(seconds, 300 + i);
    let mut samples = clean.into_samples();
    // a stretch of silence that the VAD must drop
    let gap = samples.len() / 3;
    samples[gap..gap + 2000].iter_mut().for_each(|v| *v = 0.0);
    let clean = AudioClip::new(samples).unwrap();
    let noise = white_noise(seconds + 0.5, 0.5, 400 + i);
    let snr = -5.0 + 2.5 * i as f64;
    let mix = grucnn::dsp::mix_at_snr(&clean, &noise, snr, i).unwrap();
    (clean, mix.noisy)
}

/// Constant-level harmonic tone: segment energies are all alike, so
/// segmental and global SNR coincide closely.
pub fn steady_tone(seconds: f64, f0: f64) -> AudioClip {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            (1..=4)
                .map(|h| 0.1 / h as f64 * (2.0 * PI * f0 * h as f64 * t).sin())
                .sum()
        })
        .collect();
    AudioClip::new(samples).unwrap()
}
