//! Measurements shared by the focused test files and the acceptance run.

#![allow(dead_code)]

use grucnn::model::{grucnn_step, GruCnnParams, GruCnnState};
use grucnn::tensor::{Tape, Tensor, Var};
use rand::Rng;

use super::oracle::{self, GruWeights};
use super::{rng, tensor};

pub struct GruInstance {
    pub k: usize,
    pub ci: usize,
    pub c: usize,
    /// w_zh, w_zx, w_rh, w_rx, w_hh, w_hx, b_z, b_r, b_h
    pub weights: Vec<Tensor>,
}

impl GruInstance {
    pub fn random(seed: u64, k: usize, ci: usize, c: usize, scale: f64) -> Self {
        let mut r = rng(seed);
        let mut weights = Vec::new();
        for _ in 0..3 {
            weights.push(tensor(&[3, c, c], &mut r, scale));
            weights.push(tensor(&[3, ci, c], &mut r, scale));
        }
        for _ in 0..3 {
            weights.push(tensor(&[c], &mut r, scale));
        }
        Self { k, ci, c, weights }
    }

    pub fn params(&self, tape: &mut Tape) -> GruCnnParams {
        let v: Vec<Var> = self.weights.iter().map(|w| tape.param(w.clone())).collect();
        GruCnnParams {
            w_zh: v[0].clone(),
            w_zx: v[1].clone(),
            w_rh: v[2].clone(),
            w_rx: v[3].clone(),
            w_hh: v[4].clone(),
            w_hx: v[5].clone(),
            b_z: v[6].clone(),
            b_r: v[7].clone(),
            b_h: v[8].clone(),
        }
    }

    pub fn reference(&self) -> GruWeights<'_> {
        let d = |i: usize| self.weights[i].data();
        GruWeights {
            wzh: d(0),
            wzx: d(1),
            wrh: d(2),
            wrx: d(3),
            whh: d(4),
            whx: d(5),
            bz: d(6),
            br: d(7),
            bh: d(8),
        }
    }
}

/// Largest deviation between the library cell and the scalar-loop oracle,
/// over `instances` random cells each run for a few frames from `H_0 = 0`.
pub fn grucnn_oracle_gap(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let (k, ci, c) = (r.gen_range(1..10), r.gen_range(1..4), r.gen_range(1..5));
        let cell = GruInstance::random(seed, k, ci, c, 1.0);
        let mut tape = Tape::new();
        let p = cell.params(&mut tape);
        let mut state = GruCnnState::zeros(&tape, k, c);
        let mut h_ref = vec![0.0; k * c];
        for _ in 0..4 {
            let x = tensor(&[k, ci], &mut r, 2.0);
            let expect = oracle::grucnn(&cell.reference(), &h_ref, x.data(), k, c, ci);
            let xv = tape.constant(x);
            let (step, next) = grucnn_step(&mut tape, &p, &state, &xv).unwrap();
            for (got, want) in [
                (step.update.data(), &expect.z),
                (step.reset.data(), &expect.r),
                (step.candidate.data(), &expect.cand),
                (step.hidden.data(), &expect.h),
            ] {
                for (a, b) in got.iter().zip(want.iter()) {
                    worst = worst.max((a - b).abs());
                }
            }
            h_ref = expect.h;
            state = next;
        }
    }
    worst
}

#[derive(Debug, Default)]
pub struct BoundsReport {
    pub steps: usize,
    pub max_abs_hidden: f64,
    pub min_gate: f64,
    pub max_gate: f64,
}

impl BoundsReport {
    pub fn holds(&self) -> bool {
        self.max_abs_hidden < 1.0 && self.min_gate > 0.0 && self.max_gate < 1.0
    }
}

/// Runs one cell for `steps` frames of random input from `H_0 = 0` and
/// records the extreme hidden and gate values.
pub fn grucnn_bounds(steps: usize, seed: u64) -> BoundsReport {
    let (k, ci, c) = (9, 2, 4);
    let cell = GruInstance::random(seed, k, ci, c, 0.6);
    let mut r = rng(seed ^ 0xF00D);
    let mut tape = Tape::inference();
    let p = cell.params(&mut tape);
    let mut state = GruCnnState::zeros(&tape, k, c);
    let mut rep = BoundsReport {
        steps,
        max_abs_hidden: 0.0,
        min_gate: 1.0,
        max_gate: 0.0,
    };
    for _ in 0..steps {
        let x = tape.constant(tensor(&[k, ci], &mut r, 3.0));
        let (step, next) = grucnn_step(&mut tape, &p, &state, &x).unwrap();
        for g in step.update.data().iter().chain(step.reset.data()) {
            rep.min_gate = rep.min_gate.min(*g);
            rep.max_gate = rep.max_gate.max(*g);
        }
        for h in step.hidden.data() {
            rep.max_abs_hidden = rep.max_abs_hidden.max(h.abs());
        }
        state = next;
    }
    rep
}

use grucnn::dsp::{mix_at_snr, AudioClip, Stft, HOP};
use grucnn::train::{TEST_SNRS, TRAIN_SNRS};

/// Worst interior reconstruction error of stft followed by noisy-phase
/// resynthesis over `clips` random one-second clips. Interior excludes one
/// hop at each end.
pub fn stft_roundtrip_worst(clips: u64) -> f64 {
    let stft = Stft::new();
    let mut worst: f64 = 0.0;
    for seed in 0..clips {
        let mut r = rng(5000 + seed);
        let samples = super::uniform(&mut r, 16_000, 0.9);
        let clip = AudioClip::new(samples.clone()).unwrap();
        let frames = stft.analyze(&clip).unwrap();
        let back = stft
            .synthesize_samples(&frames.log_power, &frames.phase, clip.len())
            .unwrap();
        for i in HOP..clip.len() - HOP {
            worst = worst.max((back[i] - samples[i]).abs());
        }
    }
    worst
}

/// Largest |achieved - requested| SNR in dB over all eight SNR points, with
/// the achieved value measured as `10 log10(sum c^2 / sum (noisy - c)^2)`.
pub fn mix_snr_worst() -> f64 {
    let clean = super::speechlike(1.0, 7);
    let noise = super::white_noise(1.5, 0.3, 8);
    let mut worst: f64 = 0.0;
    for (i, &snr) in TRAIN_SNRS.iter().chain(TEST_SNRS.iter()).enumerate() {
        let mix = mix_at_snr(&clean, &noise, snr, i as u64).unwrap();
        assert_eq!(mix.clipped, 0);
        let mut sig = 0.0;
        let mut err = 0.0;
        for (n, c) in mix.noisy.samples().iter().zip(clean.samples()) {
            sig += c * c;
            err += (n - c) * (n - c);
        }
        worst = worst.max((10.0 * (sig / err).log10() - snr).abs());
    }
    worst
}

use grucnn::model::{Architecture, Model, ModelSpec};

/// A two-layer CNN-FC whose weights copy the input log-power to the output:
/// centre taps route the single input channel through channel 0, PReLU
/// slopes of 1 make the activation linear, and the head reads channel 0 of
/// each bin.
pub fn identity_model(channels: usize) -> Model {
    let spec = ModelSpec::table1(Architecture::CnnFc)
        .with_channels(channels)
        .with_conv_layers(2);
    let mut model = Model::init(spec, 0).unwrap();
    let bins = grucnn::dsp::NUM_BINS;
    for (name, t) in model.params_mut().iter_mut() {
        let shape = t.shape().to_vec();
        let data = t.data_mut();
        data.iter_mut().for_each(|v| *v = 0.0);
        if name.ends_with(".kernel") {
            // [freq tap, time tap, in, out]; tap (1, 2) is (same bin, current frame)
            let (ci, co) = (shape[2], shape[3]);
            data[(3 + 2) * ci * co] = 1.0;
        } else if name.ends_with(".prelu") {
            data.iter_mut().for_each(|v| *v = 1.0);
        } else if name.ends_with("fc.weight") {
            for k in 0..bins {
                data[(k * channels) * bins + k] = 1.0;
            }
        }
    }
    model
}

/// Hand-derived parameter count per row of the layer stack, for a stack of `convs`
/// feature layers with `c` channels on 161 bins (pools after every second
/// layer except the last pair), written out independently of the library.
pub fn closed_form_rows(
    arch: Architecture,
    c: usize,
    convs: usize,
    lstm_hidden: usize,
) -> Vec<usize> {
    let mut rows = Vec::new();
    let mut bins: usize = 161;
    for i in 0..convs {
        let cin = if i == 0 { 1 } else { c };
        rows.push(match arch {
            // 3x3 kernel, bias, PReLU slope per channel
            Architecture::CnnFc | Architecture::CnnLstm => 9 * cin * c + c + c,
            // three gates, each a width-3 kernel on H and on X plus a bias
            Architecture::GruCnnFc => 3 * (3 * c * c + 3 * cin * c + c),
        });
        if i % 2 == 1 && i + 1 < convs {
            rows.push(0);
            bins = bins.div_ceil(2);
        }
    }
    let n = bins * c;
    rows.push(match arch {
        Architecture::CnnLstm => {
            4 * (n * lstm_hidden + lstm_hidden * lstm_hidden + lstm_hidden)
                + lstm_hidden * 161
                + 161
        }
        _ => n * 161 + 161,
    });
    rows
}
