//! Central finite differences against the tape's reverse sweep.

#![allow(dead_code)]

use grucnn::tensor::{Tape, Tensor, Var};
use grucnn::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Relative error with a small floor so exact zeros compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Projects an arbitrary output onto a fixed weight tensor so every element
/// contributes a distinct amount to the scalar loss.
pub fn project(tape: &mut Tape, out: &Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.hadamard(out, &w)?;
    tape.sum(&prod)
}

/// Worst relative error between the analytic gradient of `f` with respect to
/// every input and central differences with step `STEP`.
pub fn max_grad_error(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.backward(&loss).unwrap();
    let eval = |inputs: &[Tensor]| {
        let mut t = Tape::inference();
        let vars: Vec<Var> = inputs.iter().map(|x| t.param(x.clone())).collect();
        f(&mut t, &vars).unwrap().data()[0]
    };
    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = tape.grad(var).unwrap_or_else(|| Tensor::zeros(var.shape()));
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + STEP;
            let up = eval(&probe);
            probe[i].data_mut()[j] = orig - STEP;
            let down = eval(&probe);
            probe[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    worst
}

use grucnn::model::{grucnn_step, lstm_step, GruCnnParams, GruCnnState, LstmParams, LstmState};
use rand::Rng;

use super::{rng, tensor};

fn conv1d_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, ci, co) = (r.gen_range(1..7), r.gen_range(1..4), r.gen_range(1..4));
    let inputs = [
        tensor(&[k, ci], &mut r, 1.0),
        tensor(&[3, ci, co], &mut r, 1.0),
        tensor(&[co], &mut r, 1.0),
    ];
    let proj = tensor(&[k, co], &mut r, 1.0);
    max_grad_error(&inputs, |t, v| {
        let y = t.conv1d_freq(&v[0], &v[1], Some(&v[2]))?;
        project(t, &y, &proj)
    })
}

fn conv2d_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, tl, ci, co) = (
        r.gen_range(1..5),
        r.gen_range(1..5),
        r.gen_range(1..3),
        r.gen_range(1..3),
    );
    let inputs = [
        tensor(&[k, tl, ci], &mut r, 1.0),
        tensor(&[3, 3, ci, co], &mut r, 1.0),
        tensor(&[co], &mut r, 1.0),
    ];
    let proj = tensor(&[k, tl, co], &mut r, 1.0);
    max_grad_error(&inputs, |t, v| {
        let y = t.conv2d_causal(&v[0], &v[1], Some(&v[2]))?;
        project(t, &y, &proj)
    })
}

/// Inputs are a shuffled grid with spacing 0.1 so no pair is near a tie.
fn maxpool_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, c) = (r.gen_range(1..8), r.gen_range(1..4));
    let mut vals: Vec<f64> = (0..k * c).map(|i| i as f64 * 0.1 - 1.0).collect();
    rand::seq::SliceRandom::shuffle(vals.as_mut_slice(), &mut r);
    let x = Tensor::new([k, c], vals).unwrap();
    let proj = tensor(&[k.div_ceil(2), c], &mut r, 1.0);
    max_grad_error(&[x], |t, v| {
        let y = t.maxpool_freq2(&v[0])?;
        project(t, &y, &proj)
    })
}

fn dense_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (rows, n, m) = (r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..5));
    let inputs = [
        tensor(&[rows, n], &mut r, 1.0),
        tensor(&[n, m], &mut r, 1.0),
        tensor(&[m], &mut r, 1.0),
    ];
    let proj = tensor(&[rows, m], &mut r, 1.0);
    max_grad_error(&inputs, |t, v| {
        let y = t.dense(&v[0], &v[1], Some(&v[2]))?;
        project(t, &y, &proj)
    })
}

/// Inputs keep at least 0.05 away from the kink at zero.
fn prelu_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, tl, c) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
    let vals = (0..k * tl * c)
        .map(|_| {
            let m = r.gen_range(0.05..1.0);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    let x = Tensor::new([k, tl, c], vals).unwrap();
    let alpha = tensor(&[c], &mut r, 1.0);
    let proj = tensor(&[k, tl, c], &mut r, 1.0);
    max_grad_error(&[x, alpha], |t, v| {
        let y = t.prelu(&v[0], &v[1])?;
        project(t, &y, &proj)
    })
}

/// Three-frame unroll; the loss reads every hidden state.
fn grucnn_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, ci, c) = (r.gen_range(1..5), r.gen_range(1..3), r.gen_range(1..3));
    let mut inputs = Vec::new();
    for _ in 0..3 {
        inputs.push(tensor(&[3, c, c], &mut r, 0.8));
        inputs.push(tensor(&[3, ci, c], &mut r, 0.8));
    }
    for _ in 0..3 {
        inputs.push(tensor(&[c], &mut r, 0.5));
    }
    for _ in 0..3 {
        inputs.push(tensor(&[k, ci], &mut r, 1.0));
    }
    let projs: Vec<Tensor> = (0..3).map(|_| tensor(&[k, c], &mut r, 1.0)).collect();
    max_grad_error(&inputs, |t, v| {
        let p = GruCnnParams {
            w_zh: v[0].clone(),
            w_zx: v[1].clone(),
            w_rh: v[2].clone(),
            w_rx: v[3].clone(),
            w_hh: v[4].clone(),
            w_hx: v[5].clone(),
            b_z: v[6].clone(),
            b_r: v[7].clone(),
            b_h: v[8].clone(),
        };
        let mut state = GruCnnState::zeros(t, k, c);
        let mut total: Option<Var> = None;
        for step in 0..3 {
            let (out, next) = grucnn_step(t, &p, &state, &v[9 + step])?;
            let term = project(t, &out.hidden, &projs[step])?;
            total = Some(match total {
                Some(acc) => t.add(&acc, &term)?,
                None => term,
            });
            state = next;
        }
        Ok(total.unwrap())
    })
}

/// Two-frame unroll so the recurrent weights get a gradient.
fn lstm_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, h) = (r.gen_range(1..5), r.gen_range(1..4));
    let mut inputs = Vec::new();
    for _ in 0..4 {
        inputs.push(tensor(&[n, h], &mut r, 0.8));
    }
    for _ in 0..4 {
        inputs.push(tensor(&[h, h], &mut r, 0.8));
    }
    for _ in 0..4 {
        inputs.push(tensor(&[h], &mut r, 0.5));
    }
    inputs.push(tensor(&[1, n], &mut r, 1.0));
    inputs.push(tensor(&[1, n], &mut r, 1.0));
    let proj_h = tensor(&[1, h], &mut r, 1.0);
    let proj_c = tensor(&[1, h], &mut r, 1.0);
    max_grad_error(&inputs, |t, v| {
        let four = |o: usize| {
            [
                v[o].clone(),
                v[o + 1].clone(),
                v[o + 2].clone(),
                v[o + 3].clone(),
            ]
        };
        let p = LstmParams {
            w: four(0),
            u: four(4),
            b: four(8),
        };
        let mut state = LstmState::zeros(t, h);
        for x in &v[12..14] {
            state = lstm_step(t, &p, &state, x)?;
        }
        let a = project(t, &state.h, &proj_h)?;
        let b = project(t, &state.c, &proj_c)?;
        t.add(&a, &b)
    })
}

pub type Case = fn(u64) -> f64;

/// Every differentiable building block with its instance generator.
pub const CASES: [(&str, Case); 7] = [
    ("conv1d_freq", conv1d_case),
    ("conv2d_causal", conv2d_case),
    ("maxpool_freq2", maxpool_case),
    ("dense", dense_case),
    ("prelu", prelu_case),
    ("grucnn_step (3-step unroll)", grucnn_case),
    ("lstm_step", lstm_case),
];

/// Worst error over `instances` seeds for one case.
pub fn worst_over(case: Case, instances: u64) -> f64 {
    (0..instances).map(case).fold(0.0, f64::max)
}
