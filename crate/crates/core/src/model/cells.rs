//! Recurrent cells. Both run one frame per step on a recording tape, so a
//! loop over frames is backpropagation through time.

use super::params::BoundParams;
use crate::error::{shape_err, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Gate kernels of a recurrent convolutional cell. Hidden-side kernels are
/// `[3, C, C]`, input-side kernels `[3, C_in, C]`, biases `[C]`.
#[derive(Clone, Debug)]
pub struct GruCnnParams {
    pub w_zh: Var,
    pub w_zx: Var,
    pub w_rh: Var,
    pub w_rx: Var,
    pub w_hh: Var,
    pub w_hx: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

impl GruCnnParams {
    pub fn from_bound(bound: &BoundParams, prefix: &str) -> Result<Self> {
        let v = |n: &str| bound.var(&format!("{prefix}.{n}")).cloned();
        let params = Self {
            w_zh: v("w_zh")?,
            w_zx: v("w_zx")?,
            w_rh: v("w_rh")?,
            w_rx: v("w_rx")?,
            w_hh: v("w_hh")?,
            w_hx: v("w_hx")?,
            b_z: v("b_z")?,
            b_r: v("b_r")?,
            b_h: v("b_h")?,
        };
        params.check()?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        let c = self.channels();
        for (name, w) in [
            ("w_zh", &self.w_zh),
            ("w_rh", &self.w_rh),
            ("w_hh", &self.w_hh),
        ] {
            if w.shape() != [3, c, c] {
                return shape_err(
                    "grucnn",
                    format!("{name} is {:?}, want [3, {c}, {c}]", w.shape()),
                );
            }
        }
        let ci = self.w_zx.shape().get(1).copied().unwrap_or(0);
        for (name, w) in [
            ("w_zx", &self.w_zx),
            ("w_rx", &self.w_rx),
            ("w_hx", &self.w_hx),
        ] {
            if w.shape() != [3, ci, c] {
                return shape_err(
                    "grucnn",
                    format!("{name} is {:?}, want [3, {ci}, {c}]", w.shape()),
                );
            }
        }
        for (name, b) in [("b_z", &self.b_z), ("b_r", &self.b_r), ("b_h", &self.b_h)] {
            if b.shape() != [c] {
                return shape_err("grucnn", format!("{name} is {:?}, want [{c}]", b.shape()));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.w_zh.shape()[2]
    }

    pub fn in_channels(&self) -> usize {
        self.w_zx.shape()[1]
    }
}

/// Hidden map `H_t` carried between frames, `[K, C]`.
#[derive(Clone, Debug)]
pub struct GruCnnState {
    pub h: Var,
}

impl GruCnnState {
    /// `H_0 = 0`.
    pub fn zeros(tape: &Tape, bins: usize, channels: usize) -> Self {
        Self {
            h: tape.constant(Tensor::zeros([bins, channels])),
        }
    }
}

/// Gate activations of one step, kept for inspection.
#[derive(Clone, Debug)]
pub struct GruCnnStep {
    pub update: Var,
    pub reset: Var,
    pub candidate: Var,
    pub hidden: Var,
}

/// One frame of the recurrent convolutional cell:
///
/// ```text
/// Z = sigmoid(W_zh * H + W_zx * X + b_z)
/// R = sigmoid(W_rh * H + W_rx * X + b_r)
/// C = tanh(W_hh * (R . H) + W_hx * X + b_h)
/// H' = Z . H + (1 - Z) . C
/// ```
///
/// where `*` is the width-3 frequency convolution.
pub fn grucnn_step(
    tape: &mut Tape,
    p: &GruCnnParams,
    state: &GruCnnState,
    x_t: &Var,
) -> Result<(GruCnnStep, GruCnnState)> {
    let h = &state.h;
    if h.shape().len() != 2 || h.shape()[1] != p.channels() {
        return shape_err(
            "grucnn_step",
            format!("state {:?} for {} channels", h.shape(), p.channels()),
        );
    }
    if x_t.shape() != [h.shape()[0], p.in_channels()] {
        return shape_err(
            "grucnn_step",
            format!(
                "input {:?}, want [{}, {}]",
                x_t.shape(),
                h.shape()[0],
                p.in_channels()
            ),
        );
    }
    let gate = |tape: &mut Tape, wh: &Var, hv: &Var, wx: &Var, b: &Var| -> Result<Var> {
        let from_h = tape.conv1d_freq(hv, wh, None)?;
        let from_x = tape.conv1d_freq(x_t, wx, Some(b))?;
        tape.add(&from_h, &from_x)
    };
    let pre_z = gate(tape, &p.w_zh, h, &p.w_zx, &p.b_z)?;
    let update = tape.sigmoid(&pre_z)?;
    let pre_r = gate(tape, &p.w_rh, h, &p.w_rx, &p.b_r)?;
    let reset = tape.sigmoid(&pre_r)?;
    let gated = tape.hadamard(&reset, h)?;
    let pre_c = gate(tape, &p.w_hh, &gated, &p.w_hx, &p.b_h)?;
    let candidate = tape.tanh(&pre_c)?;
    let hidden = tape.blend(&update, h, &candidate)?;
    let next = GruCnnState { h: hidden.clone() };
    Ok((
        GruCnnStep {
            update,
            reset,
            candidate,
            hidden,
        },
        next,
    ))
}

/// Fully connected LSTM with separate input (`w_*`, `[N, H]`), recurrent
/// (`u_*`, `[H, H]`) and bias (`b_*`, `[H]`) tensors per gate.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w: [Var; 4],
    pub u: [Var; 4],
    pub b: [Var; 4],
}

const LSTM_GATES: [&str; 4] = ["i", "f", "g", "o"];

impl LstmParams {
    pub fn from_bound(bound: &BoundParams, prefix: &str) -> Result<Self> {
        let get = |kind: &str, g: &str| bound.var(&format!("{prefix}.{kind}_{g}")).cloned();
        let gates = |kind: &str| -> Result<[Var; 4]> {
            Ok([
                get(kind, "i")?,
                get(kind, "f")?,
                get(kind, "g")?,
                get(kind, "o")?,
            ])
        };
        let p = Self {
            w: gates("w")?,
            u: gates("u")?,
            b: gates("b")?,
        };
        let (n, h) = (p.w[0].shape()[0], p.hidden());
        for (g, name) in LSTM_GATES.iter().enumerate() {
            if p.w[g].shape() != [n, h] || p.u[g].shape() != [h, h] || p.b[g].shape() != [h] {
                return shape_err(
                    "lstm",
                    format!("gate {name} tensors disagree on [{n}, {h}]"),
                );
            }
        }
        Ok(p)
    }

    pub fn hidden(&self) -> usize {
        self.u[0].shape()[0]
    }
}

/// `(h, c)`, each `[1, H]`.
#[derive(Clone, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &Tape, hidden: usize) -> Self {
        Self {
            h: tape.constant(Tensor::zeros([1, hidden])),
            c: tape.constant(Tensor::zeros([1, hidden])),
        }
    }
}

/// Standard LSTM step on a `[1, N]` input row.
pub fn lstm_step(
    tape: &mut Tape,
    p: &LstmParams,
    state: &LstmState,
    x_t: &Var,
) -> Result<LstmState> {
    let mut pre = Vec::with_capacity(4);
    for g in 0..4 {
        let from_x = tape.dense(x_t, &p.w[g], Some(&p.b[g]))?;
        let from_h = tape.dense(&state.h, &p.u[g], None)?;
        pre.push(tape.add(&from_x, &from_h)?);
    }
    let input = tape.sigmoid(&pre[0])?;
    let forget = tape.sigmoid(&pre[1])?;
    let cand = tape.tanh(&pre[2])?;
    let output = tape.sigmoid(&pre[3])?;
    let kept = tape.hadamard(&forget, &state.c)?;
    let written = tape.hadamard(&input, &cand)?;
    let c = tape.add(&kept, &written)?;
    let squashed = tape.tanh(&c)?;
    let h = tape.hadamard(&output, &squashed)?;
    Ok(LstmState { h, c })
}
