use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cells::{grucnn_step, lstm_step, GruCnnParams, GruCnnState, LstmParams, LstmState};
use super::params::{glorot_uniform, BoundParams, ParamStore};
use super::spec::{LayerKind, ModelSpec};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Tape, Tensor, Var};

pub const PRELU_INIT: f64 = 0.25;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Output shape of one row, as `[batch, bins, frames, channels]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerTrace {
    pub row: usize,
    pub label: &'static str,
    pub shape: [usize; 4],
}

pub struct Forward {
    /// Predicted log-power, `[bins, T]`.
    pub output: Var,
    pub trace: Vec<LayerTrace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParamStore,
}

impl Model {
    /// Glorot-uniform kernels, zero biases, PReLU slopes of 0.25 and LSTM
    /// forget biases of 1.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in spec.param_shapes() {
            let value = if name.ends_with(".prelu") {
                Tensor::full(shape, PRELU_INIT)
            } else if name.ends_with(".lstm.b_f") {
                Tensor::full(shape, FORGET_BIAS_INIT)
            } else if shape.len() == 1 {
                Tensor::zeros(shape)
            } else {
                glorot_uniform(&shape, &mut rng)
            };
            params.insert(name, value);
        }
        Ok(Self { spec, params })
    }

    /// Adopts existing parameters after checking every name and shape.
    pub fn from_params(spec: ModelSpec, params: ParamStore) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_shapes();
        for (name, shape) in &expected {
            match params.get(name) {
                None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {name}: expected shape {shape:?}, found {:?}",
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        if params.len() != expected.len() {
            let extra = params
                .names()
                .find(|n| !expected.iter().any(|(e, _)| e == n))
                .unwrap_or_default()
                .to_string();
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.params.bind(tape)
    }

    /// Runs the stack over `[bins, T]` log-power features. Every row is
    /// causal in time.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        features: &Tensor,
    ) -> Result<Forward> {
        let fs = features.shape();
        if fs.len() != 2 || fs[0] != self.spec.input_bins {
            return shape_err(
                "forward",
                format!("features {fs:?}, want [{}, T]", self.spec.input_bins),
            );
        }
        let (bins, frames) = (fs[0], fs[1]);
        let mut x = tape.constant(features.clone().reshape([bins, frames, 1])?);
        let mut trace = Vec::new();
        for (i, layer) in self.spec.layers().iter().enumerate() {
            let row = i + 1;
            let prefix = format!("layer{row}");
            x = match *layer {
                LayerKind::Conv { .. } => {
                    let y = tape.conv2d_causal(
                        &x,
                        bound.var(&format!("{prefix}.kernel"))?,
                        Some(bound.var(&format!("{prefix}.bias"))?),
                    )?;
                    tape.prelu(&y, bound.var(&format!("{prefix}.prelu"))?)?
                }
                LayerKind::GruCnn { channels, .. } => {
                    let p = GruCnnParams::from_bound(bound, &prefix)?;
                    let mut state = GruCnnState::zeros(tape, x.shape()[0], channels);
                    let mut outs = Vec::with_capacity(frames);
                    for t in 0..frames {
                        let xt = tape.select_frame(&x, t)?;
                        let (step, next) = grucnn_step(tape, &p, &state, &xt)?;
                        outs.push(step.hidden);
                        state = next;
                    }
                    tape.stack_frames(&outs)?
                }
                LayerKind::MaxPool => tape.maxpool_freq2(&x)?,
                LayerKind::DenseHead { inputs, .. } => {
                    let rows = flatten_frames(tape, &x, inputs)?;
                    self.project(tape, bound, &prefix, &rows)?
                }
                LayerKind::LstmHead { inputs, hidden, .. } => {
                    let rows = flatten_frames(tape, &x, inputs)?;
                    let p = LstmParams::from_bound(bound, &format!("{prefix}.lstm"))?;
                    let seq = tape.reshape(&rows, &[1, frames, inputs])?;
                    let mut state = LstmState::zeros(tape, hidden);
                    let mut outs = Vec::with_capacity(frames);
                    for t in 0..frames {
                        let xt = tape.select_frame(&seq, t)?;
                        state = lstm_step(tape, &p, &state, &xt)?;
                        outs.push(state.h.clone());
                    }
                    let stacked = tape.stack_frames(&outs)?;
                    let hs = tape.reshape(&stacked, &[frames, hidden])?;
                    self.project(tape, bound, &prefix, &hs)?
                }
            };
            let s = x.shape();
            let shape = if s.len() == 3 {
                [1, s[0], s[1], s[2]]
            } else {
                [1, s[0], s[1], 1]
            };
            trace.push(LayerTrace {
                row,
                label: layer.label(),
                shape,
            });
        }
        Ok(Forward { output: x, trace })
    }

    /// Dense projection of `[T, N]` rows to `[bins, T]`.
    fn project(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        prefix: &str,
        rows: &Var,
    ) -> Result<Var> {
        let y = tape.dense(
            rows,
            bound.var(&format!("{prefix}.fc.weight"))?,
            Some(bound.var(&format!("{prefix}.fc.bias"))?),
        )?;
        tape.swap_axes01(&y)
    }

    /// Inference-only forward pass.
    pub fn predict(&self, features: &Tensor) -> Result<Tensor> {
        Ok(self.predict_traced(features)?.0)
    }

    pub fn predict_traced(&self, features: &Tensor) -> Result<(Tensor, Vec<LayerTrace>)> {
        let mut tape = Tape::inference();
        let bound = self.bind(&mut tape);
        let f = self.forward(&mut tape, &bound, features)?;
        Ok((f.output.value().clone(), f.trace))
    }
}

/// `[K, T, C]` to per-frame rows `[T, K * C]`.
fn flatten_frames(tape: &mut Tape, x: &Var, inputs: usize) -> Result<Var> {
    let frames = x.shape()[1];
    let swapped = tape.swap_axes01(x)?;
    tape.reshape(&swapped, &[frames, inputs])
}
