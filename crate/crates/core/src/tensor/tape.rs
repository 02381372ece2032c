use std::rc::Rc;

use super::kernels;
use super::linalg::{gemm_acc, MatMut, MatRef};
use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// A value produced on a [`Tape`]. Cloning is cheap; the tensor is shared.
#[derive(Clone, Debug)]
pub struct Var {
    value: Rc<Tensor>,
    node: Option<usize>,
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    /// True when gradients flow back through this value.
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        x: Rc<Tensor>,
        w: Rc<Tensor>,
    },
    Conv2d {
        x: Rc<Tensor>,
        w: Rc<Tensor>,
    },
    Sigmoid {
        out: Rc<Tensor>,
    },
    Tanh {
        out: Rc<Tensor>,
    },
    Prelu {
        x: Rc<Tensor>,
        alpha: Rc<Tensor>,
    },
    Add,
    Hadamard {
        a: Rc<Tensor>,
        b: Rc<Tensor>,
    },
    Blend {
        z: Rc<Tensor>,
        a: Rc<Tensor>,
        b: Rc<Tensor>,
    },
    MaxPool {
        argmax: Vec<usize>,
    },
    Dense {
        x: Rc<Tensor>,
        w: Rc<Tensor>,
    },
    Reshape,
    SwapAxes01 {
        a: usize,
        b: usize,
        inner: usize,
    },
    SelectFrame {
        t_len: usize,
        c: usize,
        frame: usize,
    },
    StackFrames {
        t_len: usize,
        c: usize,
    },
    ExpHalf {
        out: Rc<Tensor>,
        active: Vec<bool>,
    },
    Mse {
        residual: Vec<f64>,
    },
    Sum,
}

#[derive(Debug)]
struct Node {
    op: Op,
    parents: Vec<Option<usize>>,
    len: usize,
}

/// Records operations in creation order and replays them in reverse.
///
/// A tape built with [`Tape::inference`] records nothing: operations just
/// compute values and intermediate tensors are freed as soon as their `Var`s
/// drop.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    recording: bool,
    backward_done: bool,
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if cfg!(debug_assertions) && data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(op.into()));
    }
    Ok(())
}

fn same_shape(op: &'static str, a: &Var, b: &Var) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            recording: true,
            ..Self::default()
        }
    }

    /// A tape that never records; used for enhancement and shape runs.
    pub fn inference() -> Self {
        Self::default()
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and gradient so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        let len = value.numel();
        let node = self.recording.then(|| self.push(Op::Leaf, Vec::new(), len));
        Var {
            value: Rc::new(value),
            node,
        }
    }

    /// Wraps a value that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var {
        Var {
            value: Rc::new(value),
            node: None,
        }
    }

    fn push(&mut self, op: Op, parents: Vec<Option<usize>>, len: usize) -> usize {
        self.nodes.push(Node { op, parents, len });
        self.nodes.len() - 1
    }

    fn emit(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[&Var],
        op: impl FnOnce() -> Op,
    ) -> Result<Var> {
        check_finite(name, &data)?;
        let value = Rc::new(Tensor::from_parts(shape, data));
        let tracked = self.recording && inputs.iter().any(|v| v.node.is_some());
        let node = if tracked {
            let parents = inputs.iter().map(|v| v.node).collect();
            Some(self.push(op(), parents, value.numel()))
        } else {
            None
        };
        Ok(Var { value, node })
    }

    /// Width-3 frequency convolution: `[K, C_in] * [3, C_in, C_out] + [C_out]`.
    pub fn conv1d_freq(&mut self, x: &Var, kernel: &Var, bias: Option<&Var>) -> Result<Var> {
        let (xs, ws) = (x.shape(), kernel.shape());
        if xs.len() != 2 || ws.len() != 3 || ws[0] != 3 || ws[1] != xs[1] {
            return shape_err(
                "conv1d_freq",
                format!("input {xs:?} with kernel {ws:?} (want [K,Ci] and [3,Ci,Co])"),
            );
        }
        let (k, ci, co) = (xs[0], xs[1], ws[2]);
        if let Some(b) = bias {
            if b.shape() != [co] {
                return shape_err(
                    "conv1d_freq",
                    format!("bias {:?} for {co} outputs", b.shape()),
                );
            }
        }
        let out = kernels::conv1d_freq_forward(
            x.data(),
            k,
            ci,
            kernel.data(),
            co,
            bias.map(|b| b.data()),
        );
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        self.emit("conv1d_freq", vec![k, co], out, &inputs, || Op::Conv1d {
            x: x.value.clone(),
            w: kernel.value.clone(),
        })
    }

    /// 3x3 convolution over `[K, T, C_in]`, same-padded in frequency and
    /// causal in time (frame `t` sees frames `t-2..=t`).
    pub fn conv2d_causal(&mut self, x: &Var, kernel: &Var, bias: Option<&Var>) -> Result<Var> {
        let (xs, ws) = (x.shape(), kernel.shape());
        if xs.len() != 3 || ws.len() != 4 || ws[0] != 3 || ws[1] != 3 || ws[2] != xs[2] {
            return shape_err(
                "conv2d_causal",
                format!("input {xs:?} with kernel {ws:?} (want [K,T,Ci] and [3,3,Ci,Co])"),
            );
        }
        let (k, t, ci, co) = (xs[0], xs[1], xs[2], ws[3]);
        if let Some(b) = bias {
            if b.shape() != [co] {
                return shape_err(
                    "conv2d_causal",
                    format!("bias {:?} for {co} outputs", b.shape()),
                );
            }
        }
        let out = kernels::conv2d_causal_forward(
            x.data(),
            k,
            t,
            ci,
            kernel.data(),
            co,
            bias.map(|b| b.data()),
        );
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        self.emit("conv2d_causal", vec![k, t, co], out, &inputs, || {
            Op::Conv2d {
                x: x.value.clone(),
                w: kernel.value.clone(),
            }
        })
    }

    pub fn sigmoid(&mut self, x: &Var) -> Result<Var> {
        let data = x.data().iter().map(|&v| sigmoid(v)).collect();
        let out = self.emit("sigmoid", x.shape().to_vec(), data, &[x], || Op::Leaf)?;
        Ok(self.patch_saved_output(out, |out| Op::Sigmoid { out }))
    }

    pub fn tanh(&mut self, x: &Var) -> Result<Var> {
        let data = x.data().iter().map(|v| v.tanh()).collect();
        let out = self.emit("tanh", x.shape().to_vec(), data, &[x], || Op::Leaf)?;
        Ok(self.patch_saved_output(out, |out| Op::Tanh { out }))
    }

    /// Ops whose backward rule needs their own output get it patched in after
    /// the output tensor exists.
    fn patch_saved_output(&mut self, out: Var, make: impl FnOnce(Rc<Tensor>) -> Op) -> Var {
        if let Some(id) = out.node {
            self.nodes[id].op = make(out.value.clone());
        }
        out
    }

    /// Parametric ReLU with one slope per channel (last axis).
    pub fn prelu(&mut self, x: &Var, alpha: &Var) -> Result<Var> {
        let c = *x.shape().last().expect("tensor rank >= 1");
        if alpha.shape() != [c] {
            return shape_err(
                "prelu",
                format!("slopes {:?} for {c} channels", alpha.shape()),
            );
        }
        let a = alpha.data();
        let data = x
            .data()
            .chunks_exact(c)
            .flat_map(|row| {
                row.iter()
                    .zip(a)
                    .map(|(&v, &s)| if v > 0.0 { v } else { s * v })
            })
            .collect();
        self.emit("prelu", x.shape().to_vec(), data, &[x, alpha], || {
            Op::Prelu {
                x: x.value.clone(),
                alpha: alpha.value.clone(),
            }
        })
    }

    pub fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("add", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        self.emit("add", a.shape().to_vec(), data, &[a, b], || Op::Add)
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: &Var, b: &Var) -> Result<Var> {
        same_shape("hadamard", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        self.emit("hadamard", a.shape().to_vec(), data, &[a, b], || {
            Op::Hadamard {
                a: a.value.clone(),
                b: b.value.clone(),
            }
        })
    }

    /// Gated affine combination `z * a + (1 - z) * b`.
    pub fn blend(&mut self, z: &Var, a: &Var, b: &Var) -> Result<Var> {
        same_shape("blend", z, a)?;
        same_shape("blend", z, b)?;
        let data = z
            .data()
            .iter()
            .zip(a.data())
            .zip(b.data())
            .map(|((&g, &x), &y)| g * x + (1.0 - g) * y)
            .collect();
        self.emit("blend", z.shape().to_vec(), data, &[z, a, b], || {
            Op::Blend {
                z: z.value.clone(),
                a: a.value.clone(),
                b: b.value.clone(),
            }
        })
    }

    /// Non-overlapping max over pairs along axis 0, ceil mode:
    /// `[K, ...] -> [ceil(K/2), ...]`.
    pub fn maxpool_freq2(&mut self, x: &Var) -> Result<Var> {
        let shape = x.shape();
        let k = shape[0];
        let inner: usize = shape[1..].iter().product();
        let ko = k.div_ceil(2);
        let src = x.data();
        let mut data = Vec::with_capacity(ko * inner);
        let mut argmax = Vec::with_capacity(ko * inner);
        for i in 0..ko {
            for r in 0..inner {
                let first = 2 * i * inner + r;
                let mut best = first;
                if 2 * i + 1 < k && src[first + inner] > src[first] {
                    best = first + inner;
                }
                data.push(src[best]);
                argmax.push(best);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[0] = ko;
        self.emit("maxpool_freq2", out_shape, data, &[x], || Op::MaxPool {
            argmax,
        })
    }

    /// Affine map over the last axis: `[..., N] @ [N, M] + [M] -> [..., M]`.
    pub fn dense(&mut self, x: &Var, weight: &Var, bias: Option<&Var>) -> Result<Var> {
        let n = *x.shape().last().expect("tensor rank >= 1");
        let ws = weight.shape();
        if ws.len() != 2 || ws[0] != n {
            return shape_err("dense", format!("input {:?} with weight {ws:?}", x.shape()));
        }
        let m = ws[1];
        if let Some(b) = bias {
            if b.shape() != [m] {
                return shape_err("dense", format!("bias {:?} for {m} outputs", b.shape()));
            }
        }
        let rows = x.value.numel() / n;
        let mut data = match bias {
            Some(b) => b.data().iter().copied().cycle().take(rows * m).collect(),
            None => vec![0.0; rows * m],
        };
        gemm_acc(
            MatRef::row_major(x.data(), rows, n),
            MatRef::row_major(weight.data(), n, m),
            MatMut {
                data: &mut data,
                rs: m,
                cs: 1,
            },
        );
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.emit("dense", shape, data, &inputs, || Op::Dense {
            x: x.value.clone(),
            w: weight.value.clone(),
        })
    }

    pub fn reshape(&mut self, x: &Var, shape: &[usize]) -> Result<Var> {
        if shape.contains(&0) || shape.iter().product::<usize>() != x.value.numel() {
            return shape_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", x.shape()),
            );
        }
        self.emit("reshape", shape.to_vec(), x.data().to_vec(), &[x], || {
            Op::Reshape
        })
    }

    /// Swaps the first two axes: `[A, B, ...] -> [B, A, ...]`.
    pub fn swap_axes01(&mut self, x: &Var) -> Result<Var> {
        let shape = x.shape();
        if shape.len() < 2 {
            return shape_err("swap_axes01", format!("rank-{} input", shape.len()));
        }
        let (a, b) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let src = x.data();
        let mut data = Vec::with_capacity(src.len());
        for j in 0..b {
            for i in 0..a {
                let s = (i * b + j) * inner;
                data.extend_from_slice(&src[s..s + inner]);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.swap(0, 1);
        self.emit("swap_axes01", out_shape, data, &[x], || Op::SwapAxes01 {
            a,
            b,
            inner,
        })
    }

    /// Frame `t` of a `[K, T, C]` sequence as a `[K, C]` map.
    pub fn select_frame(&mut self, x: &Var, frame: usize) -> Result<Var> {
        let shape = x.shape();
        if shape.len() != 3 || frame >= shape[1] {
            return shape_err("select_frame", format!("frame {frame} of {shape:?}"));
        }
        let (k, t_len, c) = (shape[0], shape[1], shape[2]);
        let src = x.data();
        let mut data = Vec::with_capacity(k * c);
        for f in 0..k {
            let s = (f * t_len + frame) * c;
            data.extend_from_slice(&src[s..s + c]);
        }
        self.emit("select_frame", vec![k, c], data, &[x], || Op::SelectFrame {
            t_len,
            c,
            frame,
        })
    }

    /// Inverse of [`Tape::select_frame`]: `T` maps of `[K, C]` into `[K, T, C]`.
    pub fn stack_frames(&mut self, frames: &[Var]) -> Result<Var> {
        let Some(first) = frames.first() else {
            return shape_err("stack_frames", "no frames");
        };
        let shape = first.shape();
        if shape.len() != 2 || frames.iter().any(|f| f.shape() != shape) {
            return shape_err("stack_frames", "frames must share one [K, C] shape");
        }
        let (k, c, t_len) = (shape[0], shape[1], frames.len());
        let mut data = vec![0.0; k * t_len * c];
        for (t, fr) in frames.iter().enumerate() {
            for (f, row) in fr.data().chunks_exact(c).enumerate() {
                let d = (f * t_len + t) * c;
                data[d..d + c].copy_from_slice(row);
            }
        }
        let inputs: Vec<&Var> = frames.iter().collect();
        self.emit("stack_frames", vec![k, t_len, c], data, &inputs, || {
            Op::StackFrames { t_len, c }
        })
    }

    /// `exp(clamp(x, -limit, limit) / 2)`: log-power to magnitude.
    pub fn exp_half_clamped(&mut self, x: &Var, limit: f64) -> Result<Var> {
        let active: Vec<bool> = x.data().iter().map(|v| v.abs() <= limit).collect();
        let data = x
            .data()
            .iter()
            .map(|v| (v.clamp(-limit, limit) / 2.0).exp())
            .collect();
        let out = self.emit("exp_half_clamped", x.shape().to_vec(), data, &[x], || {
            Op::Leaf
        })?;
        Ok(self.patch_saved_output(out, move |out| Op::ExpHalf { out, active }))
    }

    /// Mean squared difference to a constant target, as a single-element value.
    pub fn mse_to_target(&mut self, pred: &Var, target: &Tensor) -> Result<Var> {
        if pred.shape() != target.shape() {
            return shape_err("mse", format!("{:?} vs {:?}", pred.shape(), target.shape()));
        }
        let residual: Vec<f64> = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, y)| p - y)
            .collect();
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64;
        self.emit("mse", vec![1], vec![loss], &[pred], || Op::Mse { residual })
    }

    pub fn sum(&mut self, x: &Var) -> Result<Var> {
        let s = x.data().iter().sum();
        self.emit("sum", vec![1], vec![s], &[x], || Op::Sum)
    }

    /// Reverse sweep from a single-element `loss`. Callable once per recording.
    pub fn backward(&mut self, loss: &Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "already run on this tape; reset it first".into(),
            ));
        }
        if loss.value.numel() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got {:?}",
                loss.shape()
            )));
        }
        let Some(root) = loss.node else {
            return Err(Error::Backward("loss is not connected to the tape".into()));
        };
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root] = Some(vec![1.0]);
        for id in (0..=root).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[id].take() else {
                continue;
            };
            for (slot, parent) in node.parents.iter().enumerate() {
                let Some(p) = *parent else { continue };
                let dst = grads[p].get_or_insert_with(|| vec![0.0; self.nodes[p].len]);
                node.op.accumulate(slot, &gout, dst);
            }
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    /// Gradient of the last backward sweep with respect to `v`.
    pub fn grad(&self, v: &Var) -> Option<Tensor> {
        let id = v.node?;
        let g = self.grads.get(id)?.as_ref()?;
        Some(Tensor::from_parts(v.shape().to_vec(), g.clone()))
    }
}

impl Op {
    /// Adds `d loss / d input[slot]` into `dst` given `d loss / d output`.
    fn accumulate(&self, slot: usize, gout: &[f64], dst: &mut [f64]) {
        match self {
            Op::Leaf => {}
            Op::Conv1d { x, w } => {
                let (k, ci, co) = (x.shape()[0], x.shape()[1], w.shape()[2]);
                match slot {
                    0 => kernels::conv1d_freq_backward_input(gout, k, ci, w.data(), co, dst),
                    1 => kernels::conv1d_freq_backward_kernel(gout, x.data(), k, ci, co, dst),
                    _ => kernels::bias_grad(gout, co, dst),
                }
            }
            Op::Conv2d { x, w } => {
                let s = x.shape();
                let (k, t, ci, co) = (s[0], s[1], s[2], w.shape()[3]);
                match slot {
                    0 => kernels::conv2d_causal_backward_input(gout, k, t, ci, w.data(), co, dst),
                    1 => kernels::conv2d_causal_backward_kernel(gout, x.data(), k, t, ci, co, dst),
                    _ => kernels::bias_grad(gout, co, dst),
                }
            }
            Op::Sigmoid { out } => {
                for ((d, g), y) in dst.iter_mut().zip(gout).zip(out.data()) {
                    *d += g * y * (1.0 - y);
                }
            }
            Op::Tanh { out } => {
                for ((d, g), y) in dst.iter_mut().zip(gout).zip(out.data()) {
                    *d += g * (1.0 - y * y);
                }
            }
            Op::Prelu { x, alpha } => {
                let c = alpha.numel();
                let a = alpha.data();
                let rows = x.data().chunks_exact(c).zip(gout.chunks_exact(c));
                if slot == 0 {
                    for ((xr, gr), dr) in rows.zip(dst.chunks_exact_mut(c)) {
                        for i in 0..c {
                            dr[i] += if xr[i] > 0.0 { gr[i] } else { a[i] * gr[i] };
                        }
                    }
                } else {
                    for (xr, gr) in rows {
                        for i in 0..c {
                            if xr[i] <= 0.0 {
                                dst[i] += xr[i] * gr[i];
                            }
                        }
                    }
                }
            }
            Op::Add | Op::Reshape => {
                for (d, g) in dst.iter_mut().zip(gout) {
                    *d += g;
                }
            }
            Op::Hadamard { a, b } => {
                let other = if slot == 0 { b } else { a };
                for ((d, g), o) in dst.iter_mut().zip(gout).zip(other.data()) {
                    *d += g * o;
                }
            }
            Op::Blend { z, a, b } => {
                let it = dst.iter_mut().zip(gout).zip(z.data());
                match slot {
                    0 => {
                        for (((d, g), _), (x, y)) in it.zip(a.data().iter().zip(b.data())) {
                            *d += g * (x - y);
                        }
                    }
                    1 => {
                        for ((d, g), zv) in it {
                            *d += g * zv;
                        }
                    }
                    _ => {
                        for ((d, g), zv) in it {
                            *d += g * (1.0 - zv);
                        }
                    }
                }
            }
            Op::MaxPool { argmax } => {
                for (g, &src) in gout.iter().zip(argmax) {
                    dst[src] += g;
                }
            }
            Op::Dense { x, w } => {
                let (n, m) = (w.shape()[0], w.shape()[1]);
                let rows = x.numel() / n;
                match slot {
                    0 => gemm_acc(
                        MatRef::row_major(gout, rows, m),
                        MatRef::transposed(w.data(), n, m),
                        MatMut {
                            data: dst,
                            rs: n,
                            cs: 1,
                        },
                    ),
                    1 => gemm_acc(
                        MatRef::transposed(x.data(), rows, n),
                        MatRef::row_major(gout, rows, m),
                        MatMut {
                            data: dst,
                            rs: m,
                            cs: 1,
                        },
                    ),
                    _ => kernels::bias_grad(gout, m, dst),
                }
            }
            Op::SwapAxes01 { a, b, inner } => {
                // output [b, a, inner] back to input [a, b, inner]
                for j in 0..*b {
                    for i in 0..*a {
                        let s = (j * a + i) * inner;
                        let d = (i * b + j) * inner;
                        for q in 0..*inner {
                            dst[d + q] += gout[s + q];
                        }
                    }
                }
            }
            Op::SelectFrame { t_len, c, frame } => {
                for (f, row) in gout.chunks_exact(*c).enumerate() {
                    let d = (f * t_len + frame) * c;
                    for (acc, g) in dst[d..d + c].iter_mut().zip(row) {
                        *acc += g;
                    }
                }
            }
            Op::StackFrames { t_len, c } => {
                for (f, row) in dst.chunks_exact_mut(*c).enumerate() {
                    let s = (f * t_len + slot) * c;
                    for (acc, g) in row.iter_mut().zip(&gout[s..s + c]) {
                        *acc += g;
                    }
                }
            }
            Op::ExpHalf { out, active } => {
                for (((d, g), y), &on) in dst.iter_mut().zip(gout).zip(out.data()).zip(active) {
                    if on {
                        *d += g * 0.5 * y;
                    }
                }
            }
            Op::Mse { residual } => {
                let scale = 2.0 * gout[0] / residual.len() as f64;
                for (d, r) in dst.iter_mut().zip(residual) {
                    *d += scale * r;
                }
            }
            Op::Sum => {
                for d in dst.iter_mut() {
                    *d += gout[0];
                }
            }
        }
    }
}
