//! Forward and backward kernels for the convolutions. Each tap of a kernel is
//! one strided matrix product over the rows it can reach, so frequency edges
//! behave as zero padding and causal time padding costs nothing.

use super::linalg::{gemm_acc, MatMut, MatRef};

/// Range of output rows `[lo, hi)` that read input row `row + offset` inside
/// `0..len`.
fn valid_rows(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

/// Width-3 convolution along frequency.
///
/// `x: [k, ci]`, `w: [3, ci, co]`, output `[k, co]` with
/// `out[f, o] = b[o] + sum_{d, i} x[f + d - 1, i] * w[d, i, o]`.
pub(crate) fn conv1d_freq_forward(
    x: &[f64],
    k: usize,
    ci: usize,
    w: &[f64],
    co: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let mut out = match bias {
        Some(b) => b.iter().copied().cycle().take(k * co).collect(),
        None => vec![0.0; k * co],
    };
    for d in 0..3 {
        let off = d as isize - 1;
        let (lo, hi) = valid_rows(k, off);
        if lo >= hi {
            continue;
        }
        let src = (lo as isize + off) as usize;
        gemm_acc(
            MatRef::row_major(&x[src * ci..], hi - lo, ci),
            MatRef::row_major(&w[d * ci * co..(d + 1) * ci * co], ci, co),
            MatMut {
                data: &mut out[lo * co..],
                rs: co,
                cs: 1,
            },
        );
    }
    out
}

pub(crate) fn conv1d_freq_backward_input(
    gout: &[f64],
    k: usize,
    ci: usize,
    w: &[f64],
    co: usize,
    gx: &mut [f64],
) {
    for d in 0..3 {
        let off = d as isize - 1;
        let (lo, hi) = valid_rows(k, off);
        if lo >= hi {
            continue;
        }
        let dst = (lo as isize + off) as usize;
        gemm_acc(
            MatRef::row_major(&gout[lo * co..], hi - lo, co),
            MatRef::transposed(&w[d * ci * co..(d + 1) * ci * co], ci, co),
            MatMut {
                data: &mut gx[dst * ci..],
                rs: ci,
                cs: 1,
            },
        );
    }
}

pub(crate) fn conv1d_freq_backward_kernel(
    gout: &[f64],
    x: &[f64],
    k: usize,
    ci: usize,
    co: usize,
    gw: &mut [f64],
) {
    for d in 0..3 {
        let off = d as isize - 1;
        let (lo, hi) = valid_rows(k, off);
        if lo >= hi {
            continue;
        }
        let src = (lo as isize + off) as usize;
        gemm_acc(
            MatRef::transposed(&x[src * ci..(src + hi - lo) * ci], hi - lo, ci),
            MatRef::row_major(&gout[lo * co..], hi - lo, co),
            MatMut {
                data: &mut gw[d * ci * co..(d + 1) * ci * co],
                rs: co,
                cs: 1,
            },
        );
    }
}

/// Sum of `g: [rows, c]` over rows.
pub(crate) fn bias_grad(g: &[f64], c: usize, gb: &mut [f64]) {
    for row in g.chunks_exact(c) {
        for (acc, v) in gb.iter_mut().zip(row) {
            *acc += v;
        }
    }
}

/// Time taps of the causal 2-D kernel read frames `t - 2`, `t - 1`, `t`.
const TIME_OFFSETS: [isize; 3] = [-2, -1, 0];

/// 3x3 convolution over `(frequency, time)`, same-padded in frequency and
/// causal in time.
///
/// `x: [k, t, ci]`, `w: [3, 3, ci, co]` indexed `[freq tap, time tap, in, out]`.
pub(crate) fn conv2d_causal_forward(
    x: &[f64],
    k: usize,
    t: usize,
    ci: usize,
    w: &[f64],
    co: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let mut out = match bias {
        Some(b) => b.iter().copied().cycle().take(k * t * co).collect(),
        None => vec![0.0; k * t * co],
    };
    let tap = ci * co;
    for df in 0..3 {
        let foff = df as isize - 1;
        let (flo, fhi) = valid_rows(k, foff);
        for (dt, &toff) in TIME_OFFSETS.iter().enumerate() {
            let (tlo, thi) = valid_rows(t, toff);
            if tlo >= thi {
                continue;
            }
            let wtap = &w[(df * 3 + dt) * tap..(df * 3 + dt + 1) * tap];
            for f in flo..fhi {
                let sf = (f as isize + foff) as usize;
                let st = (tlo as isize + toff) as usize;
                gemm_acc(
                    MatRef::row_major(&x[(sf * t + st) * ci..], thi - tlo, ci),
                    MatRef::row_major(wtap, ci, co),
                    MatMut {
                        data: &mut out[(f * t + tlo) * co..],
                        rs: co,
                        cs: 1,
                    },
                );
            }
        }
    }
    out
}

pub(crate) fn conv2d_causal_backward_input(
    gout: &[f64],
    k: usize,
    t: usize,
    ci: usize,
    w: &[f64],
    co: usize,
    gx: &mut [f64],
) {
    let tap = ci * co;
    for df in 0..3 {
        let foff = df as isize - 1;
        let (flo, fhi) = valid_rows(k, foff);
        for (dt, &toff) in TIME_OFFSETS.iter().enumerate() {
            let (tlo, thi) = valid_rows(t, toff);
            if tlo >= thi {
                continue;
            }
            let wtap = &w[(df * 3 + dt) * tap..(df * 3 + dt + 1) * tap];
            for f in flo..fhi {
                let sf = (f as isize + foff) as usize;
                let st = (tlo as isize + toff) as usize;
                gemm_acc(
                    MatRef::row_major(&gout[(f * t + tlo) * co..], thi - tlo, co),
                    MatRef::transposed(wtap, ci, co),
                    MatMut {
                        data: &mut gx[(sf * t + st) * ci..],
                        rs: ci,
                        cs: 1,
                    },
                );
            }
        }
    }
}

pub(crate) fn conv2d_causal_backward_kernel(
    gout: &[f64],
    x: &[f64],
    k: usize,
    t: usize,
    ci: usize,
    co: usize,
    gw: &mut [f64],
) {
    let tap = ci * co;
    for df in 0..3 {
        let foff = df as isize - 1;
        let (flo, fhi) = valid_rows(k, foff);
        for (dt, &toff) in TIME_OFFSETS.iter().enumerate() {
            let (tlo, thi) = valid_rows(t, toff);
            if tlo >= thi {
                continue;
            }
            let n = thi - tlo;
            let gtap = &mut gw[(df * 3 + dt) * tap..(df * 3 + dt + 1) * tap];
            for f in flo..fhi {
                let sf = (f as isize + foff) as usize;
                let st = (tlo as isize + toff) as usize;
                gemm_acc(
                    MatRef::transposed(&x[(sf * t + st) * ci..(sf * t + st + n) * ci], n, ci),
                    MatRef::row_major(&gout[(f * t + tlo) * co..], n, co),
                    MatMut {
                        data: &mut *gtap,
                        rs: co,
                        cs: 1,
                    },
                );
            }
        }
    }
}
