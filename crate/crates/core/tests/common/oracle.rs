//! Deliberately naive reference implementations: plain index loops written
//! straight from the definitions, sharing no code with the library.

#![allow(dead_code, clippy::too_many_arguments)]

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `y[f, o] = b[o] + sum_{d, i} x[f + d - 1, i] * w[d, i, o]`, zero outside.
pub fn conv1d(x: &[f64], k: usize, ci: usize, w: &[f64], co: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut y = vec![0.0; k * co];
    for f in 0..k {
        for o in 0..co {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for d in 0..3 {
                let src = f as isize + d as isize - 1;
                if src < 0 || src >= k as isize {
                    continue;
                }
                for i in 0..ci {
                    acc += x[src as usize * ci + i] * w[(d * ci + i) * co + o];
                }
            }
            y[f * co + o] = acc;
        }
    }
    y
}

/// Frequency same-padded, time causal: output frame `t` reads `t-2..=t`,
/// with time tap `dt` reading frame `t + dt - 2`.
pub fn conv2d_causal(
    x: &[f64],
    k: usize,
    t: usize,
    ci: usize,
    w: &[f64],
    co: usize,
    b: Option<&[f64]>,
) -> Vec<f64> {
    let mut y = vec![0.0; k * t * co];
    for f in 0..k {
        for j in 0..t {
            for o in 0..co {
                let mut acc = b.map_or(0.0, |b| b[o]);
                for df in 0..3 {
                    for dt in 0..3 {
                        let sf = f as isize + df as isize - 1;
                        let sj = j as isize + dt as isize - 2;
                        if sf < 0 || sf >= k as isize || sj < 0 {
                            continue;
                        }
                        for i in 0..ci {
                            let xv = x[(sf as usize * t + sj as usize) * ci + i];
                            acc += xv * w[((df * 3 + dt) * ci + i) * co + o];
                        }
                    }
                }
                y[(f * t + j) * co + o] = acc;
            }
        }
    }
    y
}

/// Max over frequency pairs, a lone last row passes through.
pub fn maxpool2(x: &[f64], k: usize, inner: usize) -> Vec<f64> {
    let mut y = Vec::new();
    let mut f = 0;
    while f < k {
        for r in 0..inner {
            let a = x[f * inner + r];
            y.push(if f + 1 < k {
                a.max(x[(f + 1) * inner + r])
            } else {
                a
            });
        }
        f += 2;
    }
    y
}

pub struct GruWeights<'a> {
    pub wzh: &'a [f64],
    pub wzx: &'a [f64],
    pub wrh: &'a [f64],
    pub wrx: &'a [f64],
    pub whh: &'a [f64],
    pub whx: &'a [f64],
    pub bz: &'a [f64],
    pub br: &'a [f64],
    pub bh: &'a [f64],
}

pub struct GruOut {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub cand: Vec<f64>,
    pub h: Vec<f64>,
}

/// One step of the gated recurrent convolution, element by element.
pub fn grucnn(w: &GruWeights, h: &[f64], x: &[f64], k: usize, c: usize, ci: usize) -> GruOut {
    let hz = conv1d(h, k, c, w.wzh, c, None);
    let xz = conv1d(x, k, ci, w.wzx, c, Some(w.bz));
    let hr = conv1d(h, k, c, w.wrh, c, None);
    let xr = conv1d(x, k, ci, w.wrx, c, Some(w.br));
    let n = k * c;
    let z: Vec<f64> = (0..n).map(|i| sigmoid(hz[i] + xz[i])).collect();
    let r: Vec<f64> = (0..n).map(|i| sigmoid(hr[i] + xr[i])).collect();
    let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
    let hh = conv1d(&rh, k, c, w.whh, c, None);
    let xh = conv1d(x, k, ci, w.whx, c, Some(w.bh));
    let cand: Vec<f64> = (0..n).map(|i| (hh[i] + xh[i]).tanh()).collect();
    let h_next = (0..n)
        .map(|i| z[i] * h[i] + (1.0 - z[i]) * cand[i])
        .collect();
    GruOut {
        z,
        r,
        cand,
        h: h_next,
    }
}

/// LSTM step; `w[g]` is `[n, hid]`, `u[g]` `[hid, hid]`, gate order i, f, g, o.
pub fn lstm(
    w: &[Vec<f64>; 4],
    u: &[Vec<f64>; 4],
    b: &[Vec<f64>; 4],
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let hid = h.len();
    let pre = |g: usize, j: usize| {
        let mut acc = b[g][j];
        for i in 0..n {
            acc += x[i] * w[g][i * hid + j];
        }
        for i in 0..hid {
            acc += h[i] * u[g][i * hid + j];
        }
        acc
    };
    let mut h_next = vec![0.0; hid];
    let mut c_next = vec![0.0; hid];
    for j in 0..hid {
        let ig = sigmoid(pre(0, j));
        let fg = sigmoid(pre(1, j));
        let gg = pre(2, j).tanh();
        let og = sigmoid(pre(3, j));
        c_next[j] = fg * c[j] + ig * gg;
        h_next[j] = og * c_next[j].tanh();
    }
    (h_next, c_next)
}

/// Mean over bins and frames of `(|Y| - exp(pred / 2))^2`, `[k, t]` row-major.
pub fn magnitude_mse(pred: &[f64], target: &[f64], k: usize, t: usize) -> f64 {
    let mut acc = 0.0;
    for kk in 0..k {
        for tt in 0..t {
            let i = kk * t + tt;
            let d = target[i] - (pred[i].clamp(-40.0, 40.0) / 2.0).exp();
            acc += d * d;
        }
    }
    acc / (k * t) as f64
}

/// Direct O(N^2) DFT of a real sequence, bins `0..=N/2`.
pub fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re, im)
        })
        .collect()
}

/// Segmental SNR straight from its definition.
pub fn ssnr(reference: &[f64], test: &[f64]) -> f64 {
    let mut scores = Vec::new();
    let mut start = 0;
    while start < reference.len() {
        let end = (start + 320).min(reference.len());
        let mut sig = 0.0;
        let mut err = 0.0;
        for i in start..end {
            sig += reference[i] * reference[i];
            err += (reference[i] - test[i]) * (reference[i] - test[i]);
        }
        if sig >= 1e-8 {
            let snr = if err == 0.0 {
                35.0
            } else {
                10.0 * (sig / err).log10()
            };
            scores.push(snr.clamp(-10.0, 35.0));
        }
        start = end;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}
