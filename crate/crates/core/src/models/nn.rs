//! Small dense-tensor kernels shared by the policy and reconstructor.
//!
//! Feature maps are stored channel-major: `c * n * n + r * n + s`.
//! Convolutions are "same"-size cross-correlations with zero padding and an
//! odd square kernel; weights are laid out `[c_out][c_in][k][k]`.

pub(crate) fn conv2d_same(input: &[f64], c_in: usize, n: usize, weight: &[f64], bias: &[f64], k: usize) -> Vec<f64> {
    let c_out = bias.len();
    let half = (k / 2) as isize;
    let nn = n * n;
    let mut out = vec![0.0; c_out * nn];
    for co in 0..c_out {
        let plane = &mut out[co * nn..(co + 1) * nn];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..c_in {
            let src = &input[ci * nn..(ci + 1) * nn];
            let wbase = (co * c_in + ci) * k * k;
            for i in 0..k {
                let di = i as isize - half;
                for j in 0..k {
                    let dj = j as isize - half;
                    let w = weight[wbase + i * k + j];
                    if w == 0.0 {
                        continue;
                    }
                    let r_lo = (-di).max(0) as usize;
                    let r_hi = (n as isize - di).min(n as isize) as usize;
                    let s_lo = (-dj).max(0) as usize;
                    let s_hi = (n as isize - dj).min(n as isize) as usize;
                    for r in r_lo..r_hi {
                        let sr = (r as isize + di) as usize;
                        let dst = &mut plane[r * n + s_lo..r * n + s_hi];
                        let from = (sr as isize * n as isize + s_lo as isize + dj) as usize;
                        let srow = &src[from..from + (s_hi - s_lo)];
                        for (d, s) in dst.iter_mut().zip(srow) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward pass of [`conv2d_same`]. Accumulates into `d_weight` and
/// `d_bias`; returns the input gradient when `want_input` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_same_backward(
    input: &[f64],
    c_in: usize,
    n: usize,
    weight: &[f64],
    k: usize,
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let c_out = d_bias.len();
    let half = (k / 2) as isize;
    let nn = n * n;
    let mut d_in = if want_input { Some(vec![0.0; c_in * nn]) } else { None };
    for co in 0..c_out {
        let g = &d_out[co * nn..(co + 1) * nn];
        d_bias[co] += g.iter().sum::<f64>();
        for ci in 0..c_in {
            let src = &input[ci * nn..(ci + 1) * nn];
            let wbase = (co * c_in + ci) * k * k;
            for i in 0..k {
                let di = i as isize - half;
                for j in 0..k {
                    let dj = j as isize - half;
                    let r_lo = (-di).max(0) as usize;
                    let r_hi = (n as isize - di).min(n as isize) as usize;
                    let s_lo = (-dj).max(0) as usize;
                    let s_hi = (n as isize - dj).min(n as isize) as usize;
                    let w = weight[wbase + i * k + j];
                    let mut acc = 0.0;
                    for r in r_lo..r_hi {
                        let sr = (r as isize + di) as usize;
                        let grow = &g[r * n + s_lo..r * n + s_hi];
                        let from = (sr as isize * n as isize + s_lo as isize + dj) as usize;
                        let srow = &src[from..from + (s_hi - s_lo)];
                        for (a, b) in grow.iter().zip(srow) {
                            acc += a * b;
                        }
                        if let Some(d_in) = d_in.as_mut() {
                            let dst = &mut d_in[ci * nn + from..ci * nn + from + (s_hi - s_lo)];
                            for (d, a) in dst.iter_mut().zip(grow) {
                                *d += w * a;
                            }
                        }
                    }
                    d_weight[wbase + i * k + j] += acc;
                }
            }
        }
    }
    d_in
}

/// `out = W x + b` with `W` stored row-major `[out][in]`.
pub(crate) fn dense(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            let row = &weight[o * n_in..(o + 1) * n_in];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Accumulates weight/bias gradients of [`dense`] and returns `W^T d_out`.
pub(crate) fn dense_backward(
    x: &[f64],
    weight: &[f64],
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) -> Vec<f64> {
    let n_in = x.len();
    let mut d_x = vec![0.0; n_in];
    for (o, &g) in d_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        d_bias[o] += g;
        let row = &weight[o * n_in..(o + 1) * n_in];
        let drow = &mut d_weight[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            drow[i] += g * x[i];
            d_x[i] += g * row[i];
        }
    }
    d_x
}

pub(crate) fn tanh_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// Multiplies an upstream gradient by `1 - tanh^2`, given the activations.
pub(crate) fn tanh_backward(act: &[f64], upstream: &mut [f64]) {
    for (g, a) in upstream.iter_mut().zip(act) {
        *g *= 1.0 - a * a;
    }
}
