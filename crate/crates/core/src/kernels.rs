//! Raw slice kernels shared by the tape and the plain (non-recording) APIs.
//!
//! Rank-3 buffers are row-major `[B, C, n]`.

use crate::par::kernel_chunks;

/// `out[b,c,t] = Σ_f w[c,f]·x[b,f,t] + bias[c]`.
pub(crate) fn linear_forward(
    x: &[f64],
    (batch, fin, n): (usize, usize, usize),
    w: &[f64],
    fout: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * fout * n];
    kernel_chunks(&mut out, fout * n, |b, ob| {
        let xb = &x[b * fin * n..(b + 1) * fin * n];
        for c in 0..fout {
            let row = &mut ob[c * n..(c + 1) * n];
            if let Some(bias) = bias {
                row.iter_mut().for_each(|v| *v = bias[c]);
            }
            for f in 0..fin {
                let wcf = w[c * fin + f];
                if wcf == 0.0 {
                    continue;
                }
                let xr = &xb[f * n..(f + 1) * n];
                for (o, &xv) in row.iter_mut().zip(xr) {
                    *o += wcf * xv;
                }
            }
        }
    });
    out
}

/// Gradient of `linear_forward` w.r.t. its input: `gx[b,f,t] = Σ_c w[c,f]·g[b,c,t]`.
pub(crate) fn linear_backward_input(
    g: &[f64],
    (batch, fin, n): (usize, usize, usize),
    w: &[f64],
    fout: usize,
) -> Vec<f64> {
    let mut gx = vec![0.0; batch * fin * n];
    kernel_chunks(&mut gx, fin * n, |b, gxb| {
        let gb = &g[b * fout * n..(b + 1) * fout * n];
        for c in 0..fout {
            let gr = &gb[c * n..(c + 1) * n];
            for f in 0..fin {
                let wcf = w[c * fin + f];
                if wcf == 0.0 {
                    continue;
                }
                for (o, &gv) in gxb[f * n..(f + 1) * n].iter_mut().zip(gr) {
                    *o += wcf * gv;
                }
            }
        }
    });
    gx
}

/// Gradient w.r.t. the weight matrix: `gw[c,f] = Σ_{b,t} g[b,c,t]·x[b,f,t]`.
pub(crate) fn linear_backward_weight(
    g: &[f64],
    x: &[f64],
    (batch, fin, n): (usize, usize, usize),
    fout: usize,
) -> Vec<f64> {
    let mut gw = vec![0.0; fout * fin];
    for b in 0..batch {
        let xb = &x[b * fin * n..(b + 1) * fin * n];
        let gb = &g[b * fout * n..(b + 1) * fout * n];
        for c in 0..fout {
            let gr = &gb[c * n..(c + 1) * n];
            for f in 0..fin {
                let xr = &xb[f * n..(f + 1) * n];
                gw[c * fin + f] += gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    gw
}

pub(crate) fn linear_backward_bias(g: &[f64], batch: usize, fout: usize, n: usize) -> Vec<f64> {
    let mut gb = vec![0.0; fout];
    for b in 0..batch {
        for (c, acc) in gb.iter_mut().enumerate() {
            let off = (b * fout + c) * n;
            *acc += g[off..off + n].iter().sum::<f64>();
        }
    }
    gb
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 {
        i += n;
    }
    (i % n) as usize
}

/// Periodic convolve-and-decimate over every length-`n` row:
/// `out[k] = Σ_j h[j]·x[(2k − j) mod n]`, keeping even-indexed outputs.
pub(crate) fn analysis(x: &[f64], n: usize, h: &[f64]) -> Vec<f64> {
    let rows = x.len() / n;
    let half = n / 2;
    let mut out = vec![0.0; rows * half];
    kernel_chunks(&mut out, half, |r, orow| {
        let xr = &x[r * n..(r + 1) * n];
        for (k, o) in orow.iter_mut().enumerate() {
            let base = 2 * k as isize;
            let mut acc = 0.0;
            for (j, &hj) in h.iter().enumerate() {
                acc += hj * xr[wrap(base - j as isize, n)];
            }
            *o = acc;
        }
    });
    out
}

/// Transpose of [`analysis`]: scatters each coefficient back through the
/// filter, `out[(2k − j) mod n] += h[j]·c[k]`. `c` has rows of length `n/2`.
pub(crate) fn analysis_transpose_into(c: &[f64], n: usize, h: &[f64], out: &mut [f64]) {
    let half = n / 2;
    kernel_chunks(out, n, |r, orow| {
        let cr = &c[r * half..(r + 1) * half];
        for (k, &ck) in cr.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            let base = 2 * k as isize;
            for (j, &hj) in h.iter().enumerate() {
                orow[wrap(base - j as isize, n)] += hj * ck;
            }
        }
    });
}

/// `out[b,o,t] = Σ_i r[i,o,t]·v[b,i,t]`.
pub(crate) fn kernel_multiply(
    v: &[f64],
    (batch, din, k): (usize, usize, usize),
    r: &[f64],
    dout: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * dout * k];
    kernel_chunks(&mut out, dout * k, |b, ob| {
        let vb = &v[b * din * k..(b + 1) * din * k];
        for i in 0..din {
            let vr = &vb[i * k..(i + 1) * k];
            for o in 0..dout {
                let rr = &r[(i * dout + o) * k..(i * dout + o + 1) * k];
                for ((acc, &rv), &vv) in ob[o * k..(o + 1) * k].iter_mut().zip(rr).zip(vr) {
                    *acc += rv * vv;
                }
            }
        }
    });
    out
}
