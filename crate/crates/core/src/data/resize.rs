//! Separable cubic resampling following the MATLAB `imresize` convention:
//! Keys kernel with `a = −0.5`, kernel stretched by `1/scale` when shrinking
//! (antialiasing), centre-aligned sample positions and half-sample symmetric
//! boundary extension.

use crate::tensor::{Scalar, Tensor4};
use crate::{Error, Result};

const A: f64 = -0.5;

pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        (A + 2.0) * ax3 - (A + 3.0) * ax2 + 1.0
    } else if ax <= 2.0 {
        A * ax3 - 5.0 * A * ax2 + 8.0 * A * ax - 4.0 * A
    } else {
        0.0
    }
}

/// Source indices and normalized weights feeding one output sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Contribution {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Map a possibly out-of-range index onto `[0, len)` by symmetric reflection
/// (`-1 → 0`, `-2 → 1`, `len → len-1`).
fn reflect(i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

pub fn contributions(in_len: usize, out_len: usize) -> Vec<Contribution> {
    let scale = out_len as f64 / in_len as f64;
    let shrink = scale < 1.0;
    let width = if shrink { 4.0 / scale } else { 4.0 };
    let taps = width.ceil() as isize + 2;
    (0..out_len)
        .map(|o| {
            // Continuous source coordinate of output sample `o` (0-based).
            let u = (o as f64 + 0.5) / scale - 0.5;
            let left = (u - width / 2.0).floor() as isize;
            let mut indices = Vec::with_capacity(taps as usize);
            let mut weights = Vec::with_capacity(taps as usize);
            for j in left..left + taps {
                let dist = u - j as f64;
                let wgt = if shrink {
                    scale * cubic(scale * dist)
                } else {
                    cubic(dist)
                };
                if wgt != 0.0 {
                    indices.push(reflect(j, in_len));
                    weights.push(wgt);
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Contribution { indices, weights }
        })
        .collect()
}

fn resize_rows<T: Scalar>(x: &Tensor4<T>, out_h: usize) -> Tensor4<T> {
    let [n, c, h, w] = x.dims();
    let contrib = contributions(h, out_h);
    let mut out = Tensor4::zeros([n, c, out_h, w]);
    let src = x.data();
    crate::exec::for_each_chunk(out.data_mut(), out_h * w, |idx, plane| {
        let base = &src[idx * h * w..(idx + 1) * h * w];
        for (oy, ct) in contrib.iter().enumerate() {
            for ox in 0..w {
                let mut acc = 0.0;
                for (&i, &wt) in ct.indices.iter().zip(&ct.weights) {
                    acc += wt * base[i * w + ox].as_f64();
                }
                plane[oy * w + ox] = T::of(acc);
            }
        }
    });
    out
}

fn resize_cols<T: Scalar>(x: &Tensor4<T>, out_w: usize) -> Tensor4<T> {
    let [n, c, h, w] = x.dims();
    let contrib = contributions(w, out_w);
    let mut out = Tensor4::zeros([n, c, h, out_w]);
    let src = x.data();
    crate::exec::for_each_chunk(out.data_mut(), h * out_w, |idx, plane| {
        let base = &src[idx * h * w..(idx + 1) * h * w];
        for y in 0..h {
            let row = &base[y * w..(y + 1) * w];
            for (ox, ct) in contrib.iter().enumerate() {
                let mut acc = 0.0;
                for (&i, &wt) in ct.indices.iter().zip(&ct.weights) {
                    acc += wt * row[i].as_f64();
                }
                plane[y * out_w + ox] = T::of(acc);
            }
        }
    });
    out
}

/// Resize every channel plane to `out_h × out_w`. The dimension with the
/// smaller scale factor is processed first (height on ties).
pub fn bicubic_resize<T: Scalar>(x: &Tensor4<T>, out_h: usize, out_w: usize) -> Result<Tensor4<T>> {
    if out_h == 0 || out_w == 0 || x.h() == 0 || x.w() == 0 {
        return Err(Error::Data(format!(
            "bicubic_resize: cannot map {}x{} to {out_h}x{out_w}",
            x.h(),
            x.w()
        )));
    }
    let sh = out_h as f64 / x.h() as f64;
    let sw = out_w as f64 / x.w() as f64;
    Ok(if sw < sh {
        resize_rows(&resize_cols(x, out_w), out_h)
    } else {
        resize_cols(&resize_rows(x, out_h), out_w)
    })
}
