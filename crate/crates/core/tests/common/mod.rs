#![allow(dead_code, clippy::needless_range_loop)]

use hran_core::data::Rng;
use hran_core::model::ParamStore;
use hran_core::{Scalar, Tensor4};

pub fn rand_tensor<T: Scalar>(rng: &mut Rng, dims: [usize; 4], amp: f64) -> Tensor4<T> {
    Tensor4::from_fn(dims, |_| T::of((rng.next_f64() * 2.0 - 1.0) * amp))
}

/// Replace every parameter value with uniform noise of amplitude `amp`.
pub fn randomize<T: Scalar>(store: &mut ParamStore<T>, seed: u64, amp: f64) {
    let mut rng = Rng::new(seed);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let v = store.value_mut(&name).unwrap();
        for x in v.data_mut() {
            *x = T::of((rng.next_f64() * 2.0 - 1.0) * amp);
        }
    }
}

pub fn zero_param<T: Scalar>(store: &mut ParamStore<T>, name: &str) {
    store
        .value_mut(name)
        .unwrap()
        .data_mut()
        .iter_mut()
        .for_each(|x| *x = T::zero());
}

pub fn fill_param<T: Scalar>(store: &mut ParamStore<T>, name: &str, v: f64) {
    store
        .value_mut(name)
        .unwrap()
        .data_mut()
        .iter_mut()
        .for_each(|x| *x = T::of(v));
}

/// |a - b| / max(|a|, |b|, floor)
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn dot<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.as_f64() * y.as_f64())
        .sum()
}

/// Direct nested-loop convolution with zero padding, stride 1.
pub fn conv_oracle(
    x: &Tensor4<f64>,
    w: &Tensor4<f64>,
    b: &[f64],
    dilation: usize,
    pad: usize,
) -> Tensor4<f64> {
    let [n, ci, h, wd] = x.dims();
    let [co, _, kh, kw] = w.dims();
    let oh = h + 2 * pad - dilation * (kh - 1);
    let ow = wd + 2 * pad - dilation * (kw - 1);
    Tensor4::from_fn([n, co, oh, ow], |[bn, o, y, xx]| {
        let mut acc = b[o];
        for i in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let sy = (y + ky * dilation) as isize - pad as isize;
                    let sx = (xx + kx * dilation) as isize - pad as isize;
                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                        acc += w.at(o, i, ky, kx) * x.at(bn, i, sy as usize, sx as usize);
                    }
                }
            }
        }
        acc
    })
}

/// Direct evaluation of the MATLAB-style cubic resize at one output sample
/// along one axis: weights from the kernel formula over every integer tap,
/// folded by symmetric reflection, normalized.
pub fn cubic_axis_weights(in_len: usize, out_len: usize, o: usize) -> Vec<f64> {
    fn keys(x: f64) -> f64 {
        let a = -0.5;
        let t = x.abs();
        if t <= 1.0 {
            1.0 - (a + 3.0) * t * t + (a + 2.0) * t * t * t
        } else if t <= 2.0 {
            -4.0 * a + 8.0 * a * t - 5.0 * a * t * t + a * t * t * t
        } else {
            0.0
        }
    }
    let s = out_len as f64 / in_len as f64;
    let k = s.min(1.0);
    let centre = (o as f64 + 0.5) / s - 0.5;
    let mut w = vec![0.0; in_len];
    let reach = (2.0 / k).ceil() as isize + 2;
    let c = centre.floor() as isize;
    for j in c - reach..=c + reach {
        let v = k * keys(k * (centre - j as f64));
        // fold j onto [0, in_len) by mirroring about -0.5 and in_len-0.5
        let mut m = j;
        loop {
            if m < 0 {
                m = -m - 1;
            } else if m >= in_len as isize {
                m = 2 * in_len as isize - m - 1;
            } else {
                break;
            }
        }
        w[m as usize] += v;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

pub fn bicubic_oracle(x: &Tensor4<f64>, oh: usize, ow: usize) -> Tensor4<f64> {
    let [n, c, h, w] = x.dims();
    let wy: Vec<Vec<f64>> = (0..oh).map(|o| cubic_axis_weights(h, oh, o)).collect();
    let wx: Vec<Vec<f64>> = (0..ow).map(|o| cubic_axis_weights(w, ow, o)).collect();
    Tensor4::from_fn([n, c, oh, ow], |[b, ch, y, xx]| {
        let mut acc = 0.0;
        for i in 0..h {
            for j in 0..w {
                acc += wy[y][i] * wx[xx][j] * x.at(b, ch, i, j);
            }
        }
        acc
    })
}
