mod common;

use common::{bicubic_oracle, conv_oracle, rand_tensor};
use hran_core::data::{bicubic_resize, Rng};
use hran_core::tensor::{conv2d, global_avg_pool, pixel_shuffle, pixel_unshuffle, ConvSpec};
use hran_core::Tensor4;

const CASES: usize = 120;
const TOL: f64 = 1e-5;

/// Largest element-wise error relative to the oracle's magnitude scale.
fn rel_max(got: &Tensor4<f64>, want: &Tensor4<f64>) -> f64 {
    assert_eq!(got.dims(), want.dims());
    let scale = want.data().iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    got.max_abs_diff(want) / scale
}

#[test]
fn conv2d_matches_direct_loops() {
    let mut rng = Rng::new(11);
    for case in 0..CASES {
        let d = 1 + case % 2;
        let k = [1, 3][rng.below(2)];
        let ci = 1 + rng.below(4);
        let co = 1 + rng.below(4);
        let h = 1 + rng.below(7);
        let w = 1 + rng.below(7);
        let n = 1 + rng.below(2);
        let spec = ConvSpec::same(ci, co, k, d);
        let x = rand_tensor::<f64>(&mut rng, [n, ci, h, w], 1.0);
        let wt = rand_tensor::<f64>(&mut rng, spec.weight_dims(), 1.0);
        let b: Vec<f64> = (0..co).map(|_| rng.next_f64() - 0.5).collect();
        let got = conv2d(&x, &spec, &wt, &b).unwrap();
        let want = conv_oracle(&x, &wt, &b, d, d * (k - 1) / 2);
        assert!(rel_max(&got, &want) < TOL, "case {case}: k={k} d={d} {h}x{w}");
    }
}

#[test]
fn conv2d_f32_tracks_f64_oracle() {
    let mut rng = Rng::new(12);
    for _ in 0..CASES {
        let d = 1 + rng.below(2);
        let spec = ConvSpec::same(3, 4, 3, d);
        let x = rand_tensor::<f64>(&mut rng, [1, 3, 6, 5], 1.0);
        let wt = rand_tensor::<f64>(&mut rng, spec.weight_dims(), 0.5);
        let b = vec![0.1, -0.2, 0.3, 0.0];
        let want = conv_oracle(&x, &wt, &b, d, d);
        let bf: Vec<f32> = b.iter().map(|&v| v as f32).collect();
        let got = conv2d(&x.cast::<f32>(), &spec, &wt.cast::<f32>(), &bf).unwrap();
        assert!(rel_max(&got.cast(), &want) < TOL);
    }
}

#[test]
fn pixel_shuffle_matches_index_formula() {
    let mut rng = Rng::new(13);
    for _ in 0..CASES {
        let r = [2, 3, 4][rng.below(3)];
        let c = 1 + rng.below(3);
        let (h, w) = (1 + rng.below(4), 1 + rng.below(4));
        let x = rand_tensor::<f64>(&mut rng, [1, c * r * r, h, w], 1.0);
        let got = pixel_shuffle(&x, r).unwrap();
        let want = Tensor4::from_fn([1, c, h * r, w * r], |[n, ch, y, xx]| {
            x.at(n, ch * r * r + (y % r) * r + xx % r, y / r, xx / r)
        });
        assert_eq!(got, want);
        assert_eq!(pixel_unshuffle(&got, r).unwrap(), x);
    }
}

#[test]
fn global_avg_pool_matches_mean() {
    let mut rng = Rng::new(14);
    for _ in 0..CASES {
        let (c, h, w) = (1 + rng.below(5), 1 + rng.below(9), 1 + rng.below(9));
        let x = rand_tensor::<f64>(&mut rng, [2, c, h, w], 3.0);
        let got = global_avg_pool(&x).unwrap();
        let want = Tensor4::from_fn([2, c, 1, 1], |[n, ch, _, _]| {
            x.plane(n, ch).iter().sum::<f64>() / (h * w) as f64
        });
        assert!(rel_max(&got, &want) < TOL);
    }
}

#[test]
fn bicubic_matches_direct_kernel_sum() {
    let mut rng = Rng::new(15);
    for case in 0..CASES {
        let (h, w) = (2 + rng.below(9), 2 + rng.below(9));
        let s = [2, 3, 4][rng.below(3)];
        let (oh, ow) = if case % 2 == 0 {
            (h * s, w * s)
        } else {
            (h.div_ceil(s), w.div_ceil(s))
        };
        let x = rand_tensor::<f64>(&mut rng, [1, 2, h, w], 1.0);
        let got = bicubic_resize(&x, oh, ow).unwrap();
        let want = bicubic_oracle(&x, oh, ow);
        assert!(rel_max(&got, &want) < TOL, "case {case}: {h}x{w} -> {oh}x{ow}");
    }
}

#[test]
fn bicubic_halving_8x8_known_weights() {
    // At exactly half size every output sits between two inputs; the
    // stretched kernel gives symmetric taps at distances 0.5, 1.5, 2.5, 3.5.
    let raw: Vec<f64> = [0.5, 1.5, 2.5, 3.5]
        .iter()
        .map(|&d: &f64| {
            let t: f64 = d / 2.0;
            if t <= 1.0 {
                0.5 * (1.5 * t * t * t - 2.5 * t * t + 1.0)
            } else {
                0.5 * (-0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0)
            }
        })
        .collect();
    let total = 2.0 * raw.iter().sum::<f64>();
    let taps: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let ramp = Tensor4::from_fn([1, 1, 1, 8], |[_, _, _, x]| (x * x) as f64);
    let got = bicubic_resize(
        &Tensor4::from_fn([1, 1, 8, 8], |[_, _, _, x]| (x * x) as f64),
        4,
        4,
    )
    .unwrap();
    // interior output column 1 is centred at 2.5: neighbours 2,3 then 1,4 then 0,5 then -1(->0),6
    let v = |i: isize| {
        let j = if i < 0 { -i - 1 } else { i };
        ramp.at(0, 0, 0, j as usize)
    };
    let want = taps[0] * (v(2) + v(3))
        + taps[1] * (v(1) + v(4))
        + taps[2] * (v(0) + v(5))
        + taps[3] * (v(-1) + v(6));
    assert!((got.at(0, 0, 2, 1) - want).abs() < 1e-9);
}
