use super::{check_dim, check_same_dims, Scalar, Tensor4};
use crate::exec::for_each_chunk;
use crate::{Error, Result};

/// Elementwise `max(x, slope·x)` for `slope ∈ (0, 1)`.
pub fn leaky_relu<T: Scalar>(x: &Tensor4<T>, slope: T) -> Tensor4<T> {
    x.map(|v| if v >= T::zero() { v } else { v * slope })
}

/// Upstream gradient gated by the piecewise slope, evaluated at the
/// pre-activation `x`.
pub fn leaky_relu_vjp<T: Scalar>(x: &Tensor4<T>, slope: T, upstream: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_same_dims("leaky_relu_vjp", x.dims(), upstream.dims())?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &g)| if v >= T::zero() { g } else { g * slope })
        .collect();
    Tensor4::from_vec(x.dims(), data)
}

pub fn sigmoid<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Gradient through the sigmoid, given its forward *output* `y`.
pub fn sigmoid_vjp<T: Scalar>(y: &Tensor4<T>, upstream: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_same_dims("sigmoid_vjp", y.dims(), upstream.dims())?;
    let data = y
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor4::from_vec(y.dims(), data)
}

/// Mean over the spatial axes, producing `(n, c, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    let hw = x.h() * x.w();
    if hw == 0 {
        return Err(Error::Data("global_avg_pool on an empty spatial extent".into()));
    }
    let inv = T::one() / T::of(hw as f64);
    let data = x
        .data()
        .chunks(hw)
        .map(|plane| plane.iter().fold(T::zero(), |a, &v| a + v) * inv)
        .collect();
    Tensor4::from_vec([x.n(), x.c(), 1, 1], data)
}

/// Spreads each pooled gradient uniformly as `g / (h·w)`.
pub fn global_avg_pool_vjp<T: Scalar>(upstream: &Tensor4<T>, h: usize, w: usize) -> Result<Tensor4<T>> {
    check_dim("global_avg_pool_vjp", "upstream height", 1, upstream.h())?;
    check_dim("global_avg_pool_vjp", "upstream width", 1, upstream.w())?;
    if h * w == 0 {
        return Err(Error::Data(
            "global_avg_pool_vjp on an empty spatial extent".into(),
        ));
    }
    let inv = T::one() / T::of((h * w) as f64);
    let mut out = Tensor4::zeros([upstream.n(), upstream.c(), h, w]);
    let up = upstream.data();
    for_each_chunk(out.data_mut(), h * w, |idx, plane| plane.fill(up[idx] * inv));
    Ok(out)
}

/// `out[n, o, y·r+dy, x·r+dx] = in[n, o·r² + dy·r + dx, y, x]`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.dims();
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::Config(format!(
            "pixel_shuffle: channel count {c} is not divisible by {r}²"
        )));
    }
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let src = x.data();
    let mut out = Tensor4::zeros([n, oc, oh, ow]);
    for_each_chunk(out.data_mut(), oh * ow, |idx, plane| {
        let (b, o) = (idx / oc, idx % oc);
        for yy in 0..oh {
            for xx in 0..ow {
                let ch = o * r * r + (yy % r) * r + xx % r;
                plane[yy * ow + xx] = src[((b * c + ch) * h + yy / r) * w + xx / r];
            }
        }
    });
    Ok(out)
}

/// Inverse of [`pixel_shuffle`]; also its vector-Jacobian product.
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor4<T>, r: usize) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.dims();
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::Config(format!(
            "pixel_unshuffle: spatial extent {h}x{w} is not divisible by {r}"
        )));
    }
    let (oh, ow, oc) = (h / r, w / r, c * r * r);
    let src = x.data();
    let mut out = Tensor4::zeros([n, oc, oh, ow]);
    for_each_chunk(out.data_mut(), oh * ow, |idx, plane| {
        let (b, ch) = (idx / oc, idx % oc);
        let (o, sub) = (ch / (r * r), ch % (r * r));
        let (dy, dx) = (sub / r, sub % r);
        for y in 0..oh {
            for x in 0..ow {
                plane[y * ow + x] = src[((b * c + o) * h + y * r + dy) * w + x * r + dx];
            }
        }
    });
    Ok(out)
}

/// Stack along the channel axis in argument order.
pub fn concat_channels<T: Scalar>(xs: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::Data("concat_channels on an empty list".into()))?;
    let [n, _, h, w] = first.dims();
    for t in xs {
        check_dim("concat_channels", "batch", n, t.n())?;
        check_dim("concat_channels", "height", h, t.h())?;
        check_dim("concat_channels", "width", w, t.w())?;
    }
    let total: usize = xs.iter().map(|t| t.c()).sum();
    let mut data = Vec::with_capacity(n * total * h * w);
    for b in 0..n {
        for t in xs {
            let per = t.c() * h * w;
            data.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
        }
    }
    Tensor4::from_vec([n, total, h, w], data)
}

/// Split along the channel axis into consecutive ranges of the given sizes.
/// This is the vector-Jacobian product of [`concat_channels`].
pub fn split_channels<T: Scalar>(x: &Tensor4<T>, sizes: &[usize]) -> Result<Vec<Tensor4<T>>> {
    let [n, c, h, w] = x.dims();
    check_dim("split_channels", "channel", c, sizes.iter().sum())?;
    let mut parts: Vec<Vec<T>> = sizes.iter().map(|s| Vec::with_capacity(n * s * h * w)).collect();
    for b in 0..n {
        let mut start = (b * c) * h * w;
        for (part, &s) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&x.data()[start..start + s * h * w]);
            start += s * h * w;
        }
    }
    parts
        .into_iter()
        .zip(sizes)
        .map(|(data, &s)| Tensor4::from_vec([n, s, h, w], data))
        .collect()
}

pub fn add<T: Scalar>(x: &Tensor4<T>, y: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_same_dims("add", x.dims(), y.dims())?;
    let data = x.data().iter().zip(y.data()).map(|(&a, &b)| a + b).collect();
    Tensor4::from_vec(x.dims(), data)
}

pub fn add_assign<T: Scalar>(acc: &mut Tensor4<T>, y: &Tensor4<T>) -> Result<()> {
    check_same_dims("add_assign", acc.dims(), y.dims())?;
    for (a, &b) in acc.data_mut().iter_mut().zip(y.data()) {
        *a = *a + b;
    }
    Ok(())
}

fn check_gate<T: Scalar>(op: &'static str, x: &Tensor4<T>, gate: &Tensor4<T>) -> Result<()> {
    check_dim(op, "gate batch", x.n(), gate.n())?;
    check_dim(op, "gate channel", x.c(), gate.c())?;
    check_dim(op, "gate height", 1, gate.h())?;
    check_dim(op, "gate width", 1, gate.w())
}

/// Scale every channel plane of `x` by the matching entry of `gate (n,c,1,1)`.
pub fn mul_broadcast<T: Scalar>(x: &Tensor4<T>, gate: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_gate("mul_broadcast", x, gate)?;
    let hw = x.h() * x.w();
    let g = gate.data();
    let src = x.data();
    let mut out = Tensor4::zeros(x.dims());
    for_each_chunk(out.data_mut(), hw, |idx, plane| {
        for (o, &v) in plane.iter_mut().zip(&src[idx * hw..(idx + 1) * hw]) {
            *o = v * g[idx];
        }
    });
    Ok(out)
}

/// Returns `(∂/∂x, ∂/∂gate)` of `Σ upstream ⊙ mul_broadcast(x, gate)`.
pub fn mul_broadcast_vjp<T: Scalar>(
    x: &Tensor4<T>,
    gate: &Tensor4<T>,
    upstream: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    check_gate("mul_broadcast_vjp", x, gate)?;
    check_same_dims("mul_broadcast_vjp", x.dims(), upstream.dims())?;
    let gx = mul_broadcast(upstream, gate)?;
    let hw = x.h() * x.w();
    let data = x
        .data()
        .chunks(hw)
        .zip(upstream.data().chunks(hw))
        .map(|(xs, us)| xs.iter().zip(us).fold(T::zero(), |a, (&v, &u)| a + v * u))
        .collect();
    Ok((gx, Tensor4::from_vec(gate.dims(), data)?))
}

/// Dihedral transform of the spatial plane: optional horizontal flip
/// followed by `quarter_turns` counter-clockwise 90° rotations.
pub fn dihedral<T: Scalar>(x: &Tensor4<T>, quarter_turns: u8, flip: bool) -> Tensor4<T> {
    let [n, c, h, w] = x.dims();
    let k = quarter_turns % 4;
    let (oh, ow) = if k.is_multiple_of(2) { (h, w) } else { (w, h) };
    let src = x.data();
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    for_each_chunk(out.data_mut(), oh * ow, |idx, plane| {
        let base = &src[idx * h * w..(idx + 1) * h * w];
        for yo in 0..oh {
            for xo in 0..ow {
                // Undo the rotation to find the (flipped) source coordinate.
                let (ys, xs) = match k {
                    0 => (yo, xo),
                    1 => (xo, w - 1 - yo),
                    2 => (h - 1 - yo, w - 1 - xo),
                    _ => (h - 1 - xo, yo),
                };
                let xs = if flip { w - 1 - xs } else { xs };
                plane[yo * ow + xo] = base[ys * w + xs];
            }
        }
    });
    out
}
