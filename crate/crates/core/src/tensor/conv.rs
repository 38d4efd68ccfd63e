use super::{check_dim, Scalar, Tensor4};
use crate::exec::for_each_chunk;
use crate::{Error, Result};

/// Stride-1 dilated 2-D convolution with zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: (usize, usize),
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Square `k × k` kernel with the padding that preserves spatial extent.
    pub fn same(in_channels: usize, out_channels: usize, k: usize, dilation: usize) -> Self {
        assert!(k % 2 == 1, "same-padding needs an odd kernel, got {k}");
        assert!(dilation >= 1, "dilation must be positive");
        ConvSpec {
            out_channels,
            in_channels,
            kernel: (k, k),
            dilation,
            padding: dilation * (k - 1) / 2,
        }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.fan_in() + self.out_channels
    }

    /// Output spatial extent for an input of `h × w`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let reach_h = self.dilation * (self.kernel.0 - 1);
        let reach_w = self.dilation * (self.kernel.1 - 1);
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph <= reach_h || pw <= reach_w {
            return Err(Error::Config(format!(
                "conv input {h}x{w} too small for kernel reach {reach_h}x{reach_w}"
            )));
        }
        Ok((ph - reach_h, pw - reach_w))
    }

    fn check(&self, input: [usize; 4], weight: [usize; 4], bias_len: usize) -> Result<()> {
        check_dim("conv2d", "input channel", self.in_channels, input[1])?;
        let wd = self.weight_dims();
        check_dim("conv2d", "weight out-channel", wd[0], weight[0])?;
        check_dim("conv2d", "weight in-channel", wd[1], weight[1])?;
        check_dim("conv2d", "weight kernel-height", wd[2], weight[2])?;
        check_dim("conv2d", "weight kernel-width", wd[3], weight[3])?;
        check_dim("conv2d", "bias", self.out_channels, bias_len)
    }
}

/// Range of output coordinates whose tap at `offset` lands inside `[0, len)`.
#[inline]
fn valid_range(offset: isize, out_len: usize, in_len: usize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (in_len as isize - offset).clamp(0, out_len as isize) as usize;
    (lo.min(hi), hi)
}

/// `out[n,o,y,x] = bias[o] + Σ_{i,ky,kx} w[o,i,ky,kx] · in[n,i,y+d·ky−p,x+d·kx−p]`.
///
/// Taps that fall in the zero padding are skipped; the remaining taps are
/// accumulated in ascending `(i, ky, kx)` order for every output element.
pub fn conv2d<T: Scalar>(
    input: &Tensor4<T>,
    spec: &ConvSpec,
    weight: &Tensor4<T>,
    bias: &[T],
) -> Result<Tensor4<T>> {
    spec.check(input.dims(), weight.dims(), bias.len())?;
    let [n, ci, h, w] = input.dims();
    let (oh, ow) = spec.output_hw(h, w)?;
    let co = spec.out_channels;
    let (kh, kw) = spec.kernel;
    let (d, pad) = (spec.dilation as isize, spec.padding as isize);
    let wt = weight.data();
    let src = input.data();

    let mut out = Tensor4::zeros([n, co, oh, ow]);
    for_each_chunk(out.data_mut(), oh * ow, |idx, plane| {
        let (b, o) = (idx / co, idx % co);
        plane.fill(bias[o]);
        for i in 0..ci {
            let src_plane = &src[(b * ci + i) * h * w..][..h * w];
            for ky in 0..kh {
                let dy = ky as isize * d - pad;
                let (y0, y1) = valid_range(dy, oh, h);
                for kx in 0..kw {
                    let dx = kx as isize * d - pad;
                    let (x0, x1) = valid_range(dx, ow, w);
                    let wv = wt[((o * ci + i) * kh + ky) * kw + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let srow = &src_plane[sy * w..(sy + 1) * w];
                        let orow = &mut plane[y * ow..(y + 1) * ow];
                        for x in x0..x1 {
                            orow[x] = orow[x] + wv * srow[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

/// Gradients of `Σ upstream ⊙ conv2d(input)` with respect to input, weight
/// and bias.
pub fn conv2d_vjp<T: Scalar>(
    input: &Tensor4<T>,
    spec: &ConvSpec,
    weight: &Tensor4<T>,
    upstream: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    spec.check(input.dims(), weight.dims(), spec.out_channels)?;
    let [n, ci, h, w] = input.dims();
    let (oh, ow) = spec.output_hw(h, w)?;
    let co = spec.out_channels;
    check_dim("conv2d_vjp", "upstream batch", n, upstream.n())?;
    check_dim("conv2d_vjp", "upstream channel", co, upstream.c())?;
    check_dim("conv2d_vjp", "upstream height", oh, upstream.h())?;
    check_dim("conv2d_vjp", "upstream width", ow, upstream.w())?;

    let (kh, kw) = spec.kernel;
    let (d, pad) = (spec.dilation as isize, spec.padding as isize);
    let up = upstream.data();
    let src = input.data();
    let wt = weight.data();

    let mut bias = vec![T::zero(); co];
    for_each_chunk(&mut bias, 1, |o, slot| {
        let mut acc = T::zero();
        for b in 0..n {
            for &g in &up[(b * co + o) * oh * ow..][..oh * ow] {
                acc = acc + g;
            }
        }
        slot[0] = acc;
    });

    let mut gw = Tensor4::zeros(spec.weight_dims());
    for_each_chunk(gw.data_mut(), kh * kw, |idx, taps| {
        let (o, i) = (idx / ci, idx % ci);
        for ky in 0..kh {
            let dy = ky as isize * d - pad;
            let (y0, y1) = valid_range(dy, oh, h);
            for kx in 0..kw {
                let dx = kx as isize * d - pad;
                let (x0, x1) = valid_range(dx, ow, w);
                let mut acc = T::zero();
                for b in 0..n {
                    let up_plane = &up[(b * co + o) * oh * ow..][..oh * ow];
                    let src_plane = &src[(b * ci + i) * h * w..][..h * w];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        for x in x0..x1 {
                            acc = acc + up_plane[y * ow + x] * src_plane[sy * w + (x as isize + dx) as usize];
                        }
                    }
                }
                taps[ky * kw + kx] = acc;
            }
        }
    });

    let mut gi = Tensor4::zeros([n, ci, h, w]);
    for_each_chunk(gi.data_mut(), h * w, |idx, plane| {
        let (b, i) = (idx / ci, idx % ci);
        for o in 0..co {
            let up_plane = &up[(b * co + o) * oh * ow..][..oh * ow];
            for ky in 0..kh {
                let dy = ky as isize * d - pad;
                let (y0, y1) = valid_range(dy, oh, h);
                for kx in 0..kw {
                    let dx = kx as isize * d - pad;
                    let (x0, x1) = valid_range(dx, ow, w);
                    let wv = wt[((o * ci + i) * kh + ky) * kw + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        for x in x0..x1 {
                            let sx = (x as isize + dx) as usize;
                            plane[sy * w + sx] = plane[sy * w + sx] + wv * up_plane[y * ow + x];
                        }
                    }
                }
            }
        }
    });

    Ok(ConvGrads {
        input: gi,
        weight: gw,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_1x1(c: usize) -> Tensor4<f32> {
        Tensor4::from_fn([c, c, 1, 1], |[o, i, _, _]| if o == i { 1.0 } else { 0.0 })
    }

    fn ramp(dims: [usize; 4]) -> Tensor4<f32> {
        let mut k = 0.0f32;
        Tensor4::from_fn(dims, |_| {
            k += 1.0;
            (k * 0.37).sin()
        })
    }

    #[test]
    fn identity_kernel_is_bit_exact() {
        let x = ramp([2, 3, 5, 4]);
        let spec = ConvSpec::same(3, 3, 1, 1);
        let y = conv2d(&x, &spec, &identity_1x1(3), &[0.0; 3]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_weight_gives_bias() {
        let x = ramp([1, 2, 4, 4]);
        let spec = ConvSpec::same(2, 3, 3, 2);
        let y = conv2d(&x, &spec, &Tensor4::zeros(spec.weight_dims()), &[1.0, -2.0, 0.5]).unwrap();
        for o in 0..3 {
            assert!(y.plane(0, o).iter().all(|&v| v == [1.0, -2.0, 0.5][o]));
        }
    }

    #[test]
    fn dilated_center_tap_sum() {
        // Center output of a 5x5 ramp under a d=2 ones kernel sums the
        // even-offset taps 0,2,4,10,12,14,20,22,24.
        let x = Tensor4::from_fn([1, 1, 5, 5], |[_, _, y, x]| (y * 5 + x) as f32);
        let spec = ConvSpec::same(1, 1, 3, 2);
        let y = conv2d(&x, &spec, &Tensor4::full([1, 1, 3, 3], 1.0), &[0.0]).unwrap();
        let mut direct = 0.0;
        for ky in 0..3 {
            for kx in 0..3 {
                direct += x.at(0, 0, 2 * ky, 2 * kx);
            }
        }
        assert_eq!(direct, 108.0);
        assert_eq!(y.at(0, 0, 2, 2), direct);
    }

    #[test]
    fn same_padding_preserves_extent() {
        for k in [1, 3] {
            for d in [1, 2] {
                let spec = ConvSpec::same(2, 2, k, d);
                for (h, w) in [(1, 1), (3, 7), (8, 8)] {
                    assert_eq!(spec.output_hw(h, w).unwrap(), (h, w));
                }
            }
        }
    }

    #[test]
    fn shape_errors_name_the_axis() {
        let spec = ConvSpec::same(3, 2, 3, 1);
        let x = Tensor4::<f32>::zeros([1, 4, 4, 4]);
        let err = conv2d(&x, &spec, &Tensor4::zeros(spec.weight_dims()), &[0.0; 2]).unwrap_err();
        assert!(err.to_string().contains("input channel"), "{err}");
        let x = Tensor4::<f32>::zeros([1, 3, 4, 4]);
        let err = conv2d(&x, &spec, &Tensor4::zeros(spec.weight_dims()), &[0.0; 3]).unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
    }

    #[test]
    fn vjp_zero_upstream_and_identity() {
        let x = ramp([1, 3, 4, 4]);
        let spec = ConvSpec::same(3, 3, 1, 1);
        let wt = identity_1x1(3);
        let g = conv2d_vjp(&x, &spec, &wt, &Tensor4::zeros(x.dims())).unwrap();
        assert!(g
            .input
            .data()
            .iter()
            .chain(g.weight.data())
            .chain(&g.bias)
            .all(|&v| v == 0.0));
        let up = ramp([1, 3, 4, 4]).scale(2.0);
        let g = conv2d_vjp(&x, &spec, &wt, &up).unwrap();
        assert_eq!(g.input, up);
    }
}
