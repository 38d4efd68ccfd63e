//! Dense rank-4 tensors and the differentiable kernels built on them.
//!
//! Layout is `(n, c, h, w)` row-major. Every kernel has a forward map and a
//! vector-Jacobian product (`*_vjp`) taking the upstream gradient. Kernels are
//! generic over [`Scalar`] so gradient checks can run in `f64` while
//! production code uses `f32`.

mod conv;
mod ops;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::{Error, Result};

pub use conv::{conv2d, conv2d_vjp, ConvGrads, ConvSpec};
pub use ops::{
    add, add_assign, concat_channels, dihedral, global_avg_pool, global_avg_pool_vjp, leaky_relu,
    leaky_relu_vjp, mul_broadcast, mul_broadcast_vjp, pixel_shuffle, pixel_unshuffle, sigmoid, sigmoid_vjp,
    split_channels,
};

/// Floating point element type used by tensors.
pub trait Scalar: Float + FromPrimitive + Default + Debug + Display + Send + Sync + Sum + 'static {
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar is representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: [usize; 4], value: T) -> Self {
        Tensor4 {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape("Tensor4::from_vec", "data", expected, data.len()));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for y in 0..dims[2] {
                    for x in 0..dims[3] {
                        data.push(f([n, c, y, x]));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    pub fn n(&self) -> usize {
        self.dims[0]
    }
    pub fn c(&self) -> usize {
        self.dims[1]
    }
    pub fn h(&self) -> usize {
        self.dims[2]
    }
    pub fn w(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Flat offset of `(n, c, y, x)`. Panics when any index is out of range.
    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [dn, dc, dh, dw] = self.dims;
        assert!(
            n < dn && c < dc && y < dh && x < dw,
            "index ({n}, {c}, {y}, {x}) out of range for dims {:?}",
            self.dims
        );
        ((n * dc + c) * dh + y) * dw + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, value: T) {
        let i = self.offset(n, c, y, x);
        self.data[i] = value;
    }

    /// The `h × w` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.h() * self.w();
        let start = self.offset(n, c, 0, 0);
        &self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// Copy of sample `n` as a batch of one.
    pub fn sample(&self, n: usize) -> Self {
        let per = self.c() * self.h() * self.w();
        Tensor4 {
            dims: [1, self.c(), self.h(), self.w()],
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Stack single-sample tensors along the batch axis.
    pub fn stack(samples: &[&Tensor4<T>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Data("cannot stack an empty list".into()))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        for s in samples {
            check_dim("Tensor4::stack", "channel", c, s.c())?;
            check_dim("Tensor4::stack", "height", h, s.h())?;
            check_dim("Tensor4::stack", "width", w, s.w())?;
            data.extend_from_slice(&s.data);
        }
        Ok(Tensor4 {
            dims: [data.len() / (c * h * w).max(1), c, h, w],
            data,
        })
    }

    /// Spatial crop `[y0, y0+h) × [x0, x0+w)` of every sample and channel.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.h() {
            return Err(Error::shape("Tensor4::crop", "height", self.h(), y0 + h));
        }
        if x0 + w > self.w() {
            return Err(Error::shape("Tensor4::crop", "width", self.w(), x0 + w));
        }
        let mut data = Vec::with_capacity(self.n() * self.c() * h * w);
        for n in 0..self.n() {
            for c in 0..self.c() {
                let plane = self.plane(n, c);
                for y in y0..y0 + h {
                    data.extend_from_slice(&plane[y * self.w() + x0..y * self.w() + x0 + w]);
                }
            }
        }
        Ok(Tensor4 {
            dims: [self.n(), self.c(), h, w],
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff on mismatched dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Value/gradient pair used as backpropagation state.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair<T = f32> {
    value: Tensor4<T>,
    grad: Tensor4<T>,
}

impl<T: Scalar> GradPair<T> {
    pub fn new(value: Tensor4<T>) -> Self {
        let grad = Tensor4::zeros(value.dims());
        GradPair { value, grad }
    }

    pub fn value(&self) -> &Tensor4<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor4<T> {
        &mut self.value
    }

    pub fn grad(&self) -> &Tensor4<T> {
        &self.grad
    }

    /// Mutable access to both halves at once (for optimizer updates).
    pub fn split_mut(&mut self) -> (&mut Tensor4<T>, &mut Tensor4<T>) {
        (&mut self.value, &mut self.grad)
    }

    pub fn accumulate(&mut self, g: &Tensor4<T>) -> Result<()> {
        check_same_dims("GradPair::accumulate", self.value.dims(), g.dims())?;
        for (a, &b) in self.grad.data.iter_mut().zip(&g.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.iter_mut().for_each(|v| *v = T::zero());
    }
}

pub(crate) fn check_dim(op: &'static str, axis: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(op, axis, expected, actual))
    }
}

pub(crate) fn check_same_dims(op: &'static str, a: [usize; 4], b: [usize; 4]) -> Result<()> {
    const AXES: [&str; 4] = ["batch", "channel", "height", "width"];
    for k in 0..4 {
        check_dim(op, AXES[k], a[k], b[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor4::<f32>::from_vec([1, 2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Tensor4::<f32>::from_vec([1, 2, 2, 2], vec![0.0; 8]).is_ok());
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn out_of_range_read_panics() {
        let t = Tensor4::<f32>::zeros([1, 1, 2, 2]);
        t.at(0, 0, 2, 0);
    }

    #[test]
    fn crop_and_stack() {
        let t = Tensor4::<f32>::from_fn([1, 1, 4, 4], |[_, _, y, x]| (y * 4 + x) as f32);
        let c = t.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.data(), &[6.0, 7.0, 10.0, 11.0]);
        let s = Tensor4::stack(&[&c, &c]).unwrap();
        assert_eq!(s.dims(), [2, 1, 2, 2]);
        assert_eq!(s.sample(1), c);
        assert!(t.crop(3, 0, 2, 2).is_err());
    }

    #[test]
    fn grad_pair_accumulates() {
        let mut p = GradPair::new(Tensor4::<f32>::zeros([1, 1, 1, 2]));
        let g = Tensor4::from_vec([1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        p.accumulate(&g).unwrap();
        p.accumulate(&g).unwrap();
        assert_eq!(p.grad().data(), &[2.0, 4.0]);
        p.zero_grad();
        assert_eq!(p.grad().data(), &[0.0, 0.0]);
        assert!(p.accumulate(&Tensor4::zeros([1, 1, 2, 1])).is_err());
    }
}
