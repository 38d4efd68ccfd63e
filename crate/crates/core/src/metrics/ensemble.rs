use crate::data::ImageU8;
use crate::tensor::{dihedral, Scalar, Tensor4};
use crate::Result;

/// One of the 8 elements of the dihedral group on the image plane: an
/// optional horizontal flip followed by `turns` counter-clockwise quarter
/// turns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GeomTransform {
    turns: u8,
    flip: bool,
}

impl GeomTransform {
    pub const IDENTITY: GeomTransform = GeomTransform {
        turns: 0,
        flip: false,
    };

    pub fn new(turns: u8, flip: bool) -> Self {
        GeomTransform {
            turns: turns % 4,
            flip,
        }
    }

    pub fn all() -> [GeomTransform; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, t) in out.iter_mut().enumerate() {
            *t = GeomTransform::new((i % 4) as u8, i >= 4);
        }
        out
    }

    pub fn turns(&self) -> u8 {
        self.turns
    }

    pub fn flip(&self) -> bool {
        self.flip
    }

    /// Reflections are involutions; pure rotations invert to the opposite turn.
    pub fn inverse(&self) -> Self {
        if self.flip {
            *self
        } else {
            GeomTransform::new((4 - self.turns) % 4, false)
        }
    }

    pub fn apply<T: Scalar>(&self, x: &Tensor4<T>) -> Tensor4<T> {
        dihedral(x, self.turns, self.flip)
    }

    pub fn apply_image(&self, img: &ImageU8) -> ImageU8 {
        let (w, h) = (img.width(), img.height());
        let t = Tensor4::<f32>::from_fn([1, 3, h, w], |[_, c, y, x]| img.pixel(x, y)[c] as f32);
        let r = self.apply(&t);
        ImageU8::from_fn(r.w(), r.h(), |x, y| [0, 1, 2].map(|c| r.at(0, c, y, x) as u8))
    }
}

/// Geometric self-ensemble: the mean over all 8 transforms `T` of
/// `T⁻¹(model(T(x)))`, accumulated in transform order before any
/// quantization.
pub fn self_ensemble<T, F>(model: F, x: &Tensor4<T>) -> Result<Tensor4<T>>
where
    T: Scalar,
    F: Fn(&Tensor4<T>) -> Result<Tensor4<T>>,
{
    let mut acc: Option<Tensor4<T>> = None;
    for t in GeomTransform::all() {
        let y = t.inverse().apply(&model(&t.apply(x))?);
        match &mut acc {
            None => acc = Some(y),
            Some(a) => crate::tensor::add_assign(a, &y)?,
        }
    }
    let inv = T::one() / T::of(8.0);
    Ok(acc.expect("8 transforms").scale(inv))
}
