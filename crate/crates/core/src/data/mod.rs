//! Image I/O, colour conversion, bicubic (BI) degradation and training patch
//! sampling.
//!
//! Float images live in `[0, 1]` without mean subtraction.

mod dataset;
mod image;
mod resize;
mod rng;
mod synth;

pub use dataset::{
    bicubic_upscale, degrade, find_lr_counterpart, list_images, sample_batch, Dataset, PatchPair, TrainImage,
};
pub(crate) use image::write_atomic;
pub use image::{
    decode_ppm, encode_ppm, load_image, rgb_to_y, save_image, supported_extension, to_float, to_u8, ImageU8,
};
pub use resize::{bicubic_resize, contributions, cubic, Contribution};
pub use rng::Rng;
pub use synth::synthetic_image;
