//! Evaluation protocol: Y-channel PSNR/SSIM with a `scale`-pixel border crop,
//! and the 8-transform geometric self-ensemble.

mod ensemble;
mod eval;
mod quality;

pub use ensemble::{self_ensemble, GeomTransform};
pub use eval::{evaluate_dirs, evaluate_with, EvalReport, ImageScore};
pub use quality::{
    cropped_luma, psnr_from_mse, psnr_planes, psnr_y, ssim_planes, ssim_y, SSIM_K1, SSIM_K2, SSIM_SIGMA,
    SSIM_WINDOW,
};
