use crate::data::{rgb_to_y, to_float, ImageU8};
use crate::tensor::Tensor4;
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

/// Y plane of `img` with `border` pixels removed from every side.
pub fn cropped_luma(img: &ImageU8, border: usize) -> Result<Tensor4<f64>> {
    let (w, h) = (img.width(), img.height());
    if 2 * border >= w || 2 * border >= h {
        return Err(Error::Data(format!(
            "border crop of {border} exceeds image {w}x{h}"
        )));
    }
    let y = rgb_to_y(&to_float::<f64>(img))?;
    y.crop(border, border, h - 2 * border, w - 2 * border)
}

fn check_pair(sr: &ImageU8, hr: &ImageU8) -> Result<()> {
    if (sr.width(), sr.height()) != (hr.width(), hr.height()) {
        return Err(Error::Data(format!(
            "image size mismatch: SR {}x{} vs HR {}x{}",
            sr.width(),
            sr.height(),
            hr.width(),
            hr.height()
        )));
    }
    Ok(())
}

/// PSNR in dB from an MSE on the 8-bit scale; `+∞` for `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

pub fn psnr_planes(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    psnr_from_mse(mse)
}

/// Y-channel PSNR after cropping `scale` pixels from each border.
pub fn psnr_y(sr: &ImageU8, hr: &ImageU8, scale: usize) -> Result<f64> {
    check_pair(sr, hr)?;
    Ok(psnr_planes(&cropped_luma(sr, scale)?, &cropped_luma(hr, scale)?))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW * SSIM_WINDOW)
        .map(|i| {
            let dy = (i / SSIM_WINDOW) as f64 - r;
            let dx = (i % SSIM_WINDOW) as f64 - r;
            (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean SSIM of two single-channel planes using 'valid' Gaussian filtering.
pub fn ssim_planes(a: &Tensor4<f64>, b: &Tensor4<f64>) -> Result<f64> {
    let (h, w) = (a.h(), a.w());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Data(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let win = gaussian_window();
    let (pa, pb) = (a.plane(0, 0), b.plane(0, 0));
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let g = win[ky * SSIM_WINDOW + kx];
                    let i = (y + ky) * w + x + kx;
                    let (u, v) = (pa[i], pb[i]);
                    ma += g * u;
                    mb += g * v;
                    saa += g * u * u;
                    sbb += g * v * v;
                    sab += g * u * v;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// Y-channel SSIM (11×11 Gaussian window, σ = 1.5) after the same border crop
/// as [`psnr_y`].
pub fn ssim_y(sr: &ImageU8, hr: &ImageU8, scale: usize) -> Result<f64> {
    check_pair(sr, hr)?;
    ssim_planes(&cropped_luma(sr, scale)?, &cropped_luma(hr, scale)?)
}
