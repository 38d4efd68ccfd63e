use std::fs;
use std::path::{Path, PathBuf};

use super::image::{load_image, supported_extension, to_float, to_u8, ImageU8};
use super::resize::bicubic_resize;
use super::rng::Rng;
use crate::metrics::GeomTransform;
use crate::tensor::Tensor4;
use crate::{Error, Result};

/// BI degradation: center-crop to a multiple of `scale`, bicubic downscale by
/// `scale`, re-quantize to 8 bits.
pub fn degrade(hr: &ImageU8, scale: usize) -> Result<ImageU8> {
    let hr = hr.crop_to_multiple(scale)?;
    let t = to_float::<f32>(&hr);
    let lr = bicubic_resize(&t, hr.height() / scale, hr.width() / scale)?;
    to_u8(&lr, 0)
}

/// Bicubic upscale of an 8-bit image by `scale`, re-quantized.
pub fn bicubic_upscale(lr: &ImageU8, scale: usize) -> Result<ImageU8> {
    let t = to_float::<f32>(lr);
    let up = bicubic_resize(&t, lr.height() * scale, lr.width() * scale)?;
    to_u8(&up, 0)
}

/// One aligned LR/HR training image, stored as `(1, 3, h, w)` floats.
#[derive(Clone, Debug)]
pub struct TrainImage {
    pub id: String,
    pub lr: Tensor4,
    pub hr: Tensor4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub lr: Tensor4,
    pub hr: Tensor4,
    pub source: String,
    /// Crop origin `(y, x)` in LR coordinates; the HR origin is `scale ×` it.
    pub origin: (usize, usize),
    pub transform: GeomTransform,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    scale: usize,
    images: Vec<TrainImage>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

/// Sorted image files in `dir` readable by this build.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && supported_extension(p))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Look for `<stem>x<scale>.<ext>` in `lr_dir`.
pub fn find_lr_counterpart(lr_dir: &Path, stem: &str, scale: usize) -> Option<PathBuf> {
    let base = format!("{stem}x{scale}");
    ["ppm", "png", "bmp"]
        .iter()
        .map(|ext| lr_dir.join(format!("{base}.{ext}")))
        .find(|p| p.is_file() && supported_extension(p))
}

impl Dataset {
    /// Build from in-memory HR images; LR inputs are synthesized with
    /// [`degrade`].
    pub fn from_hr_images(images: Vec<(String, ImageU8)>, scale: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(images.len());
        for (id, hr) in images {
            let hr = hr.crop_to_multiple(scale)?;
            let lr = degrade(&hr, scale)?;
            out.push(TrainImage {
                id,
                lr: to_float(&lr),
                hr: to_float(&hr),
            });
        }
        Ok(Dataset { scale, images: out })
    }

    /// Build from explicit LR/HR pairs; HR must be exactly `scale ×` LR.
    pub fn from_pairs(pairs: Vec<(String, ImageU8, ImageU8)>, scale: usize) -> Result<Self> {
        let mut images = Vec::with_capacity(pairs.len());
        for (id, lr, hr) in pairs {
            if hr.width() != scale * lr.width() || hr.height() != scale * lr.height() {
                return Err(Error::Data(format!(
                    "{id}: HR {}x{} is not {scale}x LR {}x{}",
                    hr.width(),
                    hr.height(),
                    lr.width(),
                    lr.height()
                )));
            }
            images.push(TrainImage {
                id,
                lr: to_float(&lr),
                hr: to_float(&hr),
            });
        }
        Ok(Dataset { scale, images })
    }

    /// Load every HR image from `hr_dir` (or the files listed in `manifest`,
    /// one path per line). When `lr_dir` holds `<stem>x<scale>.<ext>` it is
    /// used as the LR input, otherwise LR is generated on the fly.
    pub fn load(hr_dir: &Path, lr_dir: Option<&Path>, manifest: Option<&Path>, scale: usize) -> Result<Self> {
        let paths = match manifest {
            Some(m) => {
                let text = fs::read_to_string(m).map_err(|e| Error::io(m, e))?;
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(|l| {
                        let p = PathBuf::from(l);
                        if p.is_absolute() {
                            p
                        } else {
                            hr_dir.join(p)
                        }
                    })
                    .collect()
            }
            None => list_images(hr_dir)?,
        };
        let mut images = Vec::with_capacity(paths.len());
        for path in paths {
            let id = stem(&path);
            let hr = load_image(&path)?.crop_to_multiple(scale)?;
            let lr = match lr_dir.and_then(|d| find_lr_counterpart(d, &id, scale)) {
                Some(lp) => load_image(&lp)?,
                None => degrade(&hr, scale)?,
            };
            let ds = Dataset::from_pairs(vec![(id, lr, hr)], scale)?;
            images.extend(ds.images);
        }
        if images.is_empty() {
            return Err(Error::Data(format!("no images found in {}", hr_dir.display())));
        }
        Ok(Dataset { scale, images })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn images(&self) -> &[TrainImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Drop images whose LR side is smaller than `patch`, warning for each.
    pub fn retain_min_size(&mut self, patch: usize) {
        self.images.retain(|img| {
            let ok = img.lr.h() >= patch && img.lr.w() >= patch;
            if !ok {
                log::warn!(
                    "skipping {}: LR {}x{} smaller than patch {patch}",
                    img.id,
                    img.lr.w(),
                    img.lr.h()
                );
            }
            ok
        });
    }
}

/// Draw `batch` aligned patch pairs: uniform image choice and crop origin, then
/// a uniformly chosen dihedral transform applied to both sides.
pub fn sample_batch(dataset: &Dataset, rng: &mut Rng, batch: usize, patch: usize) -> Result<Vec<PatchPair>> {
    let scale = dataset.scale;
    let eligible: Vec<&TrainImage> = dataset
        .images
        .iter()
        .filter(|img| {
            let ok = img.lr.h() >= patch && img.lr.w() >= patch;
            if !ok {
                log::warn!("skipping undersized image {}", img.id);
            }
            ok
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::Data(format!(
            "no training image has an LR side of at least {patch}"
        )));
    }
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let img = eligible[rng.below(eligible.len())];
        let y0 = rng.below(img.lr.h() - patch + 1);
        let x0 = rng.below(img.lr.w() - patch + 1);
        let flip = rng.below(2) == 1;
        let turns = rng.below(4) as u8;
        let transform = GeomTransform::new(turns, flip);
        let lr = img.lr.crop(y0, x0, patch, patch)?;
        let hr = img
            .hr
            .crop(scale * y0, scale * x0, scale * patch, scale * patch)?;
        out.push(PatchPair {
            lr: transform.apply(&lr),
            hr: transform.apply(&hr),
            source: img.id.clone(),
            origin: (y0, x0),
            transform,
        });
    }
    Ok(out)
}
