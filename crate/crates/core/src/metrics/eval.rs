use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::quality::{psnr_y, ssim_y};
use crate::data::{list_images, load_image, ImageU8};
use crate::exec::map_collect;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-image and mean Y-channel scores for one dataset at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model_id: String,
    pub scale: usize,
    /// Sorted by name.
    pub images: Vec<ImageScore>,
    /// Names whose counterpart was missing; excluded from the means.
    pub missing: Vec<String>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

impl EvalReport {
    /// Means are arithmetic averages over evaluated images. Infinite PSNRs
    /// (identical pairs) are left out of the PSNR mean unless every image is
    /// identical, in which case the mean is `+∞`.
    pub fn new(
        model_id: impl Into<String>,
        scale: usize,
        mut images: Vec<ImageScore>,
        mut missing: Vec<String>,
    ) -> Self {
        images.sort_by(|a, b| a.name.cmp(&b.name));
        missing.sort();
        let finite: Vec<f64> = images.iter().map(|s| s.psnr).filter(|p| p.is_finite()).collect();
        let mean_psnr = if finite.is_empty() {
            if images.is_empty() {
                f64::NAN
            } else {
                f64::INFINITY
            }
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let mean_ssim = images.iter().map(|s| s.ssim).sum::<f64>() / images.len() as f64;
        EvalReport {
            model_id: model_id.into(),
            scale,
            images,
            missing,
            mean_psnr,
            mean_ssim,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    /// `name<TAB>psnr<TAB>ssim` rows, missing pairs, and a trailing `MEAN` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\tpsnr\tssim\n");
        for s in &self.images {
            let _ = writeln!(out, "{}\t{}\t{:.6}", s.name, fmt_psnr(s.psnr), s.ssim);
        }
        for m in &self.missing {
            let _ = writeln!(out, "{m}\tmissing\tmissing");
        }
        let _ = writeln!(out, "MEAN\t{}\t{:.6}", fmt_psnr(self.mean_psnr), self.mean_ssim);
        out
    }

    pub fn to_json(&self) -> String {
        let num = |v: f64| {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::json!(fmt_psnr(v))
            }
        };
        let images: Vec<_> = self
            .images
            .iter()
            .map(|s| serde_json::json!({ "name": s.name, "psnr": num(s.psnr), "ssim": s.ssim }))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "model": self.model_id,
            "scale": self.scale,
            "images": images,
            "missing": self.missing,
            "mean": { "psnr": num(self.mean_psnr), "ssim": num(self.mean_ssim) },
        }))
        .expect("report serializes")
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

/// Strip the `_x<s>` / `x<s>` suffix written by inference and degradation.
fn base_stem(stem: &str, scale: usize) -> &str {
    for suffix in [format!("_x{scale}"), format!("x{scale}")] {
        if let Some(base) = stem.strip_suffix(&suffix) {
            if !base.is_empty() {
                return base;
            }
        }
    }
    stem
}

/// HR reference aligned with an SR output of `(w, h)`: the image itself, or
/// its center crop to a multiple of `scale`.
fn aligned_hr(hr: ImageU8, sr: &ImageU8, scale: usize) -> Result<ImageU8> {
    if (hr.width(), hr.height()) == (sr.width(), sr.height()) {
        Ok(hr)
    } else {
        hr.crop_to_multiple(scale)
    }
}

fn score(name: &str, sr: &ImageU8, hr: &ImageU8, scale: usize) -> Result<ImageScore> {
    Ok(ImageScore {
        name: name.to_string(),
        psnr: psnr_y(sr, hr, scale)?,
        ssim: ssim_y(sr, hr, scale)?,
    })
}

/// Compare every SR image in `sr_dir` with its HR counterpart in `hr_dir`.
/// SR files may carry an `_x<s>` suffix on the stem.
pub fn evaluate_dirs(sr_dir: &Path, hr_dir: &Path, scale: usize) -> Result<EvalReport> {
    let sr: BTreeMap<String, PathBuf> = list_images(sr_dir)?
        .into_iter()
        .map(|p| (base_stem(&file_stem(&p), scale).to_string(), p))
        .collect();
    let hr: BTreeMap<String, PathBuf> = list_images(hr_dir)?
        .into_iter()
        .map(|p| (file_stem(&p), p))
        .collect();
    let pairs: Vec<(String, PathBuf, PathBuf)> = sr
        .iter()
        .filter_map(|(k, s)| hr.get(k).map(|h| (k.clone(), s.clone(), h.clone())))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "no matching image names between {} and {}",
            sr_dir.display(),
            hr_dir.display()
        )));
    }
    let missing = sr
        .keys()
        .filter(|k| !hr.contains_key(*k))
        .chain(hr.keys().filter(|k| !sr.contains_key(*k)))
        .cloned()
        .collect();
    let scores = map_collect(&pairs, |(name, s, h)| {
        let sr = load_image(s)?;
        let hr = aligned_hr(load_image(h)?, &sr, scale)?;
        score(name, &sr, &hr, scale)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(
        sr_dir.display().to_string(),
        scale,
        scores,
        missing,
    ))
}

/// Evaluate a super-resolution pipeline over every HR image in `hr_dir`.
///
/// `produce(name, hr)` receives the HR image center-cropped to a multiple of
/// `scale` and returns the SR estimate, or `None` when its input (e.g. a
/// pre-degraded LR file) is missing.
pub fn evaluate_with<F>(hr_dir: &Path, scale: usize, model_id: &str, produce: F) -> Result<EvalReport>
where
    F: Fn(&str, &ImageU8) -> Result<Option<ImageU8>> + Send + Sync,
{
    let paths = list_images(hr_dir)?;
    if paths.is_empty() {
        return Err(Error::Data(format!("no HR images in {}", hr_dir.display())));
    }
    let results = map_collect(&paths, |p| -> Result<(String, Option<ImageScore>)> {
        let name = file_stem(p);
        let hr = load_image(p)?.crop_to_multiple(scale)?;
        match produce(&name, &hr)? {
            Some(sr) => Ok((name.clone(), Some(score(&name, &sr, &hr, scale)?))),
            None => Ok((name, None)),
        }
    });
    let mut scores = Vec::new();
    let mut missing = Vec::new();
    for r in results {
        match r? {
            (_, Some(s)) => scores.push(s),
            (name, None) => missing.push(name),
        }
    }
    if scores.is_empty() {
        return Err(Error::Data("no image could be evaluated".into()));
    }
    Ok(EvalReport::new(model_id, scale, scores, missing))
}
