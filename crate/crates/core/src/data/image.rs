use std::fs;
use std::path::{Path, PathBuf};

use crate::tensor::{check_dim, Scalar, Tensor4};
use crate::{Error, Result};

/// 8-bit interleaved RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data(format!(
                "image extent {width}x{height} must be positive"
            )));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::shape(
                "ImageU8::new",
                "pixel buffer",
                3 * width * height,
                pixels.len(),
            ));
        }
        Ok(ImageU8 {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        ImageU8 {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Center crop so both extents are multiples of `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Result<Self> {
        let (w, h) = (self.width - self.width % m, self.height - self.height % m);
        if w == 0 || h == 0 {
            return Err(Error::Data(format!(
                "image {}x{} is smaller than scale {m}",
                self.width, self.height
            )));
        }
        if (w, h) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let (x0, y0) = ((self.width - w) / 2, (self.height - h) / 2);
        Ok(ImageU8::from_fn(w, h, |x, y| self.pixel(x + x0, y + y0)))
    }
}

fn parse_err(path: &Path, offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            let msg = if self.pos >= self.bytes.len() {
                format!("unexpected end of file while reading {what}")
            } else {
                format!("expected {what}")
            };
            return Err(parse_err(self.path, self.pos, msg));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(self.path, start, format!("{what} out of range")))
    }
}

/// Decode a binary PPM (P6) with maxval ≤ 255.
pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<ImageU8> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(parse_err(path, 0, "missing P6 magic"));
    }
    let mut hdr = Header { bytes, pos: 2, path };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(
            path,
            hdr.pos,
            format!("unsupported bit depth (maxval {maxval})"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(parse_err(path, hdr.pos, "zero image extent"));
    }
    if hdr.pos >= bytes.len() || !bytes[hdr.pos].is_ascii_whitespace() {
        return Err(parse_err(path, hdr.pos, "expected whitespace after header"));
    }
    let start = hdr.pos + 1;
    let need = 3 * width * height;
    let body = &bytes[start.min(bytes.len())..];
    if body.len() < need {
        return Err(parse_err(
            path,
            bytes.len(),
            format!("truncated pixel data: need {need} bytes, found {}", body.len()),
        ));
    }
    let mut pixels = body[..need].to_vec();
    if maxval != 255 {
        for p in &mut pixels {
            *p = ((*p as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8;
        }
    }
    ImageU8::new(width, height, pixels)
}

pub fn encode_ppm(img: &ImageU8) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Image extensions the current build can read.
pub fn supported_extension(path: &Path) -> bool {
    match extension(path).as_str() {
        "ppm" => true,
        #[cfg(feature = "png")]
        "png" | "bmp" => true,
        _ => false,
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageU8> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "ppm" => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_ppm(&bytes, path)
        }
        #[cfg(feature = "png")]
        "png" | "bmp" => {
            let img = image::open(path)
                .map_err(|e| parse_err(path, 0, e.to_string()))?
                .to_rgb8();
            let (w, h) = img.dimensions();
            ImageU8::new(w as usize, h as usize, img.into_raw())
        }
        other => Err(Error::Data(format!(
            "{}: unsupported image format `{other}`",
            path.display()
        ))),
    }
}

/// Write atomically (temp file + rename). The format follows the extension.
pub fn save_image(path: impl AsRef<Path>, img: &ImageU8) -> Result<()> {
    let path = path.as_ref();
    let bytes = match extension(path).as_str() {
        "ppm" => encode_ppm(img),
        #[cfg(feature = "png")]
        "png" => {
            let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
                .ok_or_else(|| Error::Data("pixel buffer size mismatch".into()))?;
            let mut out = std::io::Cursor::new(Vec::new());
            buf.write_to(&mut out, image::ImageFormat::Png)
                .map_err(|e| Error::Data(e.to_string()))?;
            out.into_inner()
        }
        other => {
            return Err(Error::Data(format!(
                "{}: unsupported image format `{other}`",
                path.display()
            )))
        }
    };
    write_atomic(path, &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    );
    tmp.set_file_name(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// `(1, 3, h, w)` tensor with values `byte / 255`.
pub fn to_float<T: Scalar>(img: &ImageU8) -> Tensor4<T> {
    let (w, h) = (img.width, img.height);
    let inv = T::one() / T::of(255.0);
    Tensor4::from_fn([1, 3, h, w], |[_, c, y, x]| {
        T::of(img.pixels[3 * (y * w + x) + c] as f64) * inv
    })
}

/// Quantize sample `n` of a 3-channel tensor: `×255`, round half away from
/// zero, clamp to `[0, 255]`.
pub fn to_u8<T: Scalar>(t: &Tensor4<T>, n: usize) -> Result<ImageU8> {
    check_dim("to_u8", "channel", 3, t.c())?;
    let (h, w) = (t.h(), t.w());
    let quant = |v: T| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8;
    let img = ImageU8::from_fn(w, h, |x, y| {
        [
            quant(t.at(n, 0, y, x)),
            quant(t.at(n, 1, y, x)),
            quant(t.at(n, 2, y, x)),
        ]
    });
    ImageU8::new(w, h, img.pixels)
}

/// BT.601 studio-swing luma on the 8-bit scale: `16 + 65.481 R + 128.553 G +
/// 24.966 B` for `R, G, B ∈ [0, 1]`.
pub fn rgb_to_y<T: Scalar>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    check_dim("rgb_to_y", "channel", 3, x.c())?;
    let (kr, kg, kb) = (T::of(65.481), T::of(128.553), T::of(24.966));
    let off = T::of(16.0);
    Ok(Tensor4::from_fn([x.n(), 1, x.h(), x.w()], |[n, _, y, xx]| {
        off + kr * x.at(n, 0, y, xx) + kg * x.at(n, 1, y, xx) + kb * x.at(n, 2, y, xx)
    }))
}
