//! Raster types and the filtering primitives used by every later stage.
//!
//! Pixels are stored as `f64` luminance in `[0, 1]`. Decoding supports PNG
//! and the portable anymap family (P1-P6); other formats such as JPEG must be
//! converted externally before ingestion.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("image dimensions must be at least 1x1 (got {0}x{1})")]
    ZeroDimension(usize, usize),
    #[error("pixel buffer has {got} values, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("pixel value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("gaussian sigma must be positive (got {0})")]
    NonPositiveSigma(f64),
    #[error("image too small to downsample ({0}x{1})")]
    TooSmall(usize, usize),
    #[error("png encoding failed: {0}")]
    Encode(String),
}

/// Row-major luminance raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension(width, height));
        }
        if pixels.len() != width * height {
            return Err(ImageError::LengthMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if let Some(&bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ImageError::OutOfRange(bad));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from a generator, clamping each value into `[0, 1]`.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp_unit(f(x, y)));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    // Callers guarantee the invariants (filters that form convex combinations).
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
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

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Applies `f` to every pixel and clamps the result into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.pixels.iter().map(|&p| clamp_unit(f(p))).collect(),
        )
    }

    /// Rotates the raster by 90 degrees: output `(u, v)` reads input
    /// `(width - 1 - v, u)`. This is an exact pixel permutation.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = Vec::with_capacity(w * h);
        // output has width h, height w
        for v in 0..w {
            for u in 0..h {
                out.push(self.get(w - 1 - v, u));
            }
        }
        Self::from_raw(h, w, out)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }
}

/// Row-major RGB raster, channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension(width, height));
        }
        if pixels.len() != width * height {
            return Err(ImageError::LengthMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if let Some(&bad) = pixels
            .iter()
            .flatten()
            .find(|c| !(0.0..=1.0).contains(*c))
        {
            return Err(ImageError::OutOfRange(bad));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            pixels: img.pixels.iter().map(|&p| [p, p, p]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes PNG or portable anymap bytes into a normalized color raster.
pub fn decode_image(bytes: &[u8]) -> Result<ColorImage, ImageError> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && (b'1'..=b'6').contains(&bytes[1]) {
        decode_pnm(bytes)
    } else {
        Err(ImageError::UnsupportedFormat)
    }
}

fn decode_png(bytes: &[u8]) -> Result<ColorImage, ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::CorruptFile(e.to_string()))?;
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb
        .pixels()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64].map(clamp_unit))
        .collect();
    ColorImage::new(w, h, pixels)
}

struct PnmHeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmHeaderReader<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self) -> Result<u32, ImageError> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::CorruptFile("expected integer in PNM data".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptFile("integer overflow in PNM data".into()))
    }

    // plain PBM packs pixels without separators ("0101" is legal)
    fn next_bit(&mut self) -> Result<u32, ImageError> {
        self.skip_ws_and_comments();
        match self.bytes.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(0)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(1)
            }
            _ => Err(ImageError::CorruptFile("truncated PBM data".into())),
        }
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<ColorImage, ImageError> {
    let kind = bytes[1];
    let mut rd = PnmHeaderReader { bytes, pos: 2 };
    let width = rd.next_uint()? as usize;
    let height = rd.next_uint()? as usize;
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptFile(format!(
            "zero dimension {width}x{height}"
        )));
    }
    let maxval = if kind == b'1' || kind == b'4' {
        1
    } else {
        rd.next_uint()?
    };
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::CorruptFile(format!("invalid maxval {maxval}")));
    }
    let channels = if kind == b'3' || kind == b'6' { 3 } else { 1 };
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ImageError::CorruptFile("dimensions overflow".into()))?;
    let scale = maxval as f64;

    let mut samples = Vec::with_capacity(count);
    match kind {
        b'1' => {
            for _ in 0..count {
                // PBM: 1 is black
                samples.push(1.0 - rd.next_bit()? as f64);
            }
        }
        b'2' | b'3' => {
            for _ in 0..count {
                let v = rd.next_uint()?;
                if v > maxval {
                    return Err(ImageError::CorruptFile(format!(
                        "sample {v} exceeds maxval {maxval}"
                    )));
                }
                samples.push(v as f64 / scale);
            }
        }
        b'4' => {
            // exactly one whitespace byte separates header from raster
            let data = bytes.get(rd.pos + 1..).unwrap_or(&[]);
            let row_bytes = width.div_ceil(8);
            if data.len() < row_bytes * height {
                return Err(ImageError::CorruptFile("truncated PBM raster".into()));
            }
            for y in 0..height {
                for x in 0..width {
                    let byte = data[y * row_bytes + x / 8];
                    let bit = (byte >> (7 - (x % 8))) & 1;
                    samples.push(1.0 - bit as f64);
                }
            }
        }
        _ => {
            let data = bytes.get(rd.pos + 1..).unwrap_or(&[]);
            let wide = maxval > 255;
            let needed = if wide { count * 2 } else { count };
            if data.len() < needed {
                return Err(ImageError::CorruptFile("truncated PNM raster".into()));
            }
            for i in 0..count {
                let v = if wide {
                    u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as u32
                } else {
                    data[i] as u32
                };
                if v > maxval {
                    return Err(ImageError::CorruptFile(format!(
                        "sample {v} exceeds maxval {maxval}"
                    )));
                }
                samples.push(v as f64 / scale);
            }
        }
    }

    let pixels = if channels == 3 {
        samples.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    } else {
        samples.into_iter().map(|v| [v, v, v]).collect()
    };
    ColorImage::new(width, height, pixels)
}

/// Encodes as binary 8-bit PGM (`P5`).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&p| to_u8(p)));
    out
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>, ImageError> {
    let buf: Vec<u8> = img.pixels.iter().map(|&p| to_u8(p)).collect();
    let gray = image::GrayImage::from_raw(img.width as u32, img.height as u32, buf)
        .expect("buffer length matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    gray.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

fn to_u8(p: f64) -> u8 {
    (clamp_unit(p) * 255.0).round() as u8
}

// BT.601 luma weights
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

pub fn to_grayscale(img: &ColorImage) -> GrayImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| clamp_unit(LUMA_R * r + LUMA_G * g + LUMA_B * b))
        .collect();
    GrayImage::from_raw(img.width, img.height, pixels)
}

/// Bilinear resize with half-pixel-centered sampling.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroDimension(out_w, out_h));
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let xs = taps(img.width, out_w);
    let ys = taps(img.height, out_h);

    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        let r0 = &img.pixels[y0 * img.width..(y0 + 1) * img.width];
        let r1 = &img.pixels[y1 * img.width..(y1 + 1) * img.width];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
            let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
            out.push(clamp_unit(top * (1.0 - fy) + bottom * fy));
        }
    }
    Ok(GrayImage::from_raw(out_w, out_h, out))
}

/// Bilinear sample with coordinates clamped to the image.
#[inline]
pub fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (img.width() - 1) as f64);
    let y = y.clamp(0.0, (img.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Normalized 1-D Gaussian kernel of radius `ceil(4 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric reflection: index -1 maps to 0, n maps to n - 1.
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

pub(crate) fn convolve_separable(
    data: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64],
) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    // horizontal pass: precompute reflected indices once per row offset
    let x_idx: Vec<Vec<usize>> = (0..width as i64)
        .map(|x| (-radius..=radius).map(|k| reflect(x + k, width)).collect())
        .collect();
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        let out = &mut tmp[y * width..(y + 1) * width];
        for (x, idx) in x_idx.iter().enumerate() {
            out[x] = idx.iter().zip(kernel).map(|(&i, &w)| row[i] * w).sum();
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height as i64 {
        let dst = &mut out[y as usize * width..(y as usize + 1) * width];
        for (k, &w) in kernel.iter().enumerate() {
            let sy = reflect(y + k as i64 - radius, height);
            let src = &tmp[sy * width..(sy + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, ImageError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(ImageError::NonPositiveSigma(sigma));
    }
    let kernel = gaussian_kernel(sigma);
    let mut out = convolve_separable(&img.pixels, img.width, img.height, &kernel);
    // summation rounding can leave values a few ulps outside [0, 1]
    out.iter_mut().for_each(|v| *v = clamp_unit(*v));
    Ok(GrayImage::from_raw(img.width, img.height, out))
}

/// Keeps every second row and column, starting at (0, 0).
pub fn downsample_half(img: &GrayImage) -> Result<GrayImage, ImageError> {
    if img.width < 2 || img.height < 2 {
        return Err(ImageError::TooSmall(img.width, img.height));
    }
    let (w, h) = (img.width / 2, img.height / 2);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(img.get(2 * x, 2 * y));
        }
    }
    Ok(GrayImage::from_raw(w, h, out))
}
