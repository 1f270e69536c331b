//! Pixel containers, color math, resampling and file-boundary codecs.
//!
//! Everything is stored as `f64` in nominal `[0, 1]`; 8-bit and 16-bit
//! quantization only happens when encoding or decoding PNG bytes.

use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// Linear RGB triple in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Canonical working canvas edge length.
pub const CANONICAL_SIZE: usize = 512;

/// Fixed-point scale of 16-bit shading PNGs: `4096` encodes shading `1.0`.
pub const SHADING_FIXED_POINT: f64 = 4096.0;

pub fn rgb_to_u8(c: Rgb) -> [u8; 3] {
    c.map(quantize_u8)
}

pub fn rgb_from_u8(c: [u8; 3]) -> Rgb {
    c.map(|v| v as f64 / 255.0)
}

pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn color_distance(a: Rgb, b: Rgb) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Dense RGB image, row-major, three interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Dense single-channel image. Used for masks (values in {0,1}), contour
/// maps, shading (values >= 0, may exceed 1) and intermediate planes.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

fn check_finite(data: &[f64]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("pixel data contains NaN or infinity"));
    }
    Ok(())
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Ok(Self { width, height, data })
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "expected {} values for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        check_finite(&data)?;
        Ok(Self { width, height, data })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn pixel(&self, idx: usize) -> Rgb {
        [self.data[idx * 3], self.data[idx * 3 + 1], self.data[idx * 3 + 2]]
    }

    pub fn set_pixel(&mut self, idx: usize, c: Rgb) {
        self.data[idx * 3..idx * 3 + 3].copy_from_slice(&c);
    }

    /// Single channel as a plane.
    pub fn channel(&self, c: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> RasterImage {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Bilinear sample at continuous coordinates, pixel centers at integers.
    /// `None` when the point lies outside `[0, w-1] x [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<Rgb> {
        let eps = 1e-9;
        if !(x >= -eps && y >= -eps && x <= (self.width - 1) as f64 + eps && y <= (self.height - 1) as f64 + eps)
        {
            return None;
        }
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = if fx == 0.0 { a[k] } else { a[k] * (1.0 - fx) + b[k] * fx };
            let bottom = if fx == 0.0 { c[k] } else { c[k] * (1.0 - fx) + d[k] * fx };
            out[k] = if fy == 0.0 { top } else { top * (1.0 - fy) + bottom * fy };
        }
        Some(out)
    }

    /// Rec. 601 luma plane.
    pub fn luma(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "expected {} RGB bytes, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        Self::from_data(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        encode_png(&self.to_rgb8(), self.width, self.height, ExtendedColorType::Rgb8)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        Self::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    /// Reads PNG or JPEG from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_png_bytes(&std::fs::read(path)?)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} values for {width}x{height} plane, got {}",
                width * height,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        check_finite(&data)?;
        Ok(Self { width, height, data })
    }

    pub fn from_mask(width: usize, height: usize, mask: &[bool]) -> Result<Self> {
        Self::from_data(width, height, mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixels with value >= 0.5 are "on".
    pub fn to_mask(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v >= 0.5).collect()
    }

    pub fn count_on(&self) -> usize {
        self.data.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Replicates the plane into all three channels.
    pub fn to_rgb(&self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }

    /// 8-bit grayscale PNG, values scaled by 255.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize_u8(v)).collect();
        encode_png(&bytes, self.width, self.height, ExtendedColorType::L8)
    }

    /// Decodes an 8-bit PNG into `[0, 1]` values.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_luma8();
        Self::from_data(
            img.width() as usize,
            img.height() as usize,
            img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    /// Decodes a PNG as a binary mask: pixels >= 128 become 1.
    pub fn mask_from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_luma8();
        Self::from_data(
            img.width() as usize,
            img.height() as usize,
            img.as_raw().iter().map(|&b| if b >= 128 { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// 16-bit grayscale PNG with `4096 = 1.0`, representable range `[0, 16)`.
    pub fn to_shading_png_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = Vec::with_capacity(self.data.len() * 2);
        for &v in &self.data {
            let q = (v.max(0.0) * SHADING_FIXED_POINT).round().min(u16::MAX as f64) as u16;
            bytes.extend_from_slice(&q.to_ne_bytes());
        }
        encode_png(&bytes, self.width, self.height, ExtendedColorType::L16)
    }

    pub fn from_shading_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_luma16();
        Self::from_data(
            img.width() as usize,
            img.height() as usize,
            img.as_raw().iter().map(|&q| q as f64 / SHADING_FIXED_POINT).collect(),
        )
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }
}

fn encode_png(bytes: &[u8], width: usize, height: usize, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(Cursor::new(&mut out)).write_image(bytes, width as u32, height as u32, color)?;
    Ok(out)
}

fn bilinear_coord(dst: usize, dst_len: usize, src_len: usize) -> (usize, usize, f64) {
    if dst_len == 1 || src_len == 1 {
        let c = (src_len - 1) as f64 / 2.0;
        let i0 = c.floor() as usize;
        return (i0, (i0 + 1).min(src_len - 1), c - i0 as f64);
    }
    let s = dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64;
    let i0 = (s.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resampling with corner-aligned sample grids. Resampling to the
/// same size returns an identical image.
pub fn resample(img: &RasterImage, new_width: usize, new_height: usize) -> Result<RasterImage> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::invalid(format!(
            "resample target must be at least 1x1, got {new_width}x{new_height}"
        )));
    }
    if (new_width, new_height) == img.dims() {
        return Ok(img.clone());
    }
    let xs: Vec<_> = (0..new_width).map(|x| bilinear_coord(x, new_width, img.width)).collect();
    RasterImage::from_fn(new_width, new_height, |x, y| {
        let (y0, y1, fy) = bilinear_coord(y, new_height, img.height);
        let (x0, x1, fx) = xs[x];
        let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            // convex combination; clamp removes last-ulp excursions
            let lo = a[k].min(b[k]).min(c[k]).min(d[k]);
            let hi = a[k].max(b[k]).max(c[k]).max(d[k]);
            out[k] = (top + (bottom - top) * fy).clamp(lo, hi);
        }
        out
    })
}

/// `out[p, c] = r[p, c] * s[p]`.
pub fn pointwise_product(r: &RasterImage, s: &GrayImage) -> Result<RasterImage> {
    if r.dims() != s.dims() {
        return Err(dims_mismatch(r.dims(), s.dims()));
    }
    let data = r
        .data
        .chunks_exact(3)
        .zip(&s.data)
        .flat_map(|(p, &sv)| [p[0] * sv, p[1] * sv, p[2] * sv])
        .collect();
    Ok(RasterImage {
        width: r.width,
        height: r.height,
        data,
    })
}

pub(crate) fn dims_mismatch(a: (usize, usize), b: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        left_w: a.0,
        left_h: a.1,
        right_w: b.0,
        right_h: b.1,
    }
}

/// Normalized 1-D Gaussian kernel with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with replicated borders.
pub fn convolve_separable(plane: &GrayImage, kx: &[f64], ky: &[f64]) -> GrayImage {
    let (w, h) = plane.dims();
    let rx = (kx.len() / 2) as i64;
    let ry = (ky.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in kx.iter().enumerate() {
                let sx = (x as i64 + j as i64 - rx).clamp(0, w as i64 - 1) as usize;
                acc += kv * row[sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in ky.iter().enumerate() {
                let sy = (y as i64 + j as i64 - ry).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    GrayImage {
        width: w,
        height: h,
        data: out,
    }
}

pub fn gaussian_blur(plane: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    convolve_separable(plane, &k, &k)
}

/// Sobel responses `(gx, gy)` with replicated borders, unscaled.
pub fn sobel(plane: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = plane.dims();
    let at = |x: i64, y: i64| {
        let xc = x.clamp(0, w as i64 - 1) as usize;
        let yc = y.clamp(0, h as i64 - 1) as usize;
        plane.data[yc * w + xc]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (
        GrayImage {
            width: w,
            height: h,
            data: gx,
        },
        GrayImage {
            width: w,
            height: h,
            data: gy,
        },
    )
}
