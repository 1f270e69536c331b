//! Reflectance x shading decomposition, shading-edge maps for training and
//! a deterministic shading renderer.

use serde::{Deserialize, Serialize};

use crate::contour::{garment_region, ContourMap};
use crate::edges::{canny, mask_to_gray, CannyConfig};
use crate::error::{Error, Result};
use crate::morph::{self, Mask};
use crate::palette::ColorClusterStats;
use crate::raster::{dims_mismatch, gaussian_kernel, pointwise_product, GrayImage, RasterImage, Rgb};

/// Reflectance floor.
pub const REFLECTANCE_FLOOR: f64 = 1.0 / 255.0;

/// Two cluster means with chromaticities closer than this (max abs
/// difference of `c / sum(c)`) are treated as the same material under
/// different illumination.
pub const CHROMA_TOLERANCE: f64 = 2e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicPair {
    pub reflectance: RasterImage,
    pub shading: GrayImage,
    /// Garment pixels where a reflectance channel hit the floor.
    pub clamped_pixels: usize,
}

impl IntrinsicPair {
    pub fn recompose(&self) -> RasterImage {
        pointwise_product(&self.reflectance, &self.shading).expect("pair has equal dims")
    }
}

fn chromaticity(c: Rgb) -> Rgb {
    let s = c[0] + c[1] + c[2];
    if s <= 1e-12 {
        [1.0 / 3.0; 3]
    } else {
        [c[0] / s, c[1] / s, c[2] / s]
    }
}

/// Groups clusters by chromaticity in canonical order. Returns the group
/// of every cluster and the reflectance of every group, which is the mean
/// of its brightest member.
fn material_groups(stats: &ColorClusterStats) -> (Vec<usize>, Vec<Rgb>) {
    let mut group_of = Vec::with_capacity(stats.k());
    let mut chroma: Vec<Rgb> = Vec::new();
    let mut refl: Vec<Rgb> = Vec::new();
    for c in &stats.clusters {
        let ch = chromaticity(c.mean);
        let found = chroma
            .iter()
            .position(|g| g.iter().zip(&ch).all(|(a, b)| (a - b).abs() <= CHROMA_TOLERANCE));
        match found {
            Some(g) => {
                group_of.push(g);
                if c.mean.iter().sum::<f64>() > refl[g].iter().sum::<f64>() {
                    refl[g] = c.mean;
                }
            }
            None => {
                group_of.push(chroma.len());
                chroma.push(ch);
                refl.push(c.mean);
            }
        }
    }
    (group_of, refl)
}

fn check_inputs(img: &RasterImage, mask: &GrayImage, stats: &ColorClusterStats) -> Result<()> {
    if img.dims() != mask.dims() {
        return Err(dims_mismatch(img.dims(), mask.dims()));
    }
    if img.dims() != (stats.label_map.width, stats.label_map.height) {
        return Err(dims_mismatch(img.dims(), (stats.label_map.width, stats.label_map.height)));
    }
    if mask.count_on() == 0 || stats.k() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// `I = R x S` with R piecewise constant per material (the largest area's
/// mean extended over it, other clusters keeping their own means) and S the
/// least-squares scale of R onto I, `sum(I R) / sum(R R)`. Outside the mask
/// R = I and S = 1.
pub fn decompose(img: &RasterImage, garment_mask: &GrayImage, stats: &ColorClusterStats) -> Result<IntrinsicPair> {
    check_inputs(img, garment_mask, stats)?;
    let (group_of, refl) = material_groups(stats);
    let (w, h) = img.dims();
    let mut reflectance = img.clone();
    let mut shading = GrayImage::filled(w, h, 1.0)?;
    let mut clamped = 0;
    for (i, label) in stats.label_map.labels.iter().enumerate() {
        let Some(l) = label else { continue };
        if garment_mask.data()[i] < 0.5 {
            continue;
        }
        let raw = refl[group_of[*l as usize]];
        let r = raw.map(|v| v.clamp(REFLECTANCE_FLOOR, 1.0));
        if r.iter().zip(&raw).any(|(a, b)| a != b) {
            clamped += 1;
        }
        let p = img.pixel(i);
        reflectance.set_pixel(i, r);
        shading.data_mut()[i] = (p[0] * r[0] + p[1] * r[1] + p[2] * r[2]) / (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    }
    Ok(IntrinsicPair {
        reflectance,
        shading,
        clamped_pixels: clamped,
    })
}

/// Pixels of the largest material (cluster 0 plus same-chromaticity
/// clusters).
fn largest_area(stats: &ColorClusterStats) -> Mask {
    let (group_of, _) = material_groups(stats);
    let lm = &stats.label_map;
    Mask::from_bits(
        lm.width,
        lm.height,
        lm.labels.iter().map(|l| l.is_some_and(|l| group_of[l as usize] == 0)).collect(),
    )
}

/// Canny edges of the image kept only inside the largest material area,
/// at least two pixels away from any other cluster or the background.
pub fn shading_edges_for_training(
    img: &RasterImage,
    garment_mask: &GrayImage,
    stats: &ColorClusterStats,
    cfg: &CannyConfig,
) -> Result<GrayImage> {
    check_inputs(img, garment_mask, stats)?;
    let area = morph::erode(&largest_area(stats), 2);
    Ok(mask_to_gray(&canny(img, cfg).and(&area)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShadeConfig {
    /// Valley depth on a straight edge.
    pub a: f64,
    pub sigma: f64,
    pub s_min: f64,
}

impl Default for ShadeConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            sigma: 4.0,
            s_min: 0.3,
        }
    }
}

/// Gaussian blur with zero padding, scaled so that the center of an
/// infinite axis-aligned line is 1.
pub fn line_normalized_blur(edges: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let r = k.len() / 2;
    let (w, h) = edges.dims();
    let src = edges.data();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = x as i64 + j as i64 - r as i64;
                if xx >= 0 && (xx as usize) < w {
                    s += kv * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = s;
        }
    }
    let peak = k[r];
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = y as i64 + j as i64 - r as i64;
                if yy >= 0 && (yy as usize) < h {
                    s += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = s / peak;
        }
    }
    GrayImage::from_data(w, h, out).expect("finite blur")
}

/// `clamp(1 - a * blur(edges), s_min, 1)` inside the garment, 1 outside.
/// An open contour shades the whole canvas.
pub fn render_shading(contour: &ContourMap, shading_edges: &GrayImage, cfg: &ShadeConfig) -> Result<GrayImage> {
    if contour.dims() != shading_edges.dims() {
        return Err(dims_mismatch(contour.dims(), shading_edges.dims()));
    }
    if !(cfg.a >= 0.0 && cfg.sigma > 0.0 && (0.0..=1.0).contains(&cfg.s_min)) {
        return Err(Error::invalid("shade config needs a >= 0, sigma > 0, s_min in [0, 1]"));
    }
    let (w, h) = contour.dims();
    let region = match garment_region(contour) {
        Ok(m) => m,
        Err(Error::OpenContour { .. }) => Mask::from_bits(w, h, vec![true; w * h]),
        Err(e) => return Err(e),
    };
    let binary = shading_edges.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    let g = if binary.count_on() == 0 {
        GrayImage::new(w, h)?
    } else {
        line_normalized_blur(&binary, cfg.sigma)
    };
    let data = g
        .data()
        .iter()
        .zip(&region.bits)
        .map(|(v, &inside)| if inside { (1.0 - cfg.a * v).clamp(cfg.s_min, 1.0) } else { 1.0 })
        .collect();
    GrayImage::from_data(w, h, data)
}

/// `image x shading`, clamped to `[0, 1]`.
pub fn enhance(image: &RasterImage, shading: &GrayImage) -> Result<RasterImage> {
    Ok(pointwise_product(image, shading)?.clamp01())
}
