//! Garment contour maps: extraction from photos, simplification, and the
//! filled interior of the outermost closed curve.

use serde::{Deserialize, Serialize};

use crate::edges::{color_gradient, gray_to_mask, mask_to_gray};
use crate::error::{Error, Result};
use crate::morph::{self, Mask, RING};
use crate::raster::{GrayImage, RasterImage};

/// Gap-closing step applied before the exterior flood fill.
pub const GAP_CLOSING: &str = "3x3 morphological closing, one pass";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Extracted,
    UserDrawn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourMap {
    pub mask: GrayImage,
    pub provenance: Provenance,
}

impl ContourMap {
    /// Wraps a user-drawn mask, binarizing at 0.5.
    pub fn user_drawn(mask: GrayImage) -> Self {
        Self {
            mask: mask.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }),
            provenance: Provenance::UserDrawn,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    pub(crate) fn bits(&self) -> Mask {
        gray_to_mask(&self.mask)
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.count_on()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContourConfig {
    pub sigma: f64,
    /// Quantile of nonzero gradient magnitudes used as the high threshold.
    pub high_quantile: f64,
    pub low_ratio: f64,
    pub min_branch_len: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            high_quantile: 0.9,
            low_ratio: 0.4,
            min_branch_len: 12,
        }
    }
}

/// Blur, gradient magnitude, percentile hysteresis, thinning.
pub fn extract_contour(img: &RasterImage, cfg: &ContourConfig) -> ContourMap {
    let (w, h) = img.dims();
    let grad = color_gradient(img, cfg.sigma);
    let mut nonzero: Vec<f64> = grad.magnitude.iter().copied().filter(|&m| m > 1e-6).collect();
    let mut region = Mask::new(w, h);
    if !nonzero.is_empty() {
        nonzero.sort_by(f64::total_cmp);
        let idx = ((nonzero.len() - 1) as f64 * cfg.high_quantile).floor() as usize;
        let high = nonzero[idx];
        let low = cfg.low_ratio * high;
        let mut stack = Vec::new();
        for (i, &m) in grad.magnitude.iter().enumerate() {
            if m >= high && m > 1e-6 {
                region.bits[i] = true;
                stack.push(i);
            }
        }
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in RING {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !region.bits[j] && grad.magnitude[j] >= low && grad.magnitude[j] > 1e-6 {
                    region.bits[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    ContourMap {
        mask: mask_to_gray(&morph::thin(&region)),
        provenance: Provenance::Extracted,
    }
}

fn prune_once(m: &mut Mask, min_len: usize) -> bool {
    let mut changed = false;
    let (labels, sizes) = morph::components(m, true);
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            if sizes[*l as usize] < min_len {
                m.bits[i] = false;
                changed = true;
            }
        }
    }

    let (w, h) = (m.width, m.height);
    let mut doomed = Vec::new();
    for start in 0..w * h {
        if !m.bits[start] || m.neighbor_count(start % w, start / w) != 1 {
            continue;
        }
        let mut path = vec![start];
        let mut cur = start;
        let reached_junction = loop {
            let (x, y) = ((cur % w) as i64, (cur / w) as i64);
            let next = RING.iter().find_map(|(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                if !m.get(nx, ny) {
                    return None;
                }
                let j = ny as usize * w + nx as usize;
                (!path.contains(&j)).then_some(j)
            });
            match next {
                None => break false,
                Some(j) if m.neighbor_count(j % w, j / w) >= 3 => break true,
                Some(j) => {
                    path.push(j);
                    cur = j;
                    if path.len() >= min_len {
                        break false;
                    }
                }
            }
        };
        if reached_junction && path.len() < min_len {
            doomed.extend(path);
        }
    }
    for i in doomed {
        if m.bits[i] {
            m.bits[i] = false;
            changed = true;
        }
    }
    changed
}

/// Removes components and dangling branches shorter than `min_branch_len`,
/// re-thinning after each pass, until nothing changes. Never adds pixels.
pub fn simplify_contour(cm: &ContourMap, min_branch_len: usize) -> ContourMap {
    let mut m = cm.bits();
    loop {
        let pruned = prune_once(&mut m, min_branch_len);
        let thinned = morph::thin(&m);
        let rethinned = thinned != m;
        m = thinned;
        if !pruned && !rethinned {
            break;
        }
    }
    ContourMap {
        mask: mask_to_gray(&m),
        provenance: cm.provenance,
    }
}

/// Interior of the outermost closed contour as a [`Mask`], including the
/// wall pixels bordering it and excluding the canvas border.
pub(crate) fn garment_region(cm: &ContourMap) -> Result<Mask> {
    let walls = morph::close3(&cm.bits());
    let ext = morph::exterior(&walls);
    let enclosed = walls.or(&ext).not();
    if enclosed.is_empty() {
        return Err(Error::OpenContour {
            tolerance: GAP_CLOSING.to_string(),
        });
    }
    let mut region = enclosed.or(&walls.and(&morph::dilate(&enclosed, 1)));
    let (w, h) = (region.width, region.height);
    for x in 0..w {
        region.set(x, 0, false);
        region.set(x, h - 1, false);
    }
    for y in 0..h {
        region.set(0, y, false);
        region.set(w - 1, y, false);
    }
    Ok(region)
}

/// Contour pixels (after gap closing) 8-adjacent to the exterior: the
/// silhouette without interior seams. For an open contour every pixel
/// qualifies.
pub(crate) fn outer_curve(cm: &ContourMap) -> Mask {
    let walls = morph::close3(&cm.bits());
    let ext = morph::exterior(&walls);
    walls.and(&morph::dilate(&ext, 1))
}

/// Filled interior mask of the outermost closed contour.
pub fn outer_boundary(cm: &ContourMap) -> Result<GrayImage> {
    garment_region(cm).map(|m| mask_to_gray(&m))
}
