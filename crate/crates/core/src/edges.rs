//! Canny edge detection on color images and linking of edge pixels into
//! ordered chains.

use serde::{Deserialize, Serialize};

use crate::morph::{self, Mask, FOUR, RING};
use crate::raster::{gaussian_blur, sobel, GrayImage, RasterImage};

/// Gradient magnitudes are snapped to this grid so that ties in
/// non-maximum suppression are exact.
pub const MAGNITUDE_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyConfig {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.08,
            high: 0.2,
        }
    }
}

/// Integer pixel coordinate, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn is_8_neighbor(self, other: Point) -> bool {
        let dx = (self.x - other.x).abs();
        let dy = (self.y - other.y).abs();
        dx <= 1 && dy <= 1 && (dx, dy) != (0, 0)
    }

    /// Raster-order key (row first).
    pub fn raster_key(self) -> (i32, i32) {
        (self.y, self.x)
    }
}

impl From<[i32; 2]> for Point {
    fn from(v: [i32; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [i32; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Ordered run of 8-connected edge pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub points: Vec<Point>,
    /// The last point is 8-adjacent to the first and the chain loops.
    pub closed: bool,
}

impl Chain {
    pub fn open(points: Vec<Point>) -> Self {
        Self { points, closed: false }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn sort_key(&self) -> (i32, i32) {
        self.points.iter().map(|p| p.raster_key()).min().unwrap_or((i32::MAX, i32::MAX))
    }
}

/// Sorts chains by their topmost-leftmost point.
pub fn sort_chains(chains: &mut [Chain]) {
    chains.sort_by_key(|c| (c.sort_key(), c.points.first().map(|p| p.raster_key())));
}

/// Per-pixel gradient of the channel with the strongest response.
pub struct Gradient {
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

fn snap(v: f64) -> f64 {
    (v / MAGNITUDE_QUANTUM).round() * MAGNITUDE_QUANTUM
}

/// Smoothed Sobel gradient, scaled by 1/4 so a unit step spread over two
/// pixels has magnitude about 1.
pub fn color_gradient(img: &RasterImage, sigma: f64) -> Gradient {
    let n = img.width() * img.height();
    let mut grad = Gradient {
        gx: vec![0.0; n],
        gy: vec![0.0; n],
        magnitude: vec![0.0; n],
    };
    for c in 0..3 {
        let plane = gaussian_blur(&img.channel(c), sigma);
        let (gx, gy) = sobel(&plane);
        for i in 0..n {
            let x = snap(gx.data()[i] / 4.0);
            let y = snap(gy.data()[i] / 4.0);
            let m = snap((x * x + y * y).sqrt());
            if m > grad.magnitude[i] {
                grad.gx[i] = x;
                grad.gy[i] = y;
                grad.magnitude[i] = m;
            }
        }
    }
    grad
}

/// Neighbor offsets `(negative side, positive side)` along the quantized
/// gradient direction.
pub fn nms_neighbors(gx: f64, gy: f64) -> ((i64, i64), (i64, i64)) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if angle >= 180.0 {
        angle -= 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        ((-1, 0), (1, 0))
    } else if angle < 67.5 {
        ((-1, -1), (1, 1))
    } else if angle < 112.5 {
        ((0, -1), (0, 1))
    } else {
        ((1, -1), (-1, 1))
    }
}

/// Binary Canny edge map: blur, Sobel, non-maximum suppression (one-pixel
/// border excluded), hysteresis with 8-connectivity.
pub fn canny(img: &RasterImage, cfg: &CannyConfig) -> Mask {
    let (w, h) = img.dims();
    let grad = color_gradient(img, cfg.sigma);
    let mut thin = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = grad.magnitude[i];
            if m <= 0.0 {
                continue;
            }
            let (neg, pos) = nms_neighbors(grad.gx[i], grad.gy[i]);
            let mn = grad.magnitude[(y as i64 + neg.1) as usize * w + (x as i64 + neg.0) as usize];
            let mp = grad.magnitude[(y as i64 + pos.1) as usize * w + (x as i64 + pos.0) as usize];
            if m >= mn && m > mp {
                thin[i] = m;
            }
        }
    }
    let mut out = Mask::new(w, h);
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= cfg.high {
            out.bits[i] = true;
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
            if !out.bits[j] && thin[j] >= cfg.low {
                out.bits[j] = true;
                stack.push(j);
            }
        }
    }
    out
}

/// Links a binary edge map into ordered chains. Redundant staircase corners
/// are dropped first; junction pixels (3+ neighbors) terminate chains and are
/// not part of any chain. Chains shorter than two points are discarded.
pub fn link_chains(edges: &Mask) -> Vec<Chain> {
    let mut m = edges.clone();
    morph::remove_staircase(&mut m);
    let (w, h) = (m.width, m.height);
    let junctions: Vec<usize> = (0..w * h)
        .filter(|&i| m.bits[i] && m.neighbor_count(i % w, i / w) >= 3)
        .collect();
    for i in junctions {
        m.bits[i] = false;
    }

    let mut visited = vec![false; w * h];
    let mut chains = Vec::new();
    let next_of = |m: &Mask, visited: &[bool], p: Point| -> Option<Point> {
        FOUR.iter().chain(RING.iter().filter(|(dx, dy)| *dx != 0 && *dy != 0)).find_map(|&(dx, dy)| {
            let (nx, ny) = (p.x as i64 + dx, p.y as i64 + dy);
            (m.get(nx, ny) && !visited[ny as usize * w + nx as usize]).then(|| Point::new(nx as i32, ny as i32))
        })
    };
    let trace = |start: usize, visited: &mut Vec<bool>| -> Chain {
        let mut p = Point::new((start % w) as i32, (start / w) as i32);
        visited[start] = true;
        let mut points = vec![p];
        while let Some(q) = next_of(&m, visited, p) {
            visited[q.y as usize * w + q.x as usize] = true;
            points.push(q);
            p = q;
        }
        Chain::open(points)
    };

    // open paths from their endpoints first, then the remaining loops
    for i in 0..w * h {
        if m.bits[i] && !visited[i] && m.neighbor_count(i % w, i / w) <= 1 {
            chains.push(trace(i, &mut visited));
        }
    }
    for i in 0..w * h {
        if m.bits[i] && !visited[i] {
            let mut c = trace(i, &mut visited);
            c.closed = c.points.len() > 2 && c.points[0].is_8_neighbor(*c.points.last().unwrap());
            chains.push(c);
        }
    }
    chains.retain(|c| c.points.len() >= 2);
    sort_chains(&mut chains);
    chains
}

/// Canny followed by chain linking.
pub fn detect_texture_edges(img: &RasterImage, cfg: &CannyConfig) -> Vec<Chain> {
    link_chains(&canny(img, cfg))
}

/// Rasterizes chains into a mask.
pub fn chains_to_mask(chains: &[Chain], width: usize, height: usize) -> Mask {
    let mut m = Mask::new(width, height);
    for c in chains {
        for p in &c.points {
            if p.x >= 0 && p.y >= 0 && (p.x as usize) < width && (p.y as usize) < height {
                m.set(p.x as usize, p.y as usize, true);
            }
        }
    }
    m
}

pub fn mask_to_gray(m: &Mask) -> GrayImage {
    GrayImage::from_mask(m.width, m.height, &m.bits).expect("mask has valid dims")
}

pub fn gray_to_mask(g: &GrayImage) -> Mask {
    Mask::from_bits(g.width(), g.height(), g.to_mask())
}
