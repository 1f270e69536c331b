//! Synthetic garment generators shared by the integration tests.
#![allow(dead_code)]

use garment_core::raster::{quantize_u8, GrayImage, RasterImage, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WHITE: Rgb = [1.0, 1.0, 1.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random 8-bit color with every channel in `[lo, hi]`.
pub fn color_in(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Rgb {
    [0; 3].map(|_| quantize_u8(r.random_range(lo..=hi)) as f64 / 255.0)
}

fn max_diff(a: Rgb, b: Rgb) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max)
}

/// Label raster of a synthetic garment: 0 background, 1 ground, 2 pattern.
#[derive(Debug, Clone)]
pub struct Garment {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
    pub ground: Rgb,
    pub pattern: Rgb,
}

impl Garment {
    pub fn image(&self) -> RasterImage {
        RasterImage::from_fn(self.width, self.height, |x, y| match self.labels[y * self.width + x] {
            0 => WHITE,
            1 => self.ground,
            _ => self.pattern,
        })
        .unwrap()
    }

    pub fn mask(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| (self.labels[y * self.width + x] != 0) as u8 as f64).unwrap()
    }

    /// Pixels within Chebyshev distance `band` of a label change.
    pub fn edge_band(&self, band: usize) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let boundary: Vec<bool> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let l = self.labels[i];
                (x > 0 && self.labels[i - 1] != l)
                    || (x + 1 < w && self.labels[i + 1] != l)
                    || (y > 0 && self.labels[i - w] != l)
                    || (y + 1 < h && self.labels[i + w] != l)
            })
            .collect();
        let b = band as i64;
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                (-b..=b).any(|dy| {
                    (-b..=b).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 && boundary[ny as usize * w + nx as usize]
                    })
                })
            })
            .collect()
    }
}

/// Silhouette: a torso rectangle with two sleeves and a neckline notch,
/// randomly sized within an `n` x `n` canvas.
fn silhouette(r: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let nf = n as f64;
    let cx = nf / 2.0 + r.random_range(-0.04..0.04) * nf;
    let half_w = r.random_range(0.2..0.26) * nf;
    let top = r.random_range(0.12..0.18) * nf;
    let bottom = r.random_range(0.84..0.9) * nf;
    let sleeve_len = r.random_range(0.1..0.16) * nf;
    let sleeve_h = r.random_range(0.18..0.26) * nf;
    let neck = r.random_range(0.06..0.1) * nf;
    (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
            let dx = (x - cx).abs();
            let torso = dx <= half_w && y >= top && y <= bottom;
            // sleeves slope downward away from the shoulders
            let sleeve = dx > half_w && dx <= half_w + sleeve_len && {
                let t = dx - half_w;
                y >= top + 0.5 * t && y <= top + sleeve_h + 0.5 * t
            };
            let neckline = dx <= neck && y < top + neck * 0.8;
            (torso || sleeve) && !neckline
        })
        .collect()
}

/// Ground color dark enough to separate from the white background, and a
/// pattern color distinct from both.
fn two_colors(r: &mut ChaCha8Rng) -> (Rgb, Rgb) {
    let ground = color_in(r, 0.05, 0.3);
    loop {
        let pattern = color_in(r, 0.0, 0.85);
        if max_diff(pattern, ground) >= 0.4 && max_diff(pattern, WHITE) >= 0.3 {
            return (ground, pattern);
        }
    }
}

/// Two-tone garment with a pattern of disks and ellipses that stay clear of
/// the silhouette.
pub fn dotted_garment(seed: u64, n: usize) -> Garment {
    let mut r = rng(seed);
    let sil = silhouette(&mut r, n);
    let (ground, pattern) = two_colors(&mut r);
    let inside = |x: i64, y: i64, m: i64| -> bool {
        (-m..=m).all(|dy| {
            (-m..=m).all(|dx| {
                let (px, py) = (x + dx, y + dy);
                px >= 0 && py >= 0 && px < n as i64 && py < n as i64 && sil[py as usize * n + px as usize]
            })
        })
    };
    let mut labels: Vec<u8> = sil.iter().map(|&s| s as u8).collect();
    let mut blobs: Vec<(f64, f64, f64, f64)> = Vec::new();
    let count = r.random_range(1..=3);
    let mut tries = 0;
    while blobs.len() < count && tries < 200 {
        tries += 1;
        let rx = r.random_range(0.09..0.16) * n as f64;
        let ry = rx * r.random_range(0.7..1.3);
        let cx = r.random_range(0.0..n as f64);
        let cy = r.random_range(0.0..n as f64);
        let m = (rx.max(ry) + 8.0) as i64;
        if !inside(cx as i64, cy as i64, m) {
            continue;
        }
        if blobs
            .iter()
            .any(|&(bx, by, brx, bry)| ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt() < brx.max(bry) + rx.max(ry) + 10.0)
        {
            continue;
        }
        blobs.push((cx, cy, rx, ry));
    }
    for (i, l) in labels.iter_mut().enumerate() {
        let (x, y) = ((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
        if blobs.iter().any(|&(cx, cy, rx, ry)| ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0) {
            *l = 2;
        }
    }
    Garment {
        width: n,
        height: n,
        labels,
        ground,
        pattern,
    }
}

/// Two-tone garment with horizontal stripes running across the torso.
pub fn striped_garment(seed: u64, n: usize) -> Garment {
    let mut r = rng(seed);
    let sil = silhouette(&mut r, n);
    let (ground, pattern) = two_colors(&mut r);
    let period = r.random_range(16..28usize);
    let width = r.random_range(6..period - 6);
    let phase = r.random_range(0..period);
    let labels = (0..n * n)
        .map(|i| {
            if !sil[i] {
                0
            } else if ((i / n) + phase) % period < width {
                2
            } else {
                1
            }
        })
        .collect();
    Garment {
        width: n,
        height: n,
        labels,
        ground,
        pattern,
    }
}

/// Smallest RGB distance between `a * s` and `b * t` over shading values
/// `s, t` in the range used by [`cluster_colored`].
fn ray_gap(a: Rgb, b: Rgb) -> f64 {
    let steps = 24;
    let shade = |k: usize| 0.45 + 0.55 * k as f64 / steps as f64;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            let (s, t) = (shade(i), shade(j));
            let d = (0..3).map(|c| (a[c] * s - b[c] * t).powi(2)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Image whose pixels are `reflectance(cluster) * shading`, quantized to 8
/// bits. Clusters are Voronoi cells of random seeds; shading is a smooth
/// random field in `[0.45, 1]`. Materials stay apart in RGB over the whole
/// shading range, so color clustering can separate them.
pub fn cluster_colored(seed: u64, n: usize) -> RasterImage {
    let mut r = rng(seed);
    let k = r.random_range(2..=4usize);
    let mut colors: Vec<Rgb> = Vec::new();
    while colors.len() < k {
        let c = color_in(&mut r, 0.1, 1.0);
        let s: f64 = c.iter().sum();
        let ch = c.map(|v| v / s);
        if colors.iter().all(|o| {
            let so: f64 = o.iter().sum();
            (0..3).map(|i| (o[i] / so - ch[i]).abs()).fold(0.0, f64::max) > 0.08 && ray_gap(*o, c) > 0.2
        }) {
            colors.push(c);
        }
    }
    let sites: Vec<(f64, f64, usize)> = (0..k * 2)
        .map(|i| (r.random_range(0.0..n as f64), r.random_range(0.0..n as f64), i % k))
        .collect();
    let (fx, fy, ph) = (r.random_range(0.5..2.0), r.random_range(0.5..2.0), r.random_range(0.0..6.28));
    RasterImage::from_fn(n, n, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let site = sites
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - xf).powi(2) + (a.1 - yf).powi(2);
                let db = (b.0 - xf).powi(2) + (b.1 - yf).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        let u = (xf / n as f64) * std::f64::consts::TAU;
        let v = (yf / n as f64) * std::f64::consts::TAU;
        let s = 0.725 + 0.275 * (fx * u + ph).sin() * (fy * v).cos();
        colors[site.2].map(|c| quantize_u8(c * s) as f64 / 255.0)
    })
    .unwrap()
}

/// The garment image with a smooth multiplicative light falloff inside the
/// silhouette, quantized to 8 bits.
pub fn shaded_image(g: &Garment, seed: u64) -> RasterImage {
    let mut r = rng(seed);
    let (fx, ph) = (r.random_range(0.5..1.5), r.random_range(0.0..6.28));
    let img = g.image();
    RasterImage::from_fn(g.width, g.height, |x, y| {
        let c = img.get(x, y);
        if g.labels[y * g.width + x] == 0 {
            return c;
        }
        let u = x as f64 / g.width as f64 * std::f64::consts::TAU;
        let v = y as f64 / g.height as f64;
        let s = 0.8 + 0.2 * (fx * u + ph).sin() * (1.0 - 0.5 * v);
        c.map(|v| quantize_u8(v * s) as f64 / 255.0)
    })
    .unwrap()
}
