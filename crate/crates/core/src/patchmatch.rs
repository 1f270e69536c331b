//! PatchMatch nearest-neighbor fields and coarse-to-fine texture expansion.
//!
//! Propagation uses a jump-flood schedule over a double-buffered field, and
//! random search draws from a per-pixel counter-based stream, so results do
//! not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{resample, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchMatchConfig {
    pub patch_size: usize,
    pub em_iterations: usize,
    /// Upper bound on pyramid levels; a level is used only while the scaled
    /// source is at least twice the patch size.
    pub scales: usize,
    /// Propagation plus random-search sweeps per NNF search.
    pub search_sweeps: usize,
    /// Random cyclic shift per tile in the initial tiling.
    pub jitter: bool,
}

impl Default for PatchMatchConfig {
    fn default() -> Self {
        Self {
            patch_size: 7,
            em_iterations: 5,
            scales: 3,
            search_sweeps: 6,
            jitter: true,
        }
    }
}

/// Per target patch position (top-left corner), the source patch position
/// and the cached SSD between the two patches.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighborField {
    /// Number of patch positions along x and y.
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub offsets: Vec<(u32, u32)>,
    pub distances: Vec<f64>,
}

pub fn nnf_energy(nnf: &NearestNeighborField) -> f64 {
    nnf.distances.iter().sum()
}

/// Sum of squared channel differences between two `p x p` patches.
pub fn patch_ssd(a: &RasterImage, ax: usize, ay: usize, b: &RasterImage, bx: usize, by: usize, p: usize) -> f64 {
    let (aw, bw) = (a.width(), b.width());
    let (ad, bd) = (a.data(), b.data());
    let mut s = 0.0;
    for dy in 0..p {
        let ra = ((ay + dy) * aw + ax) * 3;
        let rb = ((by + dy) * bw + bx) * 3;
        for k in 0..p * 3 {
            let d = ad[ra + k] - bd[rb + k];
            s += d * d;
        }
    }
    s
}

/// Like [`patch_ssd`] but stops once the sum reaches `bound`, returning a
/// value `>= bound` in that case.
fn patch_ssd_bounded(a: &RasterImage, ax: usize, ay: usize, b: &RasterImage, bx: usize, by: usize, p: usize, bound: f64) -> f64 {
    let (aw, bw) = (a.width(), b.width());
    let (ad, bd) = (a.data(), b.data());
    let mut s = 0.0;
    for dy in 0..p {
        let ra = ((ay + dy) * aw + ax) * 3;
        let rb = ((by + dy) * bw + bx) * 3;
        for k in 0..p * 3 {
            let d = ad[ra + k] - bd[rb + k];
            s += d * d;
        }
        if s >= bound {
            return s;
        }
    }
    s
}

fn positions(img: &RasterImage, p: usize) -> (usize, usize) {
    (img.width() + 1 - p, img.height() + 1 - p)
}

fn check_patch(img: &RasterImage, p: usize, what: &str) -> Result<()> {
    if p == 0 {
        return Err(Error::invalid("patch size must be at least 1"));
    }
    if img.width() < p || img.height() < p {
        return Err(Error::invalid(format!(
            "{what} is {}x{}, smaller than the {p}x{p} patch",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Independent random stream per (seed, sweep, pixel).
fn pixel_rng(seed: u64, sweep: u64, pixel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ sweep.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(pixel);
    rng
}

impl NearestNeighborField {
    /// Field with uniformly random source positions.
    pub fn random(target: &RasterImage, source: &RasterImage, p: usize, seed: u64) -> Result<Self> {
        check_patch(target, p, "target")?;
        check_patch(source, p, "source")?;
        let (tw, th) = positions(target, p);
        let (sw, sh) = positions(source, p);
        let offsets: Vec<(u32, u32)> = (0..tw * th)
            .map(|i| {
                let mut rng = pixel_rng(seed, u64::MAX, i as u64);
                (rng.random_range(0..sw) as u32, rng.random_range(0..sh) as u32)
            })
            .collect();
        Ok(Self::with_offsets(target, source, p, offsets))
    }

    /// Field with the given offsets and freshly computed distances.
    pub fn with_offsets(target: &RasterImage, source: &RasterImage, p: usize, offsets: Vec<(u32, u32)>) -> Self {
        let (tw, th) = positions(target, p);
        let distances = offsets
            .par_iter()
            .enumerate()
            .map(|(i, &(sx, sy))| patch_ssd(target, i % tw, i / tw, source, sx as usize, sy as usize, p))
            .collect();
        Self {
            width: tw,
            height: th,
            patch_size: p,
            offsets,
            distances,
        }
    }

    /// Exhaustive search over every source position.
    pub fn brute_force(target: &RasterImage, source: &RasterImage, p: usize) -> Result<Self> {
        check_patch(target, p, "target")?;
        check_patch(source, p, "source")?;
        let (tw, th) = positions(target, p);
        let (sw, sh) = positions(source, p);
        let best: Vec<((u32, u32), f64)> = (0..tw * th)
            .into_par_iter()
            .map(|i| {
                let mut best = ((0, 0), f64::INFINITY);
                for sy in 0..sh {
                    for sx in 0..sw {
                        let d = patch_ssd_bounded(target, i % tw, i / tw, source, sx, sy, p, best.1);
                        if d < best.1 {
                            best = ((sx as u32, sy as u32), d);
                        }
                    }
                }
                best
            })
            .collect();
        Ok(Self {
            width: tw,
            height: th,
            patch_size: p,
            offsets: best.iter().map(|b| b.0).collect(),
            distances: best.iter().map(|b| b.1).collect(),
        })
    }
}

/// Improves `nnf` in place with `sweeps` rounds of jump-flood propagation
/// followed by random search. Returns the energy after every round,
/// starting with the initial energy.
pub fn nnf_search(
    nnf: &mut NearestNeighborField,
    target: &RasterImage,
    source: &RasterImage,
    sweeps: usize,
    seed: u64,
) -> Vec<f64> {
    let p = nnf.patch_size;
    let (tw, th) = (nnf.width, nnf.height);
    let (sw, sh) = positions(source, p);
    let mut trace = vec![nnf_energy(nnf)];
    let max_step = tw.max(th).next_power_of_two() / 2;
    for sweep in 0..sweeps {
        // jump sizes cycle through halving powers of two, ending at 1
        let mut steps = Vec::new();
        let mut s = (max_step >> sweep.min(usize::BITS as usize - 1)).max(1);
        while s >= 1 {
            steps.push(s);
            s /= 2;
        }
        for step in steps {
            let prev_off = nnf.offsets.clone();
            let prev_dist = nnf.distances.clone();
            let updated: Vec<((u32, u32), f64)> = (0..tw * th)
                .into_par_iter()
                .map(|i| {
                    let (x, y) = ((i % tw) as i64, (i / tw) as i64);
                    let mut best = (prev_off[i], prev_dist[i]);
                    for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                        let (nx, ny) = (x + dx * step as i64, y + dy * step as i64);
                        if nx < 0 || ny < 0 || nx >= tw as i64 || ny >= th as i64 {
                            continue;
                        }
                        let (ox, oy) = prev_off[ny as usize * tw + nx as usize];
                        let (cx, cy) = (ox as i64 - dx * step as i64, oy as i64 - dy * step as i64);
                        if cx < 0 || cy < 0 || cx >= sw as i64 || cy >= sh as i64 {
                            continue;
                        }
                        let cand = (cx as u32, cy as u32);
                        if cand == best.0 {
                            continue;
                        }
                        let d = patch_ssd_bounded(target, x as usize, y as usize, source, cx as usize, cy as usize, p, best.1);
                        if d < best.1 {
                            best = (cand, d);
                        }
                    }
                    best
                })
                .collect();
            for (i, (o, d)) in updated.into_iter().enumerate() {
                nnf.offsets[i] = o;
                nnf.distances[i] = d;
            }
        }

        let updated: Vec<((u32, u32), f64)> = (0..tw * th)
            .into_par_iter()
            .map(|i| {
                let mut rng = pixel_rng(seed, sweep as u64, i as u64);
                let (x, y) = (i % tw, i / tw);
                let mut best = (nnf.offsets[i], nnf.distances[i]);
                let mut r = sw.max(sh) as i64;
                while r >= 1 {
                    let (bx, by) = (best.0 .0 as i64, best.0 .1 as i64);
                    let cx = (bx + rng.random_range(-r..=r)).clamp(0, sw as i64 - 1);
                    let cy = (by + rng.random_range(-r..=r)).clamp(0, sh as i64 - 1);
                    let cand = (cx as u32, cy as u32);
                    if cand != best.0 {
                        let d = patch_ssd_bounded(target, x, y, source, cx as usize, cy as usize, p, best.1);
                        if d < best.1 {
                            best = (cand, d);
                        }
                    }
                    r /= 2;
                }
                best
            })
            .collect();
        for (i, (o, d)) in updated.into_iter().enumerate() {
            nnf.offsets[i] = o;
            nnf.distances[i] = d;
        }
        trace.push(nnf_energy(nnf));
    }
    trace
}

/// Each target pixel becomes the uniform mean of the source pixels that
/// overlapping patches map onto it.
pub fn vote(nnf: &NearestNeighborField, source: &RasterImage, out_w: usize, out_h: usize) -> RasterImage {
    let p = nnf.patch_size as i64;
    let (tw, th) = (nnf.width as i64, nnf.height as i64);
    let data: Vec<f64> = (0..out_w * out_h)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (x, y) = ((i % out_w) as i64, (i / out_w) as i64);
            let mut acc = [0.0; 3];
            let mut n = 0.0;
            for qy in (y - p + 1).max(0)..=y.min(th - 1) {
                for qx in (x - p + 1).max(0)..=x.min(tw - 1) {
                    let (sx, sy) = nnf.offsets[(qy * tw + qx) as usize];
                    let c = source.get((sx as i64 + x - qx) as usize, (sy as i64 + y - qy) as usize);
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                    n += 1.0;
                }
            }
            acc.map(|v| v / n)
        })
        .collect();
    RasterImage::from_data(out_w, out_h, data).expect("vote yields finite values")
}

/// Candidate source offsets drawn per tile by [`tiled_init`].
const INIT_CANDIDATES: usize = 64;

/// Fills the target with crops of the source. Without `jitter` the source is
/// tiled as is. With `jitter` each tile is a crop two thirds the source size
/// at a random offset: of [`INIT_CANDIDATES`] seeded draws, the one that best
/// matches the already placed neighbors in the one-third overlap wins.
pub fn tiled_init(source: &RasterImage, out_w: usize, out_h: usize, jitter: bool, seed: u64) -> RasterImage {
    let (sw, sh) = source.dims();
    if !jitter {
        return RasterImage::from_fn(out_w, out_h, |x, y| source.get(x % sw, y % sh)).expect("valid dims");
    }
    let (bw, bh) = ((sw * 2).div_ceil(3).max(1), (sh * 2).div_ceil(3).max(1));
    let (ow, oh) = ((bw / 3).min(bw - 1), (bh / 3).min(bh - 1));
    let (step_x, step_y) = (bw - ow, bh - oh);
    let mut out = RasterImage::new(out_w, out_h).expect("valid dims");
    let mut placed = vec![false; out_w * out_h];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ty = 0;
    while ty < out_h {
        let mut tx = 0;
        while tx < out_w {
            let (cw, ch) = (bw.min(out_w - tx), bh.min(out_h - ty));
            let mut best = (0, 0, f64::INFINITY);
            for _ in 0..INIT_CANDIDATES {
                let (sx, sy) = (rng.random_range(0..=sw - bw), rng.random_range(0..=sh - bh));
                let mut cost = 0.0;
                for y in 0..ch {
                    for x in 0..cw {
                        let i = (ty + y) * out_w + tx + x;
                        if placed[i] {
                            let (a, b) = (out.pixel(i), source.get(sx + x, sy + y));
                            cost += (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
                        }
                    }
                    if cost >= best.2 {
                        break;
                    }
                }
                if cost < best.2 {
                    best = (sx, sy, cost);
                }
            }
            for y in 0..ch {
                for x in 0..cw {
                    let i = (ty + y) * out_w + tx + x;
                    out.set_pixel(i, source.get(best.0 + x, best.1 + y));
                    placed[i] = true;
                }
            }
            if tx + cw >= out_w {
                break;
            }
            tx += step_x;
        }
        if ty + bh >= out_h {
            break;
        }
        ty += step_y;
    }
    out
}

/// Energy traces of one expansion, one list per (scale, EM iteration).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpansionTrace {
    pub sweeps: Vec<Vec<f64>>,
    /// NNF energy at the end of each EM iteration, grouped by scale.
    pub em_energy: Vec<Vec<f64>>,
}

fn scaled_dims(w: usize, h: usize, level: usize) -> (usize, usize) {
    ((w >> level).max(1), (h >> level).max(1))
}

/// Coarse-to-fine EM texture synthesis of an `out_w x out_h` image from a
/// small patch.
pub fn expand_texture(patch: &RasterImage, out_w: usize, out_h: usize, cfg: &PatchMatchConfig, seed: u64) -> Result<RasterImage> {
    expand_texture_traced(patch, out_w, out_h, cfg, seed).map(|r| r.0)
}

pub fn expand_texture_traced(
    patch: &RasterImage,
    out_w: usize,
    out_h: usize,
    cfg: &PatchMatchConfig,
    seed: u64,
) -> Result<(RasterImage, ExpansionTrace)> {
    let p = cfg.patch_size;
    check_patch(patch, p, "patch")?;
    if out_w < p || out_h < p {
        return Err(Error::invalid(format!("output {out_w}x{out_h} is smaller than the {p}x{p} patch")));
    }
    let mut trace = ExpansionTrace::default();
    if cfg.em_iterations == 0 {
        return Ok((tiled_init(patch, out_w, out_h, cfg.jitter, seed), trace));
    }
    let (pw, ph) = patch.dims();
    let mut levels = cfg.scales.max(1);
    while levels > 1 {
        let (sw, sh) = scaled_dims(pw, ph, levels - 1);
        let (tw, th) = scaled_dims(out_w, out_h, levels - 1);
        // coarse levels need room for structure larger than one patch
        if sw.min(sh) >= 2 * p && tw.min(th) >= p {
            break;
        }
        levels -= 1;
    }

    let mut target: Option<RasterImage> = None;
    let mut nnf: Option<NearestNeighborField> = None;
    for level in (0..levels).rev() {
        let (sw, sh) = scaled_dims(pw, ph, level);
        let (tw, th) = scaled_dims(out_w, out_h, level);
        let source = resample(patch, sw, sh)?;
        let t = match target.take() {
            None => tiled_init(&source, tw, th, cfg.jitter, seed),
            Some(prev) => resample(&prev, tw, th)?,
        };
        let mut field = match nnf.take() {
            None => NearestNeighborField::random(&t, &source, p, seed ^ 0x5151)?,
            Some(coarse) => upsample_nnf(&coarse, &t, &source, p),
        };
        let mut cur = t;
        let mut em = Vec::with_capacity(cfg.em_iterations);
        for it in 0..cfg.em_iterations {
            let sweep_seed = seed.wrapping_add(((level as u64) << 32) | it as u64);
            trace.sweeps.push(nnf_search(&mut field, &cur, &source, cfg.search_sweeps, sweep_seed));
            cur = vote(&field, &source, tw, th);
            field = NearestNeighborField::with_offsets(&cur, &source, p, field.offsets);
            em.push(nnf_energy(&field));
        }
        trace.em_energy.push(em);
        target = Some(cur);
        nnf = Some(field);
    }
    Ok((target.expect("at least one level"), trace))
}

fn upsample_nnf(coarse: &NearestNeighborField, target: &RasterImage, source: &RasterImage, p: usize) -> NearestNeighborField {
    let (tw, th) = positions(target, p);
    let (sw, sh) = positions(source, p);
    let offsets = (0..tw * th)
        .map(|i| {
            let (x, y) = (i % tw, i / tw);
            let cx = (x / 2).min(coarse.width - 1);
            let cy = (y / 2).min(coarse.height - 1);
            let (ox, oy) = coarse.offsets[cy * coarse.width + cx];
            (
                (ox as usize * 2 + x % 2).min(sw - 1) as u32,
                (oy as usize * 2 + y % 2).min(sh - 1) as u32,
            )
        })
        .collect();
    NearestNeighborField::with_offsets(target, source, p, offsets)
}
