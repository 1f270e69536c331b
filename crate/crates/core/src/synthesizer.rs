//! Reference garment synthesis: fills the garment interior with colors
//! propagated from the bi-colored edge constraints.
//!
//! Coverage pixels are Dirichlet constraints, contour pixels inside the
//! garment are insulating walls, and every other interior pixel solves the
//! discrete Laplace equation per channel. Each 4-connected free region is
//! solved independently; a region bordered by a single constraint color is
//! filled with that color directly.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicolor::{rasterize_bicolor, BiColoredEdgeSet};
use crate::contour::{garment_region, ContourMap};
use crate::document::{DesignDocument, TextureMode};
use crate::error::{Error, Result};
use crate::morph::{self, Mask, FOUR, RING};
use crate::patchmatch::{expand_texture, PatchMatchConfig};
use crate::raster::{dims_mismatch, rgb_from_u8, GrayImage, RasterImage, Rgb};
use crate::shading::{enhance, render_shading, ShadeConfig};

/// Generator input: contour map plus rasterized bi-colored edges.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationStack {
    pub contour: ContourMap,
    /// Edge colors; black where uncovered.
    pub bicolor: RasterImage,
    pub coverage: GrayImage,
}

impl RepresentationStack {
    pub fn new(contour: ContourMap, bicolor: RasterImage, coverage: GrayImage) -> Result<Self> {
        if contour.dims() != bicolor.dims() {
            return Err(dims_mismatch(contour.dims(), bicolor.dims()));
        }
        if contour.dims() != coverage.dims() {
            return Err(dims_mismatch(contour.dims(), coverage.dims()));
        }
        Ok(Self {
            contour,
            bicolor,
            coverage,
        })
    }

    pub fn from_edges(contour: ContourMap, set: &BiColoredEdgeSet) -> Result<Self> {
        if contour.dims() != (set.width, set.height) {
            return Err(dims_mismatch(contour.dims(), (set.width, set.height)));
        }
        let (bicolor, coverage) = rasterize_bicolor(set)?;
        Self::new(contour, bicolor, coverage)
    }

    /// Paints a square dab of `color` centered on `(x, y)`.
    pub fn add_dab(&mut self, x: i32, y: i32, size: u32, color: Rgb) {
        let (w, h) = self.contour.dims();
        let lo = -((size as i32 - 1) / 2);
        for dy in lo..lo + size as i32 {
            for dx in lo..lo + size as i32 {
                let (px, py) = (x + dx, y + dy);
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    self.bicolor.set(px as usize, py as usize, color);
                    self.coverage.set(px as usize, py as usize, 1.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    Harmonic,
    Voronoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub mode: FillMode,
    /// Maximum per-pixel residual `|mean(neighbors) - u|`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub default_color: Rgb,
    pub background: Rgb,
    /// Dense mode: width of the harmonic blend band along the garment edge.
    pub blend_band: usize,
    /// Dense mode: side of the expanded texture tile.
    pub dense_tile: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mode: FillMode::Harmonic,
            tol: 1e-6,
            max_sweeps: 20_000,
            default_color: [0.5, 0.5, 0.5],
            background: [1.0, 1.0, 1.0],
            blend_band: 4,
            dense_tile: 96,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub image: RasterImage,
    pub warnings: Vec<String>,
    /// Largest final residual over all solved regions.
    pub max_residual: f64,
    /// Largest sweep count over all solved regions.
    pub sweeps: usize,
}

/// Pixel roles for the solver.
struct Problem {
    width: usize,
    height: usize,
    /// Solved pixels.
    free: Vec<bool>,
    /// Dirichlet pixels.
    fixed: Vec<Option<Rgb>>,
}

impl Problem {
    fn node(&self, i: usize) -> bool {
        self.free[i] || self.fixed[i].is_some()
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
        FOUR.iter().filter_map(move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx as usize >= self.width || ny as usize >= self.height {
                return None;
            }
            let j = ny as usize * self.width + nx as usize;
            self.node(j).then_some(j)
        })
    }

    /// 4-connected components of free pixels, in raster order of their
    /// first pixel.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.width * self.height;
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if !self.free[s] || seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut k = 0;
            while k < comp.len() {
                let i = comp[k];
                k += 1;
                for j in self.neighbors(i).collect::<Vec<_>>() {
                    if self.free[j] && !seen[j] {
                        seen[j] = true;
                        comp.push(j);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

struct RegionResult {
    residual: f64,
    sweeps: usize,
}

/// Geodesic nearest-constraint fill of one component by multi-source BFS
/// from its constraint pixels in raster order.
fn voronoi_fill(pb: &Problem, comp: &[usize], sources: &[usize], u: &mut [Rgb]) {
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut done = vec![false; pb.width * pb.height];
    for &s in sources {
        done[s] = true;
        queue.push_back(s);
    }
    while let Some(i) = queue.pop_front() {
        for j in pb.neighbors(i).collect::<Vec<_>>() {
            if pb.free[j] && !done[j] {
                done[j] = true;
                u[j] = u[i];
                queue.push_back(j);
            }
        }
    }
    debug_assert!(comp.iter().all(|&i| done[i]));
}

/// Red-black SOR on one component until the max residual is below `tol`.
fn sor(pb: &Problem, comp: &[usize], u: &mut [Rgb], tol: f64, max_sweeps: usize) -> RegionResult {
    let w = pb.width;
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
    for &i in comp {
        x0 = x0.min(i % w);
        x1 = x1.max(i % w);
        y0 = y0.min(i / w);
        y1 = y1.max(i / w);
    }
    let span = (x1 - x0).max(y1 - y0) + 2;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / span as f64).sin());
    // neighbor lists with the constraint pixels resolved once
    let nbrs: Vec<Vec<usize>> = comp.iter().map(|&i| pb.neighbors(i).collect()).collect();
    let (red, black): (Vec<usize>, Vec<usize>) = (0..comp.len()).partition(|&k| (comp[k] % w + comp[k] / w) % 2 == 0);

    let solve_channel = |c: usize| -> (Vec<f64>, f64, usize) {
        let mut plane: Vec<f64> = u.iter().map(|v| v[c]).collect();
        let residual = |plane: &[f64]| -> f64 {
            comp.iter()
                .zip(&nbrs)
                .map(|(&i, nb)| {
                    let avg = nb.iter().map(|&j| plane[j]).sum::<f64>() / nb.len() as f64;
                    (avg - plane[i]).abs()
                })
                .fold(0.0, f64::max)
        };
        let mut sweeps = 0;
        let mut r = residual(&plane);
        while r > tol && sweeps < max_sweeps {
            for part in [&red, &black] {
                for &k in part.iter() {
                    let i = comp[k];
                    let nb = &nbrs[k];
                    let avg = nb.iter().map(|&j| plane[j]).sum::<f64>() / nb.len() as f64;
                    plane[i] += omega * (avg - plane[i]);
                }
            }
            sweeps += 1;
            if sweeps % 8 == 0 || sweeps == max_sweeps {
                r = residual(&plane);
            }
        }
        (plane, r, sweeps)
    };
    let planes: Vec<(Vec<f64>, f64, usize)> = (0..3).into_par_iter().map(solve_channel).collect();
    for &i in comp {
        u[i] = [planes[0].0[i], planes[1].0[i], planes[2].0[i]];
    }
    RegionResult {
        residual: planes.iter().map(|p| p.1).fold(0.0, f64::max),
        sweeps: planes.iter().map(|p| p.2).max().unwrap_or(0),
    }
}

/// Solves every free component. Returns per-pixel values for nodes plus the
/// largest residual and sweep count.
fn solve(pb: &Problem, cfg: &SynthConfig, warnings: &mut Vec<String>) -> (Vec<Rgb>, f64, usize) {
    let mut u: Vec<Rgb> = pb.fixed.iter().map(|f| f.unwrap_or(cfg.default_color)).collect();
    let mut max_res: f64 = 0.0;
    let mut max_sweeps = 0;
    let mut unconstrained = 0;
    for comp in pb.components() {
        let mut sources: Vec<usize> = comp
            .iter()
            .flat_map(|&i| pb.neighbors(i).filter(|&j| pb.fixed[j].is_some()).collect::<Vec<_>>())
            .collect();
        sources.sort_unstable();
        sources.dedup();
        if sources.is_empty() {
            unconstrained += comp.len();
            continue;
        }
        let first = pb.fixed[sources[0]].unwrap();
        if sources.iter().all(|&s| pb.fixed[s] == Some(first)) {
            for &i in &comp {
                u[i] = first;
            }
            continue;
        }
        voronoi_fill(pb, &comp, &sources, &mut u);
        if cfg.mode == FillMode::Harmonic {
            let r = sor(pb, &comp, &mut u, cfg.tol, cfg.max_sweeps);
            max_res = max_res.max(r.residual);
            max_sweeps = max_sweeps.max(r.sweeps);
        }
    }
    if unconstrained > 0 {
        warnings.push(format!(
            "{unconstrained} interior pixels have no color constraint; filled with the default color"
        ));
    }
    if max_res > cfg.tol {
        warnings.push(format!("solver stopped at residual {max_res:.3e} after {max_sweeps} sweeps"));
    }
    (u, max_res, max_sweeps)
}

fn assemble(pb: &Problem, region: &Mask, walls: &Mask, u: &[Rgb], cfg: &SynthConfig) -> RasterImage {
    let (w, h) = (pb.width, pb.height);
    let mut out = RasterImage::filled(w, h, cfg.background).expect("valid dims");
    for i in 0..w * h {
        if !region.bits[i] {
            continue;
        }
        if pb.node(i) {
            out.set_pixel(i, u[i]);
        } else if walls.bits[i] {
            // seam pixels take the mean of their solved neighbors
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let mut acc = [0.0; 3];
            let mut n = 0.0;
            for (dx, dy) in RING {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if region.bits[j] && pb.node(j) {
                    for k in 0..3 {
                        acc[k] += u[j][k];
                    }
                    n += 1.0;
                }
            }
            out.set_pixel(i, if n > 0.0 { acc.map(|v| v / n) } else { cfg.default_color });
        }
    }
    out
}

fn validate_cfg(cfg: &SynthConfig) -> Result<()> {
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("synth tol must be positive"));
    }
    Ok(())
}

/// Harmonic (or Voronoi) fill of the garment interior.
pub fn synthesize(rep: &RepresentationStack, cfg: &SynthConfig) -> Result<Synthesis> {
    validate_cfg(cfg)?;
    let region = garment_region(&rep.contour)?;
    let walls = rep.contour.bits();
    let (w, h) = rep.contour.dims();
    let covered = rep.coverage.to_mask();
    let fixed: Vec<Option<Rgb>> = (0..w * h)
        .map(|i| (region.bits[i] && covered[i]).then(|| rep.bicolor.pixel(i)))
        .collect();
    let free: Vec<bool> = (0..w * h).map(|i| region.bits[i] && !covered[i] && !walls.bits[i]).collect();
    let pb = Problem {
        width: w,
        height: h,
        free,
        fixed,
    };
    let mut warnings = Vec::new();
    let (u, max_residual, sweeps) = solve(&pb, cfg, &mut warnings);
    Ok(Synthesis {
        image: assemble(&pb, &region, &walls, &u, cfg),
        warnings,
        max_residual,
        sweeps,
    })
}

/// Pastes `texture`, tiled from the garment's bounding-box corner, into the
/// interior and re-solves only the pixels within `cfg.blend_band` of the
/// garment edge.
pub fn synthesize_dense(rep: &RepresentationStack, texture: &RasterImage, cfg: &SynthConfig) -> Result<Synthesis> {
    validate_cfg(cfg)?;
    let region = garment_region(&rep.contour)?;
    let walls = rep.contour.bits();
    let (w, h) = rep.contour.dims();
    let (x0, y0) = (0..w * h)
        .filter(|&i| region.bits[i])
        .fold((usize::MAX, usize::MAX), |(a, b), i| (a.min(i % w), b.min(i / w)));
    let (tw, th) = texture.dims();
    let dist = morph::chebyshev_distance(&region.not());
    let covered = rep.coverage.to_mask();
    let fixed: Vec<Option<Rgb>> = (0..w * h)
        .map(|i| {
            if !region.bits[i] {
                None
            } else if covered[i] {
                Some(rep.bicolor.pixel(i))
            } else if dist[i] as usize > cfg.blend_band && !walls.bits[i] {
                let (x, y) = (i % w, i / w);
                Some(texture.get((x - x0) % tw, (y - y0) % th))
            } else {
                None
            }
        })
        .collect();
    let free: Vec<bool> = (0..w * h).map(|i| region.bits[i] && fixed[i].is_none() && !walls.bits[i]).collect();
    let pb = Problem {
        width: w,
        height: h,
        free,
        fixed,
    };
    let mut warnings = Vec::new();
    let (u, max_residual, sweeps) = solve(&pb, cfg, &mut warnings);
    Ok(Synthesis {
        image: assemble(&pb, &region, &walls, &u, cfg),
        warnings,
        max_residual,
        sweeps,
    })
}

/// Final composite of a design document.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub base: RasterImage,
    pub shading: GrayImage,
    pub image: RasterImage,
    pub warnings: Vec<String>,
}

/// Builds the representation stack of a document: its texture layer and
/// color points.
pub fn document_stack(doc: &DesignDocument) -> Result<RepresentationStack> {
    let contour = doc.contour()?;
    let mut rep = RepresentationStack::from_edges(contour, &doc.texture()?)?;
    for p in &doc.color_points {
        rep.add_dab(p.x, p.y, p.size, rgb_from_u8(p.color));
    }
    Ok(rep)
}

/// Synthesis, shading rendering and enhancement of a design document.
pub fn full_pipeline(
    doc: &DesignDocument,
    synth: &SynthConfig,
    shade: &ShadeConfig,
    pm: &PatchMatchConfig,
) -> Result<Composite> {
    doc.validate().map_err(|e| e.in_stage("document"))?;
    let rep = document_stack(doc).map_err(|e| e.in_stage("document"))?;
    let base = match doc.mode {
        TextureMode::Dense => {
            let patch = doc.patch()?.ok_or_else(|| Error::invalid("dense_patch: required in dense mode"))?;
            let side = synth.dense_tile.max(pm.patch_size);
            let tile = expand_texture(&patch, side, side, pm, doc.seed).map_err(|e| e.in_stage("expand"))?;
            synthesize_dense(&rep, &tile, synth)
        }
        TextureMode::Pure | TextureMode::Sparse => synthesize(&rep, synth),
    }
    .map_err(|e| e.in_stage("synthesize"))?;
    let shading = render_shading(&rep.contour, &doc.shading_edges()?, shade).map_err(|e| e.in_stage("shade"))?;
    let image = enhance(&base.image, &shading).map_err(|e| e.in_stage("enhance"))?;
    Ok(Composite {
        base: base.image,
        shading,
        image,
        warnings: base.warnings,
    })
}
