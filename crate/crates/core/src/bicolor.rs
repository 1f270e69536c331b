//! Bi-colored texture edges: every edge pixel carries the colors sampled on
//! both of its flanks. Edges come either from Canny chains on a photo or
//! from the 2-string / 4-string brushes, and are rasterized as a pair of
//! parallel one-pixel color rails ("double lines").
//!
//! Orientation convention: the normal is the tangent rotated by +90 degrees
//! in image coordinates (y down), `n = (-t.y, t.x)`, and the "left" color
//! belongs to the `+n` side.

use serde::{Deserialize, Serialize};

use crate::contour::{outer_curve, ContourMap};
use crate::edges::{sort_chains, Chain, Point};
use crate::error::{Error, Result};
use crate::morph::{self};
use crate::raster::{rgb_from_u8, rgb_to_u8, GrayImage, RasterImage, Rgb};

/// Half-width of the central difference used for tangents.
const TANGENT_REACH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct BiColoredEdge {
    pub points: Vec<Point>,
    pub left: Vec<Rgb>,
    pub right: Vec<Rgb>,
    pub normals: Vec<[f64; 2]>,
    /// Traversal wraps around: tangents at the ends use the other end.
    pub closed: bool,
}

impl BiColoredEdge {
    /// Builds an edge with constant side colors, computing normals from the
    /// point sequence.
    pub fn constant(points: Vec<Point>, closed: bool, left: Rgb, right: Rgb) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("an edge needs at least two points"));
        }
        let normals = chain_normals(&points, closed);
        let n = points.len();
        Ok(Self {
            points,
            left: vec![left; n],
            right: vec![right; n],
            normals,
            closed,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiColoredEdgeSet {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<BiColoredEdge>,
    /// Chains skipped during sampling because they had fewer than two points.
    pub skipped_short: usize,
}

impl BiColoredEdgeSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            edges: Vec::new(),
            skipped_short: 0,
        }
    }

    pub fn point_count(&self) -> usize {
        self.edges.iter().map(|e| e.len()).sum()
    }

    /// Distinct side colors at 8-bit precision, in first-seen order.
    pub fn palette(&self) -> Vec<[u8; 3]> {
        let mut out: Vec<[u8; 3]> = Vec::new();
        for e in &self.edges {
            for c in e.left.iter().chain(&e.right) {
                let q = rgb_to_u8(*c);
                if !out.contains(&q) {
                    out.push(q);
                }
            }
        }
        out
    }

    /// Checks the structural invariants: matching lengths, at least two
    /// points, 8-adjacent consecutive points, in-canvas points, unit normals.
    pub fn validate(&self) -> Result<()> {
        for (k, e) in self.edges.iter().enumerate() {
            let n = e.points.len();
            if n < 2 || e.left.len() != n || e.right.len() != n || e.normals.len() != n {
                return Err(Error::invalid(format!("edges[{k}]: inconsistent or too short point lists")));
            }
            for (i, p) in e.points.iter().enumerate() {
                if p.x < 0 || p.y < 0 || p.x as usize >= self.width || p.y as usize >= self.height {
                    return Err(Error::invalid(format!("edges[{k}].points[{i}] lies outside the canvas")));
                }
                if i > 0 && !e.points[i - 1].is_8_neighbor(*p) {
                    return Err(Error::invalid(format!("edges[{k}].points[{i}] is not 8-adjacent to its predecessor")));
                }
            }
            if e.normals.iter().any(|nv| ((nv[0] * nv[0] + nv[1] * nv[1]).sqrt() - 1.0).abs() > 1e-6) {
                return Err(Error::invalid(format!("edges[{k}]: normals must be unit length")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&EdgeSetWire::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let wire: EdgeSetWire = serde_json::from_str(s)?;
        Self::try_from(wire)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CanvasSize {
    pub w: usize,
    pub h: usize,
}

/// JSON form: colors as 8-bit integers, normals recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeSetWire {
    pub canvas: CanvasSize,
    pub edges: Vec<EdgeWire>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeWire {
    pub points: Vec<[i32; 2]>,
    pub left: Vec<[u8; 3]>,
    pub right: Vec<[u8; 3]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub closed: bool,
}

impl From<&BiColoredEdgeSet> for EdgeSetWire {
    fn from(s: &BiColoredEdgeSet) -> Self {
        EdgeSetWire {
            canvas: CanvasSize { w: s.width, h: s.height },
            edges: s
                .edges
                .iter()
                .map(|e| EdgeWire {
                    points: e.points.iter().map(|&p| p.into()).collect(),
                    left: e.left.iter().map(|&c| rgb_to_u8(c)).collect(),
                    right: e.right.iter().map(|&c| rgb_to_u8(c)).collect(),
                    closed: e.closed,
                })
                .collect(),
        }
    }
}

impl TryFrom<EdgeSetWire> for BiColoredEdgeSet {
    type Error = Error;

    fn try_from(w: EdgeSetWire) -> Result<Self> {
        if w.canvas.w == 0 || w.canvas.h == 0 {
            return Err(Error::invalid("canvas must be at least 1x1"));
        }
        let mut edges = Vec::with_capacity(w.edges.len());
        for (k, e) in w.edges.into_iter().enumerate() {
            if e.points.len() < 2 || e.left.len() != e.points.len() || e.right.len() != e.points.len() {
                return Err(Error::invalid(format!(
                    "edges[{k}]: points, left and right must have equal length >= 2"
                )));
            }
            let points: Vec<Point> = e.points.into_iter().map(Point::from).collect();
            let normals = chain_normals(&points, e.closed);
            edges.push(BiColoredEdge {
                points,
                left: e.left.into_iter().map(rgb_from_u8).collect(),
                right: e.right.into_iter().map(rgb_from_u8).collect(),
                normals,
                closed: e.closed,
            });
        }
        let set = BiColoredEdgeSet {
            width: w.canvas.w,
            height: w.canvas.h,
            edges,
            skipped_short: 0,
        };
        set.validate()?;
        Ok(set)
    }
}

impl Serialize for BiColoredEdgeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EdgeSetWire::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BiColoredEdgeSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = EdgeSetWire::deserialize(d)?;
        BiColoredEdgeSet::try_from(wire).map_err(serde::de::Error::custom)
    }
}

/// Unit normals from central differences over `TANGENT_REACH` points.
/// Closed chains wrap; a duplicated closing point shares the first normal.
pub fn chain_normals(points: &[Point], closed: bool) -> Vec<[f64; 2]> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let dup_end = closed && n > 2 && points[0] == points[n - 1];
    let ring = if dup_end { n - 1 } else { n };
    let wrap = closed && ring > 2;
    let at = |i: i64| -> Point {
        if wrap {
            points[i.rem_euclid(ring as i64) as usize]
        } else {
            points[i.clamp(0, ring as i64 - 1) as usize]
        }
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..ring as i64 {
        let mut normal = None;
        for reach in (1..=TANGENT_REACH as i64).rev() {
            let a = at(i - reach);
            let b = at(i + reach);
            let (tx, ty) = ((b.x - a.x) as f64, (b.y - a.y) as f64);
            let len = (tx * tx + ty * ty).sqrt();
            if len > 0.0 {
                normal = Some([-ty / len, tx / len]);
                break;
            }
        }
        out.push(normal.unwrap_or([0.0, 1.0]));
    }
    if dup_end {
        out.push(out[0]);
    }
    out
}

/// Splits a chain into maximal runs of kept points (runs of 1 are dropped).
fn split_runs(chain: &Chain, keep: &[bool]) -> Vec<Chain> {
    if keep.iter().all(|&k| k) {
        return vec![chain.clone()];
    }
    let mut points = chain.points.clone();
    let mut keep = keep.to_vec();
    if chain.closed {
        // start right after a removed point so the wrap-around run stays whole
        let first_removed = keep.iter().position(|&k| !k).unwrap();
        points.rotate_left(first_removed);
        keep.rotate_left(first_removed);
    }
    let mut out = Vec::new();
    let mut run = Vec::new();
    for (p, k) in points.into_iter().zip(keep) {
        if k {
            run.push(p);
        } else if !run.is_empty() {
            out.push(Chain::open(std::mem::take(&mut run)));
        }
    }
    if !run.is_empty() {
        out.push(Chain::open(run));
    }
    out.retain(|c| c.len() >= 2);
    out
}

/// Drops chain pixels within Chebyshev distance `band` of the outer
/// boundary curve and splits chains at the removed pixels. Interior seams do
/// not remove texture edges.
pub fn remove_outermost(chains: &[Chain], cm: &ContourMap, band: usize) -> Vec<Chain> {
    let outer = outer_curve(cm);
    let (w, h) = (outer.width, outer.height);
    let dist = morph::chebyshev_distance(&outer);
    let mut out = Vec::new();
    for c in chains {
        let keep: Vec<bool> = c
            .points
            .iter()
            .map(|p| {
                let inside = p.x >= 0 && p.y >= 0 && (p.x as usize) < w && (p.y as usize) < h;
                !inside || dist[p.y as usize * w + p.x as usize] > band as u32
            })
            .collect();
        out.extend(split_runs(c, &keep));
    }
    sort_chains(&mut out);
    out
}

fn turn_flags(c: &Chain, angle_thresh_deg: f64, window: usize) -> Vec<bool> {
    let n = c.points.len() as i64;
    let w = window as i64;
    let wrap = c.closed && n > 2 * w;
    let at = |i: i64| -> Option<Point> {
        if wrap {
            Some(c.points[i.rem_euclid(n) as usize])
        } else if (0..n).contains(&i) {
            Some(c.points[i as usize])
        } else {
            None
        }
    };
    let cos_thresh = angle_thresh_deg.to_radians().cos();
    (0..n)
        .map(|i| {
            let p = c.points[i as usize];
            let back = at(i - w).or_else(|| at(0)).unwrap();
            let fwd = at(i + w).or_else(|| at(n - 1)).unwrap();
            let a = ((p.x - back.x) as f64, (p.y - back.y) as f64);
            let b = ((fwd.x - p.x) as f64, (fwd.y - p.y) as f64);
            let la = (a.0 * a.0 + a.1 * a.1).sqrt();
            let lb = (b.0 * b.0 + b.1 * b.1).sqrt();
            if la == 0.0 || lb == 0.0 {
                return false;
            }
            (a.0 * b.0 + a.1 * b.1) / (la * lb) < cos_thresh
        })
        .collect()
}

/// Splits chains where the tangent turns by more than `angle_thresh_deg`
/// (tangents estimated over `window` points on either side), deleting the
/// corner points. Applied until no corner remains.
pub fn remove_corners(chains: &[Chain], angle_thresh_deg: f64, window: usize) -> Result<Vec<Chain>> {
    if window < 2 {
        return Err(Error::invalid(format!("corner window must be >= 2, got {window}")));
    }
    let mut out = Vec::new();
    let mut pending: Vec<Chain> = chains.to_vec();
    while let Some(c) = pending.pop() {
        let flags = turn_flags(&c, angle_thresh_deg, window);
        if flags.iter().any(|&f| f) {
            let keep: Vec<bool> = flags.iter().map(|f| !f).collect();
            pending.extend(split_runs(&c, &keep));
        } else {
            out.push(c);
        }
    }
    sort_chains(&mut out);
    Ok(out)
}

/// Samples the colors `offset` pixels away on both sides of every chain
/// point. Points whose samples leave the canvas are dropped (splitting the
/// chain); chains shorter than two points are skipped and counted.
pub fn sample_bicolor(img: &RasterImage, chains: &[Chain], offset: f64) -> Result<BiColoredEdgeSet> {
    if offset < 1.0 {
        return Err(Error::invalid(format!("sampling offset must be >= 1, got {offset}")));
    }
    let mut set = BiColoredEdgeSet::empty(img.width(), img.height());
    for c in chains {
        if c.len() < 2 {
            set.skipped_short += 1;
            continue;
        }
        let normals = chain_normals(&c.points, c.closed);
        let samples: Vec<Option<(Rgb, Rgb)>> = c
            .points
            .iter()
            .zip(&normals)
            .map(|(p, n)| {
                let (x, y) = (p.x as f64, p.y as f64);
                let l = img.sample(x + offset * n[0], y + offset * n[1])?;
                let r = img.sample(x - offset * n[0], y - offset * n[1])?;
                Some((l, r))
            })
            .collect();
        let all_ok = samples.iter().all(|s| s.is_some());
        let mut start = 0;
        while start < c.len() {
            if samples[start].is_none() {
                start += 1;
                continue;
            }
            let mut end = start;
            while end < c.len() && samples[end].is_some() {
                end += 1;
            }
            if end - start >= 2 {
                let (left, right) = samples[start..end].iter().map(|s| s.unwrap()).unzip();
                set.edges.push(BiColoredEdge {
                    points: c.points[start..end].to_vec(),
                    left,
                    right,
                    normals: normals[start..end].to_vec(),
                    closed: c.closed && all_ok,
                });
            }
            start = end;
        }
    }
    Ok(set)
}

/// Double-line raster: the left color one pixel along `+n`, the right color
/// one pixel along `-n`. Where consecutive rail pixels are not 8-adjacent the
/// gap is bridged with a line in the later point's color, so each rail stays
/// 8-connected. Returns the color raster (null = black) and the coverage
/// mask. Later writes win.
pub fn rasterize_bicolor(set: &BiColoredEdgeSet) -> Result<(RasterImage, GrayImage)> {
    let mut color = RasterImage::new(set.width, set.height)?;
    let mut coverage = GrayImage::new(set.width, set.height)?;
    let mut put = |p: Point, c: Rgb| {
        if p.x >= 0 && p.y >= 0 && (p.x as usize) < set.width && (p.y as usize) < set.height {
            color.set(p.x as usize, p.y as usize, c);
            coverage.set(p.x as usize, p.y as usize, 1.0);
        }
    };
    let rail = |p: Point, n: [f64; 2], sign: f64| {
        Point::new((p.x as f64 + sign * n[0]).round() as i32, (p.y as f64 + sign * n[1]).round() as i32)
    };
    for e in &set.edges {
        let count = e.points.len();
        for (sign, colors) in [(1.0, &e.left), (-1.0, &e.right)] {
            let mut prev: Option<Point> = if e.closed && count > 2 {
                Some(rail(e.points[count - 1], e.normals[count - 1], sign))
            } else {
                None
            };
            for i in 0..count {
                let q = rail(e.points[i], e.normals[i], sign);
                match prev {
                    // bridge short gaps only; longer jumps mean a fold in the rail
                    Some(pq) if (pq.x - q.x).abs().max((pq.y - q.y).abs()) == 2 => {
                        for r in line_points(pq, q).into_iter().skip(1) {
                            put(r, colors[i]);
                        }
                    }
                    _ => put(q, colors[i]),
                }
                prev = Some(q);
            }
        }
    }
    Ok((color, coverage))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrushKind {
    #[serde(rename = "2-string")]
    TwoString,
    #[serde(rename = "4-string")]
    FourString,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrushSpec {
    pub kind: BrushKind,
    /// 2-string: `[left, right]`. 4-string: `[stripe, ground]` or
    /// `[left ground, stripe, right ground]`.
    pub colors: Vec<Rgb>,
    /// Distance between the two pinstripe edges (4-string only).
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

fn default_spacing() -> f64 {
    6.0
}

/// Integer line between two points, inclusive of both ends.
pub fn line_points(a: Point, b: Point) -> Vec<Point> {
    let (mut x, mut y) = (a.x, a.y);
    let dx = (b.x - a.x).abs();
    let dy = -(b.y - a.y).abs();
    let sx = if a.x < b.x { 1 } else { -1 };
    let sy = if a.y < b.y { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = vec![a];
    while (x, y) != (b.x, b.y) {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push(Point::new(x, y));
    }
    out
}

/// Joins vertices into an 8-connected pixel path without repeated points in
/// a row.
pub fn connect(vertices: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for pair in vertices.windows(2) {
        for p in line_points(pair[0], pair[1]) {
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
    }
    if vertices.len() == 1 {
        out.push(vertices[0]);
    }
    out
}

fn clip_to_canvas(points: &[Point], closed: bool, w: usize, h: usize) -> Vec<(Vec<Point>, bool)> {
    let inside = |p: &Point| p.x >= 0 && p.y >= 0 && (p.x as usize) < w && (p.y as usize) < h;
    if points.iter().all(inside) {
        return vec![(points.to_vec(), closed)];
    }
    let keep: Vec<bool> = points.iter().map(inside).collect();
    split_runs(&Chain::open(points.to_vec()), &keep)
        .into_iter()
        .map(|c| (c.points, false))
        .collect()
}

/// Turns a pointer path into bi-colored edges on a `width x height` canvas.
pub fn brush_stroke(polyline: &[[f64; 2]], brush: &BrushSpec, width: usize, height: usize) -> Result<BiColoredEdgeSet> {
    if polyline.len() < 2 {
        return Err(Error::invalid("a stroke needs at least two points"));
    }
    let (left_ground, stripe, right_ground) = match (brush.kind, brush.colors.len()) {
        (BrushKind::TwoString, 2) => (brush.colors[0], brush.colors[1], brush.colors[1]),
        (BrushKind::FourString, 2) => (brush.colors[1], brush.colors[0], brush.colors[1]),
        (BrushKind::FourString, 3) => (brush.colors[0], brush.colors[1], brush.colors[2]),
        (kind, n) => {
            return Err(Error::invalid(format!("{kind:?} brush does not accept {n} colors")));
        }
    };
    let vertices: Vec<Point> = polyline
        .iter()
        .map(|p| Point::new(p[0].round() as i32, p[1].round() as i32))
        .collect();
    let closed = vertices.len() > 2 && vertices[0] == *vertices.last().unwrap();
    let path = connect(&vertices);
    if path.len() < 2 {
        return Err(Error::invalid("stroke must span at least two distinct pixels"));
    }
    let mut set = BiColoredEdgeSet::empty(width, height);
    let mut push = |pts: Vec<Point>, left: Rgb, right: Rgb| -> Result<()> {
        for (pts, closed) in clip_to_canvas(&pts, closed, width, height) {
            set.edges.push(BiColoredEdge::constant(pts, closed, left, right)?);
        }
        Ok(())
    };
    match brush.kind {
        BrushKind::TwoString => push(path, left_ground, stripe)?,
        BrushKind::FourString => {
            let normals = chain_normals(&path, closed);
            let half = brush.spacing / 2.0;
            for (sign, left, right) in [(1.0, left_ground, stripe), (-1.0, stripe, right_ground)] {
                let shifted: Vec<Point> = path
                    .iter()
                    .zip(&normals)
                    .map(|(p, n)| {
                        Point::new(
                            (p.x as f64 + sign * half * n[0]).round() as i32,
                            (p.y as f64 + sign * half * n[1]).round() as i32,
                        )
                    })
                    .collect();
                let rail = connect(&shifted);
                if rail.len() >= 2 {
                    push(rail, left, right)?;
                }
            }
        }
    }
    Ok(set)
}
