//! Color clustering and recoloring.
//!
//! Two clusterers produce the same [`ColorClusterStats`]: average-linkage
//! agglomerative clustering cut at a distance threshold (used for the color
//! loss and for shading decomposition) and seeded K-means (used for
//! interactive recoloring of dense textures). Statistics are canonical:
//! clusters sorted by descending pixel count, ties by lexicographic mean.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bicolor::BiColoredEdgeSet;
use crate::error::{Error, Result};
use crate::raster::{color_distance, GrayImage, RasterImage, Rgb};

/// Added to every covariance diagonal.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

/// Upper bound on pixels fed to the O(n^2) agglomeration.
pub const MAX_AGGLOMERATION_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStat {
    pub mean: Rgb,
    pub cov: [[f64; 3]; 3],
    pub count: usize,
}

/// Cluster index per pixel; `None` outside the clustered mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Option<u32>>,
}

impl LabelMap {
    /// Indices as a plane; unlabeled pixels become `-1`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_data(
            self.width,
            self.height,
            self.labels.iter().map(|l| l.map_or(-1.0, |v| v as f64)).collect(),
        )
        .expect("label map has valid dims")
    }

    pub fn pixels_of(&self, cluster: u32) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, l)| **l == Some(cluster))
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorClusterStats {
    pub clusters: Vec<ClusterStat>,
    pub label_map: LabelMap,
    /// Set when fewer clusters than requested could be formed.
    pub reduced_k: bool,
}

#[derive(Serialize, Deserialize)]
struct StatsWire {
    k: usize,
    clusters: Vec<ClusterStat>,
}

impl ColorClusterStats {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn total_count(&self) -> usize {
        self.clusters.iter().map(|c| c.count).sum()
    }

    /// `{k, clusters: [{mean, cov, count}]}`; the label map is not serialized.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StatsWire {
            k: self.k(),
            clusters: self.clusters.clone(),
        })?)
    }

    /// Parses the JSON form; the label map comes back empty.
    pub fn from_json(s: &str, width: usize, height: usize) -> Result<Self> {
        let wire: StatsWire = serde_json::from_str(s)?;
        if wire.k != wire.clusters.len() {
            return Err(Error::invalid("k does not match the number of clusters"));
        }
        Ok(Self {
            clusters: wire.clusters,
            label_map: LabelMap {
                width,
                height,
                labels: vec![None; width * height],
            },
            reduced_k: false,
        })
    }

    /// Indices of `x` within the largest cluster's pixel area.
    pub fn largest_fraction(&self) -> f64 {
        match self.clusters.first() {
            Some(c) => c.count as f64 / self.total_count().max(1) as f64,
            None => 0.0,
        }
    }
}

fn masked_pixels(img: &RasterImage, mask: &GrayImage) -> Result<Vec<usize>> {
    if img.dims() != mask.dims() {
        return Err(crate::raster::dims_mismatch(img.dims(), mask.dims()));
    }
    let idx: Vec<usize> = mask.data().iter().enumerate().filter(|(_, &v)| v >= 0.5).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(idx)
}

/// Mean computed as first sample plus mean deviation, exact for constant
/// input.
fn weighted_mean(colors: impl Iterator<Item = (Rgb, f64)> + Clone) -> Rgb {
    let mut it = colors.clone();
    let Some((first, _)) = it.next() else {
        return [0.0; 3];
    };
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (c, w) in colors {
        for k in 0..3 {
            acc[k] += w * (c[k] - first[k]);
        }
        total += w;
    }
    [first[0] + acc[0] / total, first[1] + acc[1] / total, first[2] + acc[2] / total]
}

/// Per-cluster mean, population covariance plus the floor, and count.
fn cluster_stats(img: &RasterImage, labels: &[Option<u32>], k: usize) -> Vec<ClusterStat> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            members[*l as usize].push(i);
        }
    }
    members
        .iter()
        .map(|px| {
            let mean = weighted_mean(px.iter().map(|&i| (img.pixel(i), 1.0)));
            let mut cov = [[0.0; 3]; 3];
            for &i in px {
                let c = img.pixel(i);
                let d = [c[0] - mean[0], c[1] - mean[1], c[2] - mean[2]];
                for a in 0..3 {
                    for b in 0..3 {
                        cov[a][b] += d[a] * d[b];
                    }
                }
            }
            let n = px.len().max(1) as f64;
            for (a, row) in cov.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v /= n;
                    if a == b {
                        *v += COVARIANCE_FLOOR;
                    }
                }
            }
            ClusterStat {
                mean,
                cov,
                count: px.len(),
            }
        })
        .collect()
}

fn canonicalize(img: &RasterImage, mut labels: Vec<Option<u32>>, k: usize, reduced_k: bool) -> ColorClusterStats {
    let stats = cluster_stats(img, &labels, k);
    let mut order: Vec<usize> = (0..k).filter(|&i| stats[i].count > 0).collect();
    order.sort_by(|&a, &b| {
        stats[b].count.cmp(&stats[a].count).then_with(|| {
            stats[a].mean.iter().zip(&stats[b].mean).fold(std::cmp::Ordering::Equal, |acc, (x, y)| {
                acc.then(x.total_cmp(y))
            })
        })
    });
    let mut remap = vec![None; k];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = Some(new as u32);
    }
    for l in labels.iter_mut() {
        *l = l.and_then(|v| remap[v as usize]);
    }
    ColorClusterStats {
        clusters: order.iter().map(|&i| stats[i].clone()).collect(),
        label_map: LabelMap {
            width: img.width(),
            height: img.height(),
            labels,
        },
        reduced_k,
    }
}

/// Statistics of `img` over the pixel groups of an existing labeling, in the
/// same cluster order. Used to pair a candidate image's clusters with a
/// reference image's clusters.
pub fn stats_for_labels(img: &RasterImage, reference: &ColorClusterStats) -> Result<ColorClusterStats> {
    let lm = &reference.label_map;
    if img.dims() != (lm.width, lm.height) {
        return Err(crate::raster::dims_mismatch(img.dims(), (lm.width, lm.height)));
    }
    Ok(ColorClusterStats {
        clusters: cluster_stats(img, &lm.labels, reference.k()),
        label_map: lm.clone(),
        reduced_k: false,
    })
}

fn nearest(means: &[Rgb], c: Rgb) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in means.iter().enumerate() {
        let d = (c[0] - m[0]).powi(2) + (c[1] - m[1]).powi(2) + (c[2] - m[2]).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Distinct colors with multiplicities, in first-seen order.
fn unique_colors(img: &RasterImage, idx: &[usize]) -> (Vec<Rgb>, Vec<f64>) {
    let mut seen: std::collections::HashMap<[u64; 3], usize> = std::collections::HashMap::new();
    let mut colors = Vec::new();
    let mut weights = Vec::new();
    for &i in idx {
        let c = img.pixel(i);
        let key = c.map(f64::to_bits);
        match seen.get(&key) {
            Some(&j) => weights[j] += 1.0,
            None => {
                seen.insert(key, colors.len());
                colors.push(c);
                weights.push(1.0);
            }
        }
    }
    (colors, weights)
}

fn stratified_sample(mask: &GrayImage, cap: usize) -> Vec<usize> {
    let (w, h) = mask.dims();
    let mut stride = 1;
    loop {
        let picked: Vec<usize> = (0..h)
            .step_by(stride)
            .flat_map(|y| (0..w).step_by(stride).map(move |x| y * w + x))
            .filter(|&i| mask.data()[i] >= 0.5)
            .collect();
        if picked.len() <= cap || stride > w.max(h) {
            return picked;
        }
        stride += 1;
    }
}

/// Average-linkage agglomeration via the nearest-neighbor chain. Returns the
/// merges `(a, b, height)` over weighted points.
fn average_linkage(points: &[Rgb], weights: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let tri = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        b * (b - 1) / 2 + a
    };
    let mut dist = vec![0f32; n * (n - 1) / 2];
    for j in 1..n {
        for i in 0..j {
            dist[tri(i, j)] = color_distance(points[i], points[j]) as f32;
        }
    }
    let mut size = weights.to_vec();
    let mut active = vec![true; n];
    let mut n_active = n;
    let mut chain: Vec<usize> = Vec::new();
    let mut merges = Vec::with_capacity(n - 1);
    while n_active > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).unwrap());
        }
        loop {
            let a = *chain.last().unwrap();
            let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
            let mut best = usize::MAX;
            let mut best_d = f32::INFINITY;
            if let Some(p) = prev {
                best = p;
                best_d = dist[tri(a, p)];
            }
            for j in 0..n {
                if j == a || !active[j] {
                    continue;
                }
                let d = dist[tri(a, j)];
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if Some(best) == prev {
                break;
            }
            chain.push(best);
        }
        let a = chain.pop().unwrap();
        let b = chain.pop().unwrap();
        let h = dist[tri(a, b)];
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };
        let (na, nb) = (size[keep], size[drop]);
        for k in 0..n {
            if !active[k] || k == keep || k == drop {
                continue;
            }
            let d = (na * dist[tri(k, keep)] as f64 + nb * dist[tri(k, drop)] as f64) / (na + nb);
            dist[tri(k, keep)] = d as f32;
        }
        size[keep] = na + nb;
        active[drop] = false;
        n_active -= 1;
        merges.push((keep, drop, h as f64));
    }
    merges
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PaletteConfig {
    pub dist_thresh: f64,
    pub kmeans_max_iter: usize,
    pub kmeans_restarts: usize,
}

impl Default for PaletteConfig {
    fn default() -> Self {
        Self {
            dist_thresh: 0.12,
            kmeans_max_iter: 100,
            kmeans_restarts: 10,
        }
    }
}

/// Average-linkage agglomerative clustering in RGB, cut at `dist_thresh`,
/// on a stratified subsample of the masked pixels. Every masked pixel is then
/// labeled by its nearest cluster mean.
pub fn hierarchical_clusters(img: &RasterImage, mask: &GrayImage, dist_thresh: f64) -> Result<ColorClusterStats> {
    let idx = masked_pixels(img, mask)?;
    let sample = stratified_sample(mask, MAX_AGGLOMERATION_SAMPLES);
    let (colors, weights) = unique_colors(img, &sample);
    let merges = average_linkage(&colors, &weights);
    let mut parent: Vec<usize> = (0..colors.len()).collect();
    for (a, b, h) in merges {
        if h <= dist_thresh {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut root_ids: Vec<usize> = Vec::new();
    let mut group = vec![0usize; colors.len()];
    for i in 0..colors.len() {
        let r = find(&mut parent, i);
        let gid = match root_ids.iter().position(|&x| x == r) {
            Some(g) => g,
            None => {
                root_ids.push(r);
                root_ids.len() - 1
            }
        };
        group[i] = gid;
    }
    let means: Vec<Rgb> = (0..root_ids.len())
        .map(|g| {
            weighted_mean(
                colors
                    .iter()
                    .zip(&weights)
                    .zip(&group)
                    .filter(move |(_, &gg)| gg == g)
                    .map(|((c, w), _)| (*c, *w)),
            )
        })
        .collect();
    let mut labels = vec![None; img.width() * img.height()];
    for &i in &idx {
        labels[i] = Some(nearest(&means, img.pixel(i)) as u32);
    }
    Ok(canonicalize(img, labels, means.len(), false))
}

/// Weighted within-cluster sum of squared distances.
fn sse(colors: &[Rgb], weights: &[f64], centers: &[Rgb], assign: &[usize]) -> f64 {
    colors
        .iter()
        .zip(weights)
        .zip(assign)
        .map(|((c, w), &a)| {
            let m = centers[a];
            w * ((c[0] - m[0]).powi(2) + (c[1] - m[1]).powi(2) + (c[2] - m[2]).powi(2))
        })
        .sum()
}

/// One seeded K-means run: k-means++ seeding then Lloyd iterations until
/// the assignment is a fixpoint or `max_iter` is reached. Returns centers,
/// assignment and the SSE after every iteration.
pub fn lloyd(colors: &[Rgb], weights: &[f64], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> (Vec<Rgb>, Vec<usize>, Vec<f64>) {
    let first = WeightedIndex::new(weights).expect("positive weights").sample(rng);
    let mut centers = vec![colors[first]];
    while centers.len() < k {
        let d2: Vec<f64> = colors
            .iter()
            .zip(weights)
            .map(|(c, w)| {
                let m = centers[nearest(&centers, *c)];
                w * ((c[0] - m[0]).powi(2) + (c[1] - m[1]).powi(2) + (c[2] - m[2]).powi(2))
            })
            .collect();
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // all remaining mass sits on existing centers
            Err(_) => colors.iter().position(|c| !centers.contains(c)).unwrap_or(0),
        };
        centers.push(colors[next]);
    }
    let mut assign: Vec<usize> = colors.iter().map(|c| nearest(&centers, *c)).collect();
    let mut history = vec![sse(colors, weights, &centers, &assign)];
    for _ in 0..max_iter {
        for (j, center) in centers.iter_mut().enumerate() {
            let members = colors.iter().zip(weights).zip(&assign).filter(|(_, &a)| a == j).map(|((c, w), _)| (*c, *w));
            if members.clone().next().is_some() {
                *center = weighted_mean(members);
            }
        }
        let next: Vec<usize> = colors.iter().map(|c| nearest(&centers, *c)).collect();
        let stable = next == assign;
        assign = next;
        history.push(sse(colors, weights, &centers, &assign));
        if stable {
            break;
        }
    }
    (centers, assign, history)
}

/// Seeded K-means over the masked pixels. When `k` exceeds the number of
/// distinct colors, clusters are formed per distinct color and `reduced_k`
/// is set. The best of `cfg.kmeans_restarts` seeded runs is kept.
pub fn kmeans_clusters(img: &RasterImage, mask: &GrayImage, k: usize, seed: u64, cfg: &PaletteConfig) -> Result<ColorClusterStats> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let idx = masked_pixels(img, mask)?;
    let (colors, weights) = unique_colors(img, &idx);
    let reduced = k > colors.len();
    let k = k.min(colors.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<Rgb>)> = None;
    for _ in 0..cfg.kmeans_restarts.max(1) {
        let (centers, _, history) = lloyd(&colors, &weights, k, cfg.kmeans_max_iter, &mut rng);
        let e = *history.last().unwrap();
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, centers));
        }
    }
    let centers = best.unwrap().1;
    let mut labels = vec![None; img.width() * img.height()];
    for &i in &idx {
        labels[i] = Some(nearest(&centers, img.pixel(i)) as u32);
    }
    Ok(canonicalize(img, labels, k, reduced))
}

/// Shifts every pixel of a mapped cluster by `new - old mean`, clamped to
/// `[0, 1]`. Unmapped clusters and unlabeled pixels are untouched.
pub fn recolor_clusters(img: &RasterImage, stats: &ColorClusterStats, mapping: &[(usize, Rgb)]) -> Result<RasterImage> {
    let lm = &stats.label_map;
    if img.dims() != (lm.width, lm.height) {
        return Err(crate::raster::dims_mismatch(img.dims(), (lm.width, lm.height)));
    }
    let mut shift: Vec<Option<Rgb>> = vec![None; stats.k()];
    for &(cluster, to) in mapping {
        let c = stats.clusters.get(cluster).ok_or(Error::UnknownCluster(cluster))?;
        shift[cluster] = Some([to[0] - c.mean[0], to[1] - c.mean[1], to[2] - c.mean[2]]);
    }
    let mut out = img.clone();
    for (i, l) in lm.labels.iter().enumerate() {
        if let Some(s) = l.and_then(|l| shift[l as usize]) {
            let p = img.pixel(i);
            out.set_pixel(i, [
                (p[0] + s[0]).clamp(0.0, 1.0),
                (p[1] + s[1]).clamp(0.0, 1.0),
                (p[2] + s[2]).clamp(0.0, 1.0),
            ]);
        }
    }
    Ok(out)
}

/// Replaces every side sample within `tol` of `from` by `to`. Returns the
/// new set and the number of replaced samples.
pub fn recolor_edges(set: &BiColoredEdgeSet, from: Rgb, to: Rgb, tol: f64) -> Result<(BiColoredEdgeSet, usize)> {
    if !(tol >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    let mut out = set.clone();
    let mut replaced = 0;
    for e in &mut out.edges {
        for c in e.left.iter_mut().chain(e.right.iter_mut()) {
            if color_distance(*c, from) <= tol {
                *c = to;
                replaced += 1;
            }
        }
    }
    Ok((out, replaced))
}
