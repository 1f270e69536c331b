//! Training-data construction: photos to (contour, bi-colored edges,
//! shading) samples, and corpus building over a directory.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bicolor::{rasterize_bicolor, remove_corners, remove_outermost, sample_bicolor, BiColoredEdgeSet};
use crate::contour::{extract_contour, outer_boundary, simplify_contour, ContourConfig, ContourMap};
use crate::document::ColorPoint;
use crate::edges::{detect_texture_edges, CannyConfig};
use crate::error::{Error, Result};
use crate::palette::hierarchical_clusters;
use crate::raster::{resample, rgb_to_u8, GrayImage, RasterImage};
use crate::shading::{decompose, shading_edges_for_training};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub contour: ContourConfig,
    pub canny: CannyConfig,
    /// Texture-edge pixels within this Chebyshev distance of the contour are
    /// dropped.
    pub band: usize,
    pub corner_angle: f64,
    pub corner_window: usize,
    pub sample_offset: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            contour: ContourConfig::default(),
            canny: CannyConfig::default(),
            band: 3,
            corner_angle: 60.0,
            corner_window: 5,
            sample_offset: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub contour: ContourMap,
    pub bicolor: BiColoredEdgeSet,
}

/// Contour map and bi-colored texture edges of a garment photo.
pub fn extract_representation(img: &RasterImage, cfg: &ExtractConfig) -> Result<Extraction> {
    let contour = simplify_contour(&extract_contour(img, &cfg.contour), cfg.contour.min_branch_len);
    let chains = detect_texture_edges(img, &cfg.canny);
    let chains = remove_outermost(&chains, &contour, cfg.band);
    let chains = remove_corners(&chains, cfg.corner_angle, cfg.corner_window)?;
    let bicolor = sample_bicolor(img, &chains, cfg.sample_offset)?;
    Ok(Extraction { contour, bicolor })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub extract: ExtractConfig,
    pub cluster_thresh: f64,
    /// Minimum share of garment pixels in the largest color cluster for the
    /// shading pair to be emitted.
    pub min_pure_fraction: f64,
    pub train_fraction: f64,
    /// Side of the square working canvas.
    pub canonical_size: usize,
    /// Emit the sparse color-point and texture-patch layers.
    pub ablation: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            extract: ExtractConfig::default(),
            cluster_thresh: 0.12,
            min_pure_fraction: 0.5,
            train_fraction: 3900.0 / 4300.0,
            canonical_size: crate::raster::CANONICAL_SIZE,
            ablation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub id: String,
    pub source: RasterImage,
    pub contour: ContourMap,
    pub bicolor: BiColoredEdgeSet,
    pub shading_edges: Option<GrayImage>,
    pub shading: Option<GrayImage>,
    pub source_hash: String,
    /// The contour did not enclose a region.
    pub no_mask: bool,
    pub pure_fraction: Option<f64>,
    pub clamped_pixels: usize,
    pub ablation: Option<AblationLayers>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationLayers {
    pub color_points: Vec<ColorPoint>,
    /// Top-left corner and side of the centered texture crop.
    pub patch_origin: [usize; 2],
    pub patch_size: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Sparse color points and a centered square patch drawn from the garment.
fn ablation_layers(img: &RasterImage, mask: Option<&GrayImage>, seed: u64) -> AblationLayers {
    let (w, h) = img.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inside: Vec<usize> = match mask {
        Some(m) => (0..w * h).filter(|&i| m.data()[i] >= 0.5).collect(),
        None => (0..w * h).collect(),
    };
    let count = rng.random_range(50..=100usize);
    let color_points = (0..count)
        .map(|_| {
            let i = inside[rng.random_range(0..inside.len())];
            ColorPoint {
                x: (i % w) as i32,
                y: (i / w) as i32,
                color: rgb_to_u8(img.pixel(i)),
                size: rng.random_range(1..=9u32),
            }
        })
        .collect();
    let patch_size = rng.random_range(50..=70usize).min(w).min(h);
    AblationLayers {
        color_points,
        patch_origin: [(w - patch_size) / 2, (h - patch_size) / 2],
        patch_size,
    }
}

/// Runs every extraction stage on one photo.
pub fn build_sample(img: &RasterImage, id: &str, source_hash: &str, cfg: &PipelineConfig) -> Result<TrainingSample> {
    let n = cfg.canonical_size;
    let img = if img.dims() == (n, n) { img.clone() } else { resample(img, n, n)? };
    let ex = extract_representation(&img, &cfg.extract).map_err(|e| e.in_stage("extract"))?;
    let mask = match outer_boundary(&ex.contour) {
        Ok(m) => Some(m),
        Err(Error::OpenContour { .. }) => None,
        Err(e) => return Err(e.in_stage("outer boundary")),
    };
    let mut sample = TrainingSample {
        id: id.to_string(),
        source: img.clone(),
        contour: ex.contour,
        bicolor: ex.bicolor,
        shading_edges: None,
        shading: None,
        source_hash: source_hash.to_string(),
        no_mask: mask.is_none(),
        pure_fraction: None,
        clamped_pixels: 0,
        ablation: None,
    };
    if let Some(mask) = &mask {
        let stats = hierarchical_clusters(&img, mask, cfg.cluster_thresh).map_err(|e| e.in_stage("cluster"))?;
        let frac = stats.largest_fraction();
        sample.pure_fraction = Some(frac);
        if frac >= cfg.min_pure_fraction {
            let pair = decompose(&img, mask, &stats).map_err(|e| e.in_stage("decompose"))?;
            sample.shading_edges = Some(
                shading_edges_for_training(&img, mask, &stats, &cfg.extract.canny).map_err(|e| e.in_stage("shading edges"))?,
            );
            sample.clamped_pixels = pair.clamped_pixels;
            sample.shading = Some(pair.shading);
        }
    }
    if cfg.ablation {
        let seed = u64::from_str_radix(&source_hash.get(..16).unwrap_or("0"), 16).unwrap_or(0);
        sample.ablation = Some(ablation_layers(&img, mask.as_ref(), seed));
    }
    Ok(sample)
}

impl TrainingSample {
    /// Checks the sample's type invariants.
    pub fn validate(&self, canonical_size: usize) -> Result<()> {
        let n = (canonical_size, canonical_size);
        if self.contour.dims() != n || self.source.dims() != n || (self.bicolor.width, self.bicolor.height) != n {
            return Err(Error::invalid(format!("{}: rasters are not {canonical_size}x{canonical_size}", self.id)));
        }
        if !self.contour.mask.is_binary() {
            return Err(Error::invalid(format!("{}: contour is not binary", self.id)));
        }
        self.bicolor.validate()?;
        if self.shading.is_some() != self.shading_edges.is_some() {
            return Err(Error::invalid(format!("{}: shading fields must be present together", self.id)));
        }
        if let Some(s) = &self.shading {
            if s.dims() != n || s.data().iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::invalid(format!("{}: shading must be non-negative", self.id)));
            }
        }
        if let Some(e) = &self.shading_edges {
            if e.dims() != n || !e.is_binary() {
                return Err(Error::invalid(format!("{}: shading edges must be binary", self.id)));
            }
        }
        if self.no_mask && self.shading.is_some() {
            return Err(Error::invalid(format!("{}: open-contour sample carries shading", self.id)));
        }
        Ok(())
    }

    fn meta(&self) -> SampleMeta {
        SampleMeta {
            id: self.id.clone(),
            source_hash: self.source_hash.clone(),
            width: self.contour.dims().0,
            height: self.contour.dims().1,
            no_mask: self.no_mask,
            pure_fraction: self.pure_fraction,
            shading: self.shading.is_some(),
            clamped_pixels: self.clamped_pixels,
            edges: self.bicolor.edges.len(),
            edge_points: self.bicolor.point_count(),
            skipped_short: self.bicolor.skipped_short,
            ablation: self.ablation.clone(),
        }
    }

    /// Writes the sample files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.source.save_png(dir.join("source.png"))?;
        self.contour.mask.save_png(dir.join("contour.png"))?;
        std::fs::write(dir.join("bicolor.json"), self.bicolor.to_json()?)?;
        let (color, coverage) = rasterize_bicolor(&self.bicolor)?;
        color.save_png(dir.join("bicolor.png"))?;
        coverage.save_png(dir.join("bicolor_coverage.png"))?;
        if let (Some(e), Some(s)) = (&self.shading_edges, &self.shading) {
            e.save_png(dir.join("shading_edges.png"))?;
            std::fs::write(dir.join("shading.u16.png"), s.to_shading_png_bytes()?)?;
        }
        if let Some(a) = &self.ablation {
            let [x0, y0] = a.patch_origin;
            let patch = RasterImage::from_fn(a.patch_size, a.patch_size, |x, y| self.source.get(x0 + x, y0 + y))?;
            patch.save_png(dir.join("ablation_patch.png"))?;
            std::fs::write(dir.join("ablation_points.json"), serde_json::to_string_pretty(&a.color_points)?)?;
        }
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta())? + "\n")?;
        Ok(())
    }

    /// Reads a sample written by [`TrainingSample::write`].
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: SampleMeta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
        let contour = ContourMap {
            mask: GrayImage::mask_from_png_bytes(&std::fs::read(dir.join("contour.png"))?)?,
            provenance: crate::contour::Provenance::Extracted,
        };
        let bicolor = BiColoredEdgeSet::from_json(&std::fs::read_to_string(dir.join("bicolor.json"))?)?;
        let (shading_edges, shading) = if meta.shading {
            (
                Some(GrayImage::mask_from_png_bytes(&std::fs::read(dir.join("shading_edges.png"))?)?),
                Some(GrayImage::from_shading_png_bytes(&std::fs::read(dir.join("shading.u16.png"))?)?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            id: meta.id,
            source: RasterImage::load(dir.join("source.png"))?,
            contour,
            bicolor,
            shading_edges,
            shading,
            source_hash: meta.source_hash,
            no_mask: meta.no_mask,
            pure_fraction: meta.pure_fraction,
            clamped_pixels: meta.clamped_pixels,
            ablation: meta.ablation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub source_hash: String,
    pub width: usize,
    pub height: usize,
    pub no_mask: bool,
    pub pure_fraction: Option<f64>,
    pub shading: bool,
    pub clamped_pixels: usize,
    pub edges: usize,
    pub edge_points: usize,
    pub skipped_short: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationLayers>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub split: Split,
    pub source_hash: String,
    pub shading: bool,
    pub no_mask: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub inputs: usize,
    pub samples: usize,
    pub train: usize,
    pub val: usize,
    pub with_shading: usize,
    pub no_mask: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub generated_at: u64,
    pub counts: Counts,
    pub samples: Vec<ManifestEntry>,
    pub failures: Vec<Failure>,
}

/// What a corpus run did, beyond the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub manifest: Manifest,
    pub built: usize,
    pub reused: usize,
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn sample_id(file_name: &str, taken: &[String]) -> String {
    let stem = Path::new(file_name).file_stem().and_then(|s| s.to_str()).unwrap_or("sample");
    let clean: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if taken.contains(&clean) {
        file_name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
    } else {
        clean
    }
}

enum Outcome {
    Built(ManifestEntry),
    Reused(ManifestEntry),
    Failed(Failure),
}

fn process_file(path: &Path, file: &str, id: &str, out_dir: &Path, cfg: &PipelineConfig) -> Outcome {
    let fail = |e: Error| Outcome::Failed(Failure {
        file: file.to_string(),
        error: e.to_string(),
    });
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return fail(e.into()),
    };
    let hash = sha256_hex(&bytes);
    let dir = out_dir.join(id);
    if let Ok(raw) = std::fs::read(dir.join("meta.json")) {
        if let Ok(meta) = serde_json::from_slice::<SampleMeta>(&raw) {
            if meta.source_hash == hash && meta.width == cfg.canonical_size {
                return Outcome::Reused(ManifestEntry {
                    id: id.to_string(),
                    file: file.to_string(),
                    split: Split::Train,
                    source_hash: hash,
                    shading: meta.shading,
                    no_mask: meta.no_mask,
                });
            }
        }
    }
    let img = match image::load_from_memory(&bytes) {
        Ok(i) => {
            let rgb = i.to_rgb8();
            match RasterImage::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw()) {
                Ok(r) => r,
                Err(e) => return fail(e),
            }
        }
        Err(e) => return fail(e.into()),
    };
    let sample = match build_sample(&img, id, &hash, cfg).and_then(|s| s.validate(cfg.canonical_size).map(|_| s)) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if let Err(e) = sample.write(&dir) {
        return fail(e);
    }
    Outcome::Built(ManifestEntry {
        id: id.to_string(),
        file: file.to_string(),
        split: Split::Train,
        source_hash: hash,
        shading: sample.shading.is_some(),
        no_mask: sample.no_mask,
    })
}

/// Builds one sample directory per input image plus `manifest.json`.
/// Samples whose source hash matches an existing `meta.json` are reused.
pub fn build_corpus(input_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<CorpusReport> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(input_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    std::fs::create_dir_all(out_dir)?;

    let mut ids: Vec<String> = Vec::new();
    for f in &files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let id = sample_id(name, &ids);
        ids.push(id);
    }
    let outcomes: Vec<Outcome> = files
        .par_iter()
        .zip(&ids)
        .map(|(path, id)| {
            let file = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            log::debug!("processing {file}");
            process_file(path, &file, id, out_dir, cfg)
        })
        .collect();

    let (mut built, mut reused) = (0, 0);
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Built(e) => {
                built += 1;
                samples.push(e);
            }
            Outcome::Reused(e) => {
                reused += 1;
                samples.push(e);
            }
            Outcome::Failed(f) => {
                log::warn!("{}: {}", f.file, f.error);
                failures.push(f);
            }
        }
    }

    // split by the hash of the file name
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| (sha256_hex(samples[i].file.as_bytes()), samples[i].file.clone()));
    let n_train = (samples.len() as f64 * cfg.train_fraction).round() as usize;
    for (rank, &i) in order.iter().enumerate() {
        samples[i].split = if rank < n_train { Split::Train } else { Split::Val };
    }

    let counts = Counts {
        inputs: files.len(),
        samples: samples.len(),
        train: n_train,
        val: samples.len() - n_train,
        with_shading: samples.iter().filter(|s| s.shading).count(),
        no_mask: samples.iter().filter(|s| s.no_mask).count(),
        failed: failures.len(),
    };
    let manifest = Manifest {
        generated_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        counts,
        samples,
        failures,
    };
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(CorpusReport { manifest, built, reused })
}
