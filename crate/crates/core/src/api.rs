//! Request handlers behind the HTTP service. Each handler is a pure
//! function from a JSON body to a JSON response, so the CLI, the server and
//! the tests share one code path.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bicolor::{remove_corners, sample_bicolor, BiColoredEdgeSet};
use crate::config::Defaults;
use crate::document::{decode_b64, encode_b64, DesignDocument, TextureMode};
use crate::edges::detect_texture_edges;
use crate::error::Error;
use crate::palette::kmeans_clusters;
use crate::patchmatch::expand_texture;
use crate::pipeline::build_sample;
use crate::raster::{rgb_from_u8, rgb_to_u8, GrayImage, RasterImage};
use crate::synthesizer::full_pipeline;

/// Largest accepted output side for texture expansion.
pub const MAX_EXPAND_SIDE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    /// JSON error body: `{"error": {...}}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e.root() {
            Error::OpenContour { .. } => ApiError::new(422, "open_contour", message),
            Error::Image(_) => ApiError::new(415, "unsupported_image", message),
            Error::UnknownColor(..) | Error::UnknownCluster(_) => ApiError::new(404, "not_found", message),
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => ApiError::new(400, "invalid", message),
            Error::Io(_) => ApiError::new(500, "internal", message),
            _ => ApiError::new(422, "unprocessable", message),
        }
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;

/// Parses a request body, reporting the JSON path of the offending field.
pub fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.inner().to_string();
        if let Some(name) = inner.strip_prefix("missing field `").and_then(|s| s.split('`').next()) {
            path = if path == "." { name.to_string() } else { format!("{path}.{name}") };
        }
        ApiError::new(400, "schema", format!("{path}: {inner}")).with_field(path)
    })
}

fn to_body<T: Serialize>(v: &T) -> ApiResult<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| ApiError::new(500, "internal", e.to_string()))
}

fn png_b64(bytes: crate::Result<Vec<u8>>) -> ApiResult<String> {
    Ok(encode_b64(&bytes?))
}

/// Decodes a base64 image field; any failure is an unsupported payload.
fn decode_image(field: &str, b64: &str) -> ApiResult<RasterImage> {
    decode_b64(b64)
        .and_then(|bytes| RasterImage::from_png_bytes(&bytes))
        .map_err(|e| ApiError::new(415, "unsupported_image", format!("{field}: {e}")).with_field(field))
}

fn decode_mask(field: &str, b64: &str) -> ApiResult<GrayImage> {
    decode_b64(b64)
        .and_then(|bytes| GrayImage::mask_from_png_bytes(&bytes))
        .map_err(|e| ApiError::new(415, "unsupported_image", format!("{field}: {e}")).with_field(field))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

pub fn handle_health() -> Health {
    Health { status: "ok".into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeResponse {
    /// Shaded garment, RGB PNG.
    pub image: String,
    /// 8-bit PNG of the rendered shading map.
    pub shading: String,
    /// Unshaded synthesis, RGB PNG.
    pub base: String,
    pub warnings: Vec<String>,
}

pub fn synthesize(doc: &DesignDocument, cfg: &Defaults) -> ApiResult<SynthesizeResponse> {
    doc.validate().map_err(|e| {
        let msg = e.to_string();
        let field = msg.trim_start_matches("invalid argument: ").split(':').next().unwrap_or("").to_string();
        ApiError::from(e).with_field(field)
    })?;
    let out = full_pipeline(doc, &cfg.synth, &cfg.shade, &cfg.patchmatch)?;
    Ok(SynthesizeResponse {
        image: png_b64(out.image.to_png_bytes())?,
        shading: png_b64(out.shading.to_png_bytes())?,
        base: png_b64(out.base.to_png_bytes())?,
        warnings: out.warnings,
    })
}

pub fn handle_synthesize(body: &[u8], cfg: &Defaults) -> ApiResult<Vec<u8>> {
    let doc: DesignDocument = parse(body)?;
    to_body(&synthesize(&doc, cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractRequest {
    /// PNG or JPEG photo.
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractResponse {
    /// Sparse-mode document holding the extracted layers.
    pub document: DesignDocument,
    /// Rasterized bi-colored edges, RGB PNG.
    pub bicolor: String,
    pub coverage: String,
    /// The contour did not enclose a region; no shading layer.
    pub no_mask: bool,
}

pub fn extract(img: &RasterImage, cfg: &Defaults) -> ApiResult<ExtractResponse> {
    let sample = build_sample(img, "upload", "", &cfg.pipeline)?;
    let (bicolor, coverage) = crate::bicolor::rasterize_bicolor(&sample.bicolor)?;
    let mut document = DesignDocument::new(&sample.contour.mask, TextureMode::Sparse)?.with_texture(sample.bicolor);
    if let Some(e) = &sample.shading_edges {
        document = document.with_shading(e)?;
    }
    Ok(ExtractResponse {
        document,
        bicolor: png_b64(bicolor.to_png_bytes())?,
        coverage: png_b64(coverage.to_png_bytes())?,
        no_mask: sample.no_mask,
    })
}

pub fn handle_extract(body: &[u8], cfg: &Defaults) -> ApiResult<Vec<u8>> {
    let req: ExtractRequest = parse(body)?;
    let img = decode_image("image", &req.image)?;
    to_body(&extract(&img, cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandRequest {
    pub patch: String,
    pub w: usize,
    pub h: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandResponse {
    pub image: String,
    pub texture_layer: BiColoredEdgeSet,
}

pub fn expand(patch: &RasterImage, w: usize, h: usize, seed: u64, cfg: &Defaults) -> ApiResult<ExpandResponse> {
    if w > MAX_EXPAND_SIDE || h > MAX_EXPAND_SIDE {
        return Err(ApiError::new(400, "invalid", format!("w, h: at most {MAX_EXPAND_SIDE}")).with_field("w"));
    }
    let out = expand_texture(patch, w, h, &cfg.patchmatch, seed)?;
    let ex = &cfg.pipeline.extract;
    let chains = remove_corners(&detect_texture_edges(&out, &ex.canny), ex.corner_angle, ex.corner_window)?;
    let texture_layer = sample_bicolor(&out, &chains, ex.sample_offset)?;
    Ok(ExpandResponse {
        image: png_b64(out.to_png_bytes())?,
        texture_layer,
    })
}

pub fn handle_expand(body: &[u8], cfg: &Defaults) -> ApiResult<Vec<u8>> {
    let req: ExpandRequest = parse(body)?;
    let patch = decode_image("patch", &req.patch)?;
    to_body(&expand(&patch, req.w, req.h, req.seed, cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorMapping {
    pub from: [u8; 3],
    pub to: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterMapping {
    pub cluster: usize,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RecolorRequest {
    /// Color swaps in the texture layer and color points, applied in order.
    Document {
        document: DesignDocument,
        mapping: Vec<ColorMapping>,
    },
    /// k-means clusters of an image (within an optional mask) remapped to
    /// new mean colors.
    Image {
        image: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mask: Option<String>,
        k: usize,
        #[serde(default)]
        seed: u64,
        mapping: Vec<ClusterMapping>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSummary {
    pub index: usize,
    pub mean: [u8; 3],
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RecolorResponse {
    Document { document: DesignDocument, replaced: usize },
    Image { image: String, clusters: Vec<ClusterSummary> },
}

pub fn recolor(req: RecolorRequest, cfg: &Defaults) -> ApiResult<RecolorResponse> {
    match req {
        RecolorRequest::Document { mut document, mapping } => {
            document.validate()?;
            let in_use = document.colors_in_use();
            for (i, m) in mapping.iter().enumerate() {
                if !in_use.contains(&m.from) {
                    return Err(ApiError::from(Error::UnknownColor(m.from[0], m.from[1], m.from[2]))
                        .with_field(format!("mapping[{i}].from")));
                }
            }
            let mut replaced = 0;
            for m in &mapping {
                if m.from != m.to && document.colors_in_use().contains(&m.from) {
                    replaced += document.recolor(m.from, m.to)?;
                }
            }
            Ok(RecolorResponse::Document { document, replaced })
        }
        RecolorRequest::Image {
            image,
            mask,
            k,
            seed,
            mapping,
        } => {
            let img = decode_image("image", &image)?;
            let mask = match mask {
                Some(m) => decode_mask("mask", &m)?,
                None => GrayImage::filled(img.width(), img.height(), 1.0)?,
            };
            let stats = kmeans_clusters(&img, &mask, k, seed, &cfg.palette)?;
            for (i, m) in mapping.iter().enumerate() {
                if m.cluster >= stats.k() {
                    return Err(ApiError::from(Error::UnknownCluster(m.cluster)).with_field(format!("mapping[{i}].cluster")));
                }
            }
            let pairs: Vec<(usize, _)> = mapping.iter().map(|m| (m.cluster, rgb_from_u8(m.color))).collect();
            let out = crate::palette::recolor_clusters(&img, &stats, &pairs)?;
            let clusters = stats
                .clusters
                .iter()
                .enumerate()
                .map(|(index, c)| ClusterSummary {
                    index,
                    mean: rgb_to_u8(c.mean),
                    count: c.count,
                })
                .collect();
            Ok(RecolorResponse::Image {
                image: png_b64(out.to_png_bytes())?,
                clusters,
            })
        }
    }
}

pub fn handle_recolor(body: &[u8], cfg: &Defaults) -> ApiResult<Vec<u8>> {
    let req: RecolorRequest = parse(body)?;
    to_body(&recolor(req, cfg)?)
}
