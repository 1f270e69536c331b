//! The design document exchanged between the editor, the CLI and the HTTP
//! service: contour, texture and shading layers on one canvas.

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::bicolor::{BiColoredEdgeSet, CanvasSize};
use crate::contour::ContourMap;
use crate::error::{Error, Result};
use crate::raster::{rgb_from_u8, GrayImage, RasterImage};

pub fn encode_b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_b64(s: &str) -> Result<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(s.trim())
        .map_err(|e| Error::invalid(format!("base64: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureMode {
    Pure,
    Sparse,
    Dense,
}

/// A square dab of constant color, used by the pure-color mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorPoint {
    pub x: i32,
    pub y: i32,
    pub color: [u8; 3],
    /// Side length of the dab in pixels.
    #[serde(default = "one")]
    pub size: u32,
}

fn one() -> u32 {
    1
}

/// Rasters travel as base64-encoded PNGs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDocument {
    pub canvas: CanvasSize,
    /// Binary contour map, 8-bit grayscale PNG.
    pub contour_layer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture_layer: Option<BiColoredEdgeSet>,
    /// Binary shading-edge map, 8-bit grayscale PNG.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shading_layer: Option<String>,
    pub mode: TextureMode,
    /// RGB PNG of the texture patch for dense mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_patch: Option<String>,
    #[serde(default)]
    pub palette: Vec<[u8; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub color_points: Vec<ColorPoint>,
    /// Seed for the dense-mode texture expansion.
    #[serde(default)]
    pub seed: u64,
}

impl DesignDocument {
    pub fn new(contour: &GrayImage, mode: TextureMode) -> Result<Self> {
        let (w, h) = contour.dims();
        Ok(Self {
            canvas: CanvasSize { w, h },
            contour_layer: encode_b64(&contour.to_png_bytes()?),
            texture_layer: None,
            shading_layer: None,
            mode,
            dense_patch: None,
            palette: Vec::new(),
            color_points: Vec::new(),
            seed: 0,
        })
    }

    pub fn with_texture(mut self, set: BiColoredEdgeSet) -> Self {
        self.palette = set.palette();
        self.texture_layer = Some(set);
        self
    }

    pub fn with_shading(mut self, edges: &GrayImage) -> Result<Self> {
        self.shading_layer = Some(encode_b64(&edges.to_png_bytes()?));
        Ok(self)
    }

    pub fn with_patch(mut self, patch: &RasterImage) -> Result<Self> {
        self.dense_patch = Some(encode_b64(&patch.to_png_bytes()?));
        Ok(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    fn check_dims(&self, field: &str, dims: (usize, usize)) -> Result<()> {
        if dims != (self.canvas.w, self.canvas.h) {
            return Err(Error::invalid(format!(
                "{field}: {}x{} does not match canvas {}x{}",
                dims.0, dims.1, self.canvas.w, self.canvas.h
            )));
        }
        Ok(())
    }

    pub fn contour(&self) -> Result<ContourMap> {
        let g = GrayImage::mask_from_png_bytes(&decode_b64(&self.contour_layer)?)?;
        self.check_dims("contour_layer", g.dims())?;
        Ok(ContourMap::user_drawn(g))
    }

    /// The shading-edge layer, or an empty map when absent.
    pub fn shading_edges(&self) -> Result<GrayImage> {
        match &self.shading_layer {
            None => GrayImage::new(self.canvas.w, self.canvas.h),
            Some(s) => {
                let g = GrayImage::mask_from_png_bytes(&decode_b64(s)?)?;
                self.check_dims("shading_layer", g.dims())?;
                Ok(g)
            }
        }
    }

    pub fn texture(&self) -> Result<BiColoredEdgeSet> {
        match &self.texture_layer {
            None => Ok(BiColoredEdgeSet::empty(self.canvas.w, self.canvas.h)),
            Some(t) => {
                self.check_dims("texture_layer", (t.width, t.height))?;
                Ok(t.clone())
            }
        }
    }

    pub fn patch(&self) -> Result<Option<RasterImage>> {
        self.dense_patch
            .as_ref()
            .map(|s| RasterImage::from_png_bytes(&decode_b64(s)?))
            .transpose()
    }

    /// Decodes every layer and checks the cross-layer invariants.
    pub fn validate(&self) -> Result<()> {
        if self.canvas.w == 0 || self.canvas.h == 0 {
            return Err(Error::invalid("canvas: must be at least 1x1"));
        }
        self.contour()?;
        self.shading_edges()?;
        self.texture()?;
        if self.mode == TextureMode::Dense && self.patch()?.is_none() {
            return Err(Error::invalid("dense_patch: required in dense mode"));
        }
        for (i, p) in self.color_points.iter().enumerate() {
            if p.x < 0 || p.y < 0 || p.x as usize >= self.canvas.w || p.y as usize >= self.canvas.h {
                return Err(Error::invalid(format!("color_points[{i}]: outside the canvas")));
            }
            if p.size == 0 {
                return Err(Error::invalid(format!("color_points[{i}].size: must be at least 1")));
            }
        }
        Ok(())
    }

    /// Every color in use: texture samples and color points.
    pub fn colors_in_use(&self) -> Vec<[u8; 3]> {
        let mut out = self.texture_layer.as_ref().map(|t| t.palette()).unwrap_or_default();
        for p in &self.color_points {
            if !out.contains(&p.color) {
                out.push(p.color);
            }
        }
        out
    }

    /// Replaces `from` by `to` in the texture layer, the color points and the
    /// palette. Returns the number of replaced samples and points.
    pub fn recolor(&mut self, from: [u8; 3], to: [u8; 3]) -> Result<usize> {
        if !self.colors_in_use().contains(&from) {
            return Err(Error::UnknownColor(from[0], from[1], from[2]));
        }
        let mut n = 0;
        if let Some(t) = &self.texture_layer {
            let (set, k) = crate::palette::recolor_edges(t, rgb_from_u8(from), rgb_from_u8(to), 0.5 / 255.0)?;
            self.texture_layer = Some(set);
            n += k;
        }
        for p in &mut self.color_points {
            if p.color == from {
                p.color = to;
                n += 1;
            }
        }
        self.palette = self.colors_in_use();
        Ok(n)
    }
}
