//! Garment design toolkit built around bi-colored texture edges.
//!
//! A garment is described by a binary contour map plus a set of texture
//! edges annotated with the colors on both of their sides. This crate
//! extracts that representation from photos, fills it back into a colored
//! garment with a harmonic reference synthesizer, and adds shading through an
//! intrinsic reflectance x shading decomposition.

pub mod api;
pub mod bicolor;
pub mod config;
pub mod contour;
pub mod document;
pub mod edges;
pub mod error;
pub mod http;
pub mod losses;
pub mod morph;
pub mod palette;
pub mod patchmatch;
pub mod pipeline;
pub mod raster;
pub mod shading;
pub mod synthesizer;

pub use error::{Error, Result};
