//! Tactile observations of the deformed gel: height maps, markers, shaded
//! pseudo-images and image metrics.

mod heightmap;
mod markers;
mod metrics;
mod render;

use std::path::PathBuf;

use thiserror::Error;

pub use heightmap::{rasterize_heightmap, HeightMap, PlaneSpec};
pub use markers::{
    embed_markers, marker_displacements, marker_positions, write_marker_csv, Marker, MarkerFrame, MarkerGrid, MarkerSet,
};
pub use metrics::{image_metrics, luma, ImageMetrics, PSNR_CAP_DB};
pub use render::{composite_with_reference, shade_pseudo_image, Light, Provenance, Shading, TactileImage};

#[derive(Debug, Error)]
pub enum TactileError {
    #[error("invalid tactile setup: {0}")]
    InvalidSpec(String),
    #[error("marker at ({x:e}, {y:e}) m does not lie over the sensing surface")]
    MarkerOffSurface { x: f64, y: f64 },
    #[error("image size {found:?} does not match {expected:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("csv: {0}")]
    Csv(String),
}

/// Area (m²) of covered pixels pushed below `rest_height` by more than
/// `threshold`.
pub fn contact_area(map: &HeightMap, rest_height: f64, threshold: f64) -> f64 {
    let px = map.spec.pixel_size * map.spec.pixel_size;
    map.values.iter().zip(&map.mask).filter(|(v, &m)| m && rest_height - **v > threshold).count() as f64 * px
}
