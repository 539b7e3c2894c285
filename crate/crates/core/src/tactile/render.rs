use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeightMap, TactileError};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Light {
    /// Direction towards the light, in image axes (u, v, normal).
    pub direction: [f64; 3],
    /// RGB in [0, 1].
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Shading {
    pub lights: Vec<Light>,
    pub ambient: [f64; 3],
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
}

impl Default for Shading {
    /// Red, green and blue lights 120° apart at 30° elevation.
    fn default() -> Self {
        let colors = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let el = 30f64.to_radians();
        let lights = colors
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let az = (90.0 + 120.0 * k as f64).to_radians();
                Light { direction: [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()], color: *c }
            })
            .collect();
        Self { lights, ambient: [0.1; 3], diffuse: 0.8, specular: 0.1, shininess: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Shaded directly from a height map, or read from a file.
    RawRender,
    /// Difference-composited onto a reference photograph.
    Composited,
}

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TactileImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
    pub provenance: Provenance,
}

impl TactileImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![[0; 3]; width * height], provenance: Provenance::RawRender }
    }

    pub fn write_png(&self, path: &Path) -> Result<(), TactileError> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        image::save_buffer(path, &raw, self.width as u32, self.height as u32, image::ExtendedColorType::Rgb8)
            .map_err(|e| TactileError::Image { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn read_png(path: &Path) -> Result<Self, TactileError> {
        let img = image::open(path)
            .map_err(|e| TactileError::Image { path: path.to_path_buf(), message: e.to_string() })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            pixels: img.pixels().map(|p| p.0).collect(),
            provenance: Provenance::RawRender,
        })
    }
}

/// Surface normal from central differences of the height map; one-sided at
/// borders and next to masked pixels.
fn normal_at(map: &HeightMap, i: usize, j: usize) -> Vec3 {
    let (w, h) = (map.spec.width, map.spec.height);
    let s = map.spec.pixel_size;
    let here = map.values[j * w + i];
    let sample = |ii: isize, jj: isize| -> Option<f64> {
        if ii < 0 || jj < 0 || ii as usize >= w || jj as usize >= h {
            return None;
        }
        map.get(ii as usize, jj as usize)
    };
    let deriv = |prev: Option<f64>, next: Option<f64>| match (prev, next) {
        (Some(a), Some(b)) => (b - a) / (2.0 * s),
        (Some(a), None) => (here - a) / s,
        (None, Some(b)) => (b - here) / s,
        (None, None) => 0.0,
    };
    let (ii, jj) = (i as isize, j as isize);
    let dx = deriv(sample(ii - 1, jj), sample(ii + 1, jj));
    let dy = deriv(sample(ii, jj - 1), sample(ii, jj + 1));
    Vec3::new(-dx, -dy, 1.0).normalize()
}

/// Lambertian plus Blinn-Phong shading of the height map seen from above.
/// Masked pixels get the ambient colour.
pub fn shade_pseudo_image(map: &HeightMap, shading: &Shading) -> Result<TactileImage, TactileError> {
    if shading.lights.is_empty() {
        return Err(TactileError::InvalidSpec("at least one light is required".into()));
    }
    let lights: Vec<(Vec3, Vec3, [f64; 3])> = shading
        .lights
        .iter()
        .map(|l| {
            let d = Vec3::from(l.direction).normalize();
            (d, (d + Vec3::z()).normalize(), l.color)
        })
        .collect();
    let (w, h) = (map.spec.width, map.spec.height);
    let mut img = TactileImage::new(w, h);
    for j in 0..h {
        for i in 0..w {
            let mut c = shading.ambient;
            if map.mask[j * w + i] {
                let n = normal_at(map, i, j);
                for (d, half, col) in &lights {
                    let lambert = n.dot(d).max(0.0);
                    let spec = if lambert > 0.0 { n.dot(half).max(0.0).powf(shading.shininess) } else { 0.0 };
                    for k in 0..3 {
                        c[k] += col[k] * (shading.diffuse * lambert + shading.specular * spec);
                    }
                }
            }
            img.pixels[j * w + i] = c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(img)
}

/// `clamp(real_ref + sim − sim_ref)` per channel.
pub fn composite_with_reference(
    sim: &TactileImage,
    sim_ref: &TactileImage,
    real_ref: &TactileImage,
) -> Result<TactileImage, TactileError> {
    for other in [sim_ref, real_ref] {
        if (other.width, other.height) != (sim.width, sim.height) {
            return Err(TactileError::DimensionMismatch {
                expected: (sim.width, sim.height),
                found: (other.width, other.height),
            });
        }
    }
    let pixels = sim
        .pixels
        .iter()
        .zip(&sim_ref.pixels)
        .zip(&real_ref.pixels)
        .map(|((s, r), q)| std::array::from_fn(|k| (q[k] as i16 + s[k] as i16 - r[k] as i16).clamp(0, 255) as u8))
        .collect();
    Ok(TactileImage { width: sim.width, height: sim.height, pixels, provenance: Provenance::Composited })
}
