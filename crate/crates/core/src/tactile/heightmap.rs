use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TactileError;
use crate::geometry::Vec3;

/// Imaging plane: pixel `(i, j)` is centred at
/// `origin + (i − (w−1)/2)·s·u + (j − (h−1)/2)·s·v`; heights are measured
/// along `u × v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub origin: [f64; 3],
    #[serde(default = "default_u")]
    pub u: [f64; 3],
    #[serde(default = "default_v")]
    pub v: [f64; 3],
    pub width: usize,
    pub height: usize,
    /// m/px
    pub pixel_size: f64,
}

fn default_u() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_v() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

impl PlaneSpec {
    pub fn axes(&self) -> (Vec3, Vec3, Vec3) {
        let u = Vec3::from(self.u).normalize();
        let v = Vec3::from(self.v).normalize();
        (u, v, u.cross(&v).normalize())
    }

    pub fn validate(&self) -> Result<(), TactileError> {
        let (u, v, _) = self.axes();
        if self.width == 0 || self.height == 0 || !(self.pixel_size > 0.0) {
            return Err(TactileError::InvalidSpec("plane needs positive size and pixel_size".into()));
        }
        if u.dot(&v).abs() > 1e-9 || !u.iter().chain(v.iter()).all(|c| c.is_finite()) {
            return Err(TactileError::InvalidSpec("plane axes must be orthogonal".into()));
        }
        Ok(())
    }

    /// In-plane coordinates (m) of a point relative to the origin.
    pub fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        let (u, v, n) = self.axes();
        let d = p - Vec3::from(self.origin);
        (d.dot(&u), d.dot(&v), d.dot(&n))
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        let s = self.pixel_size;
        ((i as f64 - (self.width as f64 - 1.0) / 2.0) * s, (j as f64 - (self.height as f64 - 1.0) / 2.0) * s)
    }

    /// Continuous pixel coordinate of an in-plane position.
    pub fn to_pixel(&self, a: f64, b: f64) -> (f64, f64) {
        (a / self.pixel_size + (self.width as f64 - 1.0) / 2.0, b / self.pixel_size + (self.height as f64 - 1.0) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub spec: PlaneSpec,
    /// Row-major, `height × width`; 0 where the mask is false.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl HeightMap {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = j * self.spec.width + i;
        self.mask[k].then_some(self.values[k])
    }

    pub fn min(&self) -> Option<f64> {
        self.values.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(v, _)| *v).reduce(f64::min)
    }

    pub fn max(&self) -> Option<f64> {
        self.values.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(v, _)| *v).reduce(f64::max)
    }

    /// Writes a 16-bit grayscale PNG and a JSON sidecar with the scale.
    /// Unmasked pixels are stored as 0.
    pub fn write_png(&self, path: &Path, meters_per_unit: f64) -> Result<(), TactileError> {
        let (w, h) = (self.spec.width as u32, self.spec.height as u32);
        let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w, h);
        for (k, px) in img.pixels_mut().enumerate() {
            let q = if self.mask[k] { (self.values[k] / meters_per_unit).round().clamp(1.0, 65535.0) } else { 0.0 };
            *px = image::Luma([q as u16]);
        }
        img.save(path).map_err(|e| TactileError::Image { path: path.to_path_buf(), message: e.to_string() })?;
        let sidecar = serde_json::json!({
            "meters_per_unit": meters_per_unit,
            "width": self.spec.width,
            "height": self.spec.height,
            "pixel_size": self.spec.pixel_size,
            "origin": self.spec.origin,
            "u": self.spec.u,
            "v": self.spec.v,
            "invalid_value": 0,
        });
        let side = path.with_extension("json");
        std::fs::write(&side, serde_json::to_string_pretty(&sidecar).expect("json"))
            .map_err(|e| TactileError::Io { path: side, source: e })
    }
}

/// Topmost height over each pixel centre of the triangles facing the plane
/// normal, by barycentric interpolation.
pub fn rasterize_heightmap(x: &[Vec3], tris: &[[usize; 3]], spec: &PlaneSpec) -> HeightMap {
    let (w, h) = (spec.width, spec.height);
    let mut values = vec![f64::NEG_INFINITY; w * h];
    let (_, _, n) = spec.axes();
    for t in tris {
        let p = t.map(|i| x[i]);
        let tn = (p[1] - p[0]).cross(&(p[2] - p[0]));
        if !(tn.dot(&n) > 1e-12 * tn.norm()) {
            continue;
        }
        let q = p.map(|pt| spec.project(&pt));
        let px = q.map(|(a, b, _)| spec.to_pixel(a, b));
        let imin = px.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ceil().max(0.0) as usize;
        let imax = px.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).floor();
        let jmin = px.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).ceil().max(0.0) as usize;
        let jmax = px.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).floor();
        if imax < 0.0 || jmax < 0.0 {
            continue;
        }
        let imax = (imax as usize).min(w - 1);
        let jmax = (jmax as usize).min(h - 1);
        let (a0, b0) = (q[0].0, q[0].1);
        let (e1a, e1b) = (q[1].0 - a0, q[1].1 - b0);
        let (e2a, e2b) = (q[2].0 - a0, q[2].1 - b0);
        let det = e1a * e2b - e2a * e1b;
        if det == 0.0 {
            continue;
        }
        for j in jmin..=jmax {
            for i in imin..=imax {
                let (ca, cb) = spec.pixel_center(i, j);
                let (da, db) = (ca - a0, cb - b0);
                let l1 = (da * e2b - e2a * db) / det;
                let l2 = (e1a * db - da * e1b) / det;
                let l0 = 1.0 - l1 - l2;
                const TOL: f64 = -1e-12;
                if l0 < TOL || l1 < TOL || l2 < TOL {
                    continue;
                }
                let z = l0 * q[0].2 + l1 * q[1].2 + l2 * q[2].2;
                let k = j * w + i;
                if z > values[k] {
                    values[k] = z;
                }
            }
        }
    }
    let mask: Vec<bool> = values.iter().map(|v| v.is_finite()).collect();
    for v in &mut values {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    HeightMap { spec: spec.clone(), values, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::box_mesh;

    fn spec(n: usize, size: f64) -> PlaneSpec {
        PlaneSpec { origin: [0.0; 3], u: default_u(), v: default_v(), width: n, height: n, pixel_size: size / n as f64 }
    }

    #[test]
    fn flat_gel_is_constant() {
        let m = box_mesh(Vec3::new(-0.005, -0.005, 0.0), Vec3::new(0.005, 0.005, 0.002), [4, 4, 2]).unwrap();
        let hm = rasterize_heightmap(&m.vertices, &m.surface_tris, &spec(31, 0.0099));
        assert!(hm.mask.iter().all(|&m| m));
        assert!(hm.values.iter().all(|v| (v - 0.002).abs() < 1e-15));
    }

    #[test]
    fn outside_footprint_is_masked() {
        let m = box_mesh(Vec3::new(-0.005, -0.005, 0.0), Vec3::new(0.005, 0.005, 0.002), [2, 2, 1]).unwrap();
        let hm = rasterize_heightmap(&m.vertices, &m.surface_tris, &spec(21, 0.02));
        assert!(!hm.mask[0]);
        assert!(hm.get(10, 10).is_some());
    }
}
