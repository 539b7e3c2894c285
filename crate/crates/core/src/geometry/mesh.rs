use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use super::GeometryError;

pub type Vec3 = Vector3<f64>;

/// Tetrahedral mesh of the elastomer in its rest configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub rest_volumes: Vec<f64>,
    /// Inverse of the rest edge matrix `[x1 - x0, x2 - x0, x3 - x0]` per tet.
    pub inverse_rest_matrices: Vec<Matrix3<f64>>,
    /// Boundary triangles, wound so that normals point out of the solid.
    pub surface_tris: Vec<[usize; 3]>,
    pub surface_edges: Vec<[usize; 2]>,
    pub vertex_masses: Vec<f64>,
    pub density: f64,
}

/// Result of building a [`TetMesh`] from raw arrays: the mesh plus the tets
/// whose orientation had to be flipped.
#[derive(Debug, Clone)]
pub struct TetMeshBuild {
    pub mesh: TetMesh,
    pub flipped: Vec<usize>,
}

pub fn edge_matrix(x: &[Vec3], t: &[usize; 4]) -> Matrix3<f64> {
    let x0 = x[t[0]];
    Matrix3::from_columns(&[x[t[1]] - x0, x[t[2]] - x0, x[t[3]] - x0])
}

pub fn signed_volume(x: &[Vec3], t: &[usize; 4]) -> f64 {
    edge_matrix(x, t).determinant() / 6.0
}

fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let (lo, hi) = bounds(points);
    (hi - lo).norm()
}

pub fn bounds(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

impl TetMesh {
    /// Validates indices, repairs inverted tets by swapping two indices and
    /// computes all derived rest-state data. Masses use unit density until
    /// [`TetMesh::with_density`] is called.
    #[allow(clippy::new_ret_no_self)]
    pub fn new(vertices: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Result<TetMeshBuild, GeometryError> {
        let n = vertices.len();
        for (i, t) in tets.iter().enumerate() {
            for &v in t {
                if v >= n {
                    return Err(GeometryError::IndexOutOfRange { element: i, index: v, count: n });
                }
            }
        }
        let scale = bbox_diagonal(&vertices);
        let tiny = 1e-15 * scale.powi(3);
        let mut flipped = Vec::new();
        for (i, t) in tets.iter_mut().enumerate() {
            let vol = signed_volume(&vertices, t);
            if !(vol.abs() > tiny) {
                return Err(GeometryError::ZeroVolume { tet: i });
            }
            if vol < 0.0 {
                t.swap(2, 3);
                flipped.push(i);
            }
        }
        if !flipped.is_empty() {
            log::warn!("repaired {} inverted tets by index swap", flipped.len());
        }

        let rest_volumes: Vec<f64> = tets.iter().map(|t| signed_volume(&vertices, t)).collect();
        let inverse_rest_matrices = tets
            .iter()
            .enumerate()
            .map(|(i, t)| edge_matrix(&vertices, t).try_inverse().ok_or(GeometryError::ZeroVolume { tet: i }))
            .collect::<Result<Vec<_>, _>>()?;
        let surface_tris = extract_surface(&tets);
        let surface_edges = unique_edges(&surface_tris);
        let vertex_masses = lump_masses_raw(n, &tets, &rest_volumes, 1.0);
        Ok(TetMeshBuild {
            mesh: TetMesh {
                vertices,
                tets,
                rest_volumes,
                inverse_rest_matrices,
                surface_tris,
                surface_edges,
                vertex_masses,
                density: 1.0,
            },
            flipped,
        })
    }

    pub fn with_density(mut self, density: f64) -> Result<Self, GeometryError> {
        self.vertex_masses = lump_masses(&self, density)?;
        self.density = density;
        Ok(self)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.rest_volumes.iter().sum()
    }

    /// Vertices that appear on the boundary surface, sorted.
    pub fn surface_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.surface_tris.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        bounds(&self.vertices)
    }
}

/// Lumped (diagonal) mass: each tet gives `density * volume / 4` to each of its corners.
pub fn lump_masses(mesh: &TetMesh, density: f64) -> Result<Vec<f64>, GeometryError> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(GeometryError::InvalidParameter(format!("density must be positive, got {density}")));
    }
    Ok(lump_masses_raw(mesh.vertices.len(), &mesh.tets, &mesh.rest_volumes, density))
}

fn lump_masses_raw(n: usize, tets: &[[usize; 4]], volumes: &[f64], density: f64) -> Vec<f64> {
    let mut m = vec![0.0; n];
    for (t, &vol) in tets.iter().zip(volumes) {
        let share = density * vol / 4.0;
        for &v in t {
            m[v] += share;
        }
    }
    m
}

/// Rotates a triangle so its smallest index comes first, keeping the winding.
pub fn canonical_tri(t: [usize; 3]) -> [usize; 3] {
    let k = (0..3).min_by_key(|&i| t[i]).unwrap();
    [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
}

/// Boundary faces (faces referenced by exactly one tet), outward wound and
/// returned in canonical sorted order so the result does not depend on tet order.
pub fn extract_surface(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut faces: BTreeMap<[usize; 3], (usize, [usize; 3])> = BTreeMap::new();
    for t in tets {
        let [a, b, c, d] = *t;
        for f in [[a, c, b], [a, b, d], [a, d, c], [b, c, d]] {
            let mut key = f;
            key.sort_unstable();
            faces.entry(key).and_modify(|e| e.0 += 1).or_insert((1, f));
        }
    }
    let mut out: Vec<[usize; 3]> =
        faces.into_values().filter(|(count, _)| *count == 1).map(|(_, f)| canonical_tri(f)).collect();
    out.sort_unstable();
    out
}

pub fn unique_edges(tris: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut edges: Vec<[usize; 2]> = tris
        .iter()
        .flat_map(|t| [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]])
        .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Closed triangle surface, e.g. a rigid indenter.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        let scale = bbox_diagonal(&vertices).max(f64::MIN_POSITIVE);
        for (i, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= n {
                    return Err(GeometryError::IndexOutOfRange { element: i, index: v, count: n });
                }
            }
            let area2 = (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]])).norm();
            if !(area2 > 1e-14 * scale * scale) {
                return Err(GeometryError::DegenerateTriangle { triangle: i });
            }
        }
        let edges = unique_edges(&triangles);
        Ok(Self { vertices, triangles, edges })
    }

    /// Every edge must be shared by exactly two triangles.
    pub fn check_watertight(&self) -> Result<(), GeometryError> {
        let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for t in &self.triangles {
            for [a, b] in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
                *count.entry(if a < b { [a, b] } else { [b, a] }).or_default() += 1;
            }
        }
        match count.into_iter().find(|(_, c)| *c != 2) {
            Some((edge, c)) => Err(GeometryError::NotWatertight { edge, count: c }),
            None => Ok(()),
        }
    }

    /// Enclosed volume by the divergence theorem (positive for outward winding).
    pub fn enclosed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Per-vertex share of total mass `density * volume`, split by one third
    /// of the incident triangle areas.
    pub fn area_weighted_masses(&self, density: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.vertices.len()];
        let mut total_area = 0.0;
        for t in &self.triangles {
            let a = 0.5
                * (self.vertices[t[1]] - self.vertices[t[0]])
                    .cross(&(self.vertices[t[2]] - self.vertices[t[0]]))
                    .norm();
            total_area += a;
            for &v in t {
                w[v] += a / 3.0;
            }
        }
        let total_mass = density * self.enclosed_volume().abs();
        w.iter().map(|a| total_mass * a / total_area).collect()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        bounds(&self.vertices)
    }
}
