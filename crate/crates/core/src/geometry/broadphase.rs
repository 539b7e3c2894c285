//! Candidate generation for point-triangle and edge-edge contact pairs using a
//! bounding volume hierarchy over (optionally swept) axis-aligned boxes.

use super::mesh::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&o.min), max: self.max.sup(&o.max) }
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb { min: self.min.add_scalar(-r), max: self.max.add_scalar(r) }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= o.max[k] && o.min[k] <= self.max[k])
    }

    fn center(&self, axis: usize) -> f64 {
        0.5 * (self.min[axis] + self.max[axis])
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, item: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Median-split BVH. Rebuilt from scratch whenever positions change.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl Bvh {
    pub fn build(boxes: &[Aabb]) -> Self {
        let mut items: Vec<usize> = (0..boxes.len()).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len());
        let root = (!items.is_empty()).then(|| Self::build_rec(boxes, &mut items, &mut nodes));
        Self { nodes, root }
    }

    fn build_rec(boxes: &[Aabb], items: &mut [usize], nodes: &mut Vec<Node>) -> usize {
        if items.len() == 1 {
            nodes.push(Node::Leaf { bounds: boxes[items[0]], item: items[0] });
            return nodes.len() - 1;
        }
        let bounds = items.iter().fold(Aabb::empty(), |b, &i| b.merge(&boxes[i]));
        let ext = bounds.max - bounds.min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |&a, &b| {
            boxes[a].center(axis).total_cmp(&boxes[b].center(axis)).then(a.cmp(&b))
        });
        let (l, r) = items.split_at_mut(mid);
        let left = Self::build_rec(boxes, l, nodes);
        let right = Self::build_rec(boxes, r, nodes);
        nodes.push(Node::Inner { bounds, left, right });
        nodes.len() - 1
    }

    /// Calls `hit` for every stored box overlapping `query`.
    pub fn query(&self, query: &Aabb, mut hit: impl FnMut(usize)) {
        let Some(root) = self.root else { return };
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds().overlaps(query) {
                continue;
            }
            match node {
                Node::Leaf { item, .. } => hit(*item),
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }
}

/// Surface primitives participating in contact, indexed into one global
/// position array. `body[v]` groups vertices; pairs inside a body listed in
/// `rigid_bodies` are never generated.
#[derive(Debug, Clone, Default)]
pub struct CollisionMesh {
    pub points: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    pub faces: Vec<[usize; 3]>,
    pub body: Vec<u32>,
    pub rigid_bodies: Vec<u32>,
}

impl CollisionMesh {
    /// Builds a collision mesh from triangle soups given in global indices.
    pub fn from_surfaces(num_vertices: usize, surfaces: &[(u32, bool, &[[usize; 3]])]) -> Self {
        let mut faces = Vec::new();
        let mut body = vec![u32::MAX; num_vertices];
        let mut rigid_bodies = Vec::new();
        for (id, rigid, tris) in surfaces {
            if *rigid {
                rigid_bodies.push(*id);
            }
            for t in tris.iter() {
                for &v in t {
                    body[v] = *id;
                }
                faces.push(*t);
            }
        }
        let edges = super::mesh::unique_edges(&faces);
        let mut points: Vec<usize> = faces.iter().flatten().copied().collect();
        points.sort_unstable();
        points.dedup();
        Self { points, edges, faces, body, rigid_bodies }
    }

    fn same_rigid(&self, a: usize, b: usize) -> bool {
        self.body[a] == self.body[b] && self.rigid_bodies.contains(&self.body[a])
    }
}

/// Candidate contact pairs. `pt` holds (vertex, face index); `ee` holds pairs
/// of edge indices with the first smaller. Both are sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidates {
    pub pt: Vec<(usize, usize)>,
    pub ee: Vec<(usize, usize)>,
}

impl Candidates {
    pub fn is_empty(&self) -> bool {
        self.pt.is_empty() && self.ee.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pt.len() + self.ee.len()
    }
}

/// Box of one vertex over the motion `x0 -> x1`, inflated by half the margin.
pub fn vertex_box(x0: &[Vec3], x1: Option<&[Vec3]>, v: usize, half_margin: f64) -> Aabb {
    let mut b = Aabb { min: x0[v], max: x0[v] };
    if let Some(x1) = x1 {
        b.grow(&x1[v]);
    }
    b.inflate(half_margin)
}

/// Every point-triangle and edge-edge pair (not sharing a vertex, not within
/// one rigid body) whose swept boxes come within `margin` of each other on all
/// three axes. Each primitive box is inflated by `margin / 2`.
pub fn broadphase_pairs(mesh: &CollisionMesh, x0: &[Vec3], x1: Option<&[Vec3]>, margin: f64) -> Candidates {
    let h = 0.5 * margin;
    let vbox = |v: usize| vertex_box(x0, x1, v, h);
    let face_boxes: Vec<Aabb> = mesh.faces.iter().map(|f| vbox(f[0]).merge(&vbox(f[1])).merge(&vbox(f[2]))).collect();
    let edge_boxes: Vec<Aabb> = mesh.edges.iter().map(|e| vbox(e[0]).merge(&vbox(e[1]))).collect();

    let face_bvh = Bvh::build(&face_boxes);
    let mut pt = Vec::new();
    for &p in &mesh.points {
        face_bvh.query(&vbox(p), |fi| {
            let f = mesh.faces[fi];
            if !f.contains(&p) && !mesh.same_rigid(p, f[0]) {
                pt.push((p, fi));
            }
        });
    }
    let edge_bvh = Bvh::build(&edge_boxes);
    let mut ee = Vec::new();
    for (ei, e) in mesh.edges.iter().enumerate() {
        edge_bvh.query(&edge_boxes[ei], |ej| {
            if ej <= ei {
                return;
            }
            let o = mesh.edges[ej];
            if e[0] == o[0] || e[0] == o[1] || e[1] == o[0] || e[1] == o[1] || mesh.same_rigid(e[0], o[0]) {
                return;
            }
            ee.push((ei, ej));
        });
    }
    pt.sort_unstable();
    ee.sort_unstable();
    Candidates { pt, ee }
}
