use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Faces with area below this are rejected rather than skipped.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh. `vertices` are the geometry parameters optimized in
/// the geometry phase; UVs are per vertex (seams are represented by
/// duplicated vertices).
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub uvs: Option<Vec<[f64; 2]>>,
    /// Optional per-vertex linear RGB, baked into the initial diffuse texture.
    pub colors: Option<Vec<Vec3>>,
}

impl TriMesh {
    /// Builds a mesh and checks index validity and edge manifoldness.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriMesh { vertices, faces, uvs: None, colors: None };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_uvs(mut self, uvs: Vec<[f64; 2]>) -> Result<Self> {
        if uvs.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                what: "uv count",
                expected: self.vertices.len().to_string(),
                got: uvs.len().to_string(),
            });
        }
        self.uvs = Some(uvs);
        self.check_uvs()?;
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                what: "vertex color count",
                expected: self.vertices.len().to_string(),
                got: colors.len().to_string(),
            });
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= n {
                    return Err(Error::FaceIndexOutOfRange { face: fi, index: idx, vertex_count: n });
                }
            }
            if f[0] == f[1] || f[0] == f[2] {
                return Err(Error::RepeatedFaceVertex { face: fi, vertex: f[0] });
            }
            if f[1] == f[2] {
                return Err(Error::RepeatedFaceVertex { face: fi, vertex: f[1] });
            }
        }
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *counts.entry(edge_key(f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((&(a, b), &count)) = counts.iter().filter(|(_, &c)| c > 2).min_by_key(|(k, _)| **k) {
            return Err(Error::NonManifoldEdge { a, b, count });
        }
        Ok(())
    }

    /// UVs must exist and lie in [0,1]² before the reflectance phase.
    pub fn check_uvs(&self) -> Result<()> {
        let uvs = self.uvs.as_ref().ok_or(Error::MissingUvs)?;
        for (i, uv) in uvs.iter().enumerate() {
            if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                return Err(Error::UvOutOfRange { vertex: i, u: uv[0], v: uv[1] });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0] as usize], self.vertices[f[1] as usize], self.vertices[f[2] as usize]]
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for &v in &self.vertices {
            lo = lo.min_elem(v);
            hi = hi.max_elem(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Center and radius of the bounding box's circumscribed sphere.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let (lo, hi) = self.bounding_box();
        ((lo + hi) * 0.5, (hi - lo).norm() * 0.5)
    }

    /// Order-sensitive digest of the vertex positions (bit patterns).
    pub fn position_checksum(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in &self.vertices {
            for c in v.to_array() {
                h = crate::math::hash_combine(h, c.to_bits());
            }
        }
        h
    }
}

#[inline]
pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Connectivity derived from the face list. Topology is fixed during
/// optimization, so this is built once per mesh.
#[derive(Debug, Clone)]
pub struct Topology {
    pub vertex_count: usize,
    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<[u32; 2]>,
    /// Unordered face pairs sharing an edge, each listed once, sorted.
    pub face_pairs: Vec<[u32; 2]>,
    /// Sorted neighbour lists.
    pub neighbors: Vec<Vec<u32>>,
}

impl Topology {
    pub fn build(mesh: &TriMesh) -> Self {
        let mut half: Vec<(u32, u32, u32)> = Vec::with_capacity(mesh.faces.len() * 3);
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = edge_key(f[k], f[(k + 1) % 3]);
                half.push((a, b, fi as u32));
            }
        }
        half.sort_unstable();

        let mut edges = Vec::new();
        let mut face_pairs = Vec::new();
        let mut i = 0;
        while i < half.len() {
            let (a, b, _) = half[i];
            let mut j = i;
            while j < half.len() && half[j].0 == a && half[j].1 == b {
                j += 1;
            }
            edges.push([a, b]);
            if j - i == 2 && half[i].2 != half[i + 1].2 {
                face_pairs.push([half[i].2, half[i + 1].2]);
            }
            i = j;
        }
        face_pairs.sort_unstable();
        face_pairs.dedup();

        let mut neighbors = vec![Vec::new(); mesh.vertices.len()];
        for &[a, b] in &edges {
            neighbors[a as usize].push(b);
            neighbors[b as usize].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Topology { vertex_count: mesh.vertices.len(), edges, face_pairs, neighbors }
    }
}

/// Unit face normals from the winding-order cross product.
pub fn face_normals(mesh: &TriMesh) -> Result<Vec<Vec3>> {
    (0..mesh.faces.len())
        .map(|fi| {
            let [a, b, c] = mesh.triangle(fi);
            let n = (b - a).cross(c - a);
            let area = 0.5 * n.norm();
            if area < DEGENERATE_AREA {
                return Err(Error::DegenerateFace { face: fi, area });
            }
            Ok(n / (2.0 * area))
        })
        .collect()
}

/// Maps every vertex to a slot shared by all vertices at bit-identical
/// positions. Returns the per-vertex slot and the number of slots; slots are
/// numbered in order of first appearance.
pub fn weld_slots(positions: &[Vec3]) -> (Vec<usize>, usize) {
    let mut weld: HashMap<[u64; 3], usize> = HashMap::new();
    let mut slot = Vec::with_capacity(positions.len());
    for v in positions {
        // `+ 0.0` folds −0.0 into +0.0 so mirrored zeros weld.
        let key = [(v.x + 0.0).to_bits(), (v.y + 0.0).to_bits(), (v.z + 0.0).to_bits()];
        let next = weld.len();
        slot.push(*weld.entry(key).or_insert(next));
    }
    let n = weld.len();
    (slot, n)
}

/// A mesh with coincident vertices merged, plus the map back to the
/// original vertex indices. UVs and colours are dropped.
#[derive(Debug, Clone)]
pub struct WeldedMesh {
    pub mesh: TriMesh,
    /// Welded index of each original vertex.
    pub slot: Vec<usize>,
}

impl WeldedMesh {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        let (slot, n) = weld_slots(&mesh.vertices);
        let mut vertices = vec![Vec3::ZERO; n];
        for (i, &s) in slot.iter().enumerate() {
            vertices[s] = mesh.vertices[i];
        }
        let faces = mesh.faces.iter().map(|f| f.map(|i| slot[i as usize] as u32)).collect();
        Ok(WeldedMesh { mesh: TriMesh::new(vertices, faces)?, slot })
    }

    /// Copies welded positions back onto `original`, keeping its UVs.
    pub fn unweld(&self, positions: &[Vec3], original: &TriMesh) -> TriMesh {
        let mut out = original.clone();
        for (v, &s) in out.vertices.iter_mut().zip(&self.slot) {
            *v = positions[s];
        }
        out
    }
}

/// Area-weighted vertex normals. Vertices sharing a position (UV seams) are
/// welded so that both copies receive the same normal.
pub fn vertex_normals(mesh: &TriMesh) -> Vec<Vec3> {
    let (slot, n) = weld_slots(&mesh.vertices);
    let mut acc = vec![Vec3::ZERO; n];
    for f in &mesh.faces {
        let [a, b, c] = [0, 1, 2].map(|k| mesh.vertices[f[k] as usize]);
        let n = (b - a).cross(c - a);
        for &vi in f {
            acc[slot[vi as usize]] += n;
        }
    }
    slot.iter().map(|&s| acc[s].normalized()).collect()
}
