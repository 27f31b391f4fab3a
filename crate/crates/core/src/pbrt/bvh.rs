//! Bounding volume hierarchy over triangles with Möller–Trumbore tests.

use crate::error::{Error, Result};
use crate::geom::TriMesh;
use crate::math::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    const EMPTY: Aabb = Aabb { lo: Vec3::splat(f64::INFINITY), hi: Vec3::splat(f64::NEG_INFINITY) };

    fn grow(&mut self, p: Vec3) {
        self.lo = self.lo.min_elem(p);
        self.hi = self.hi.max_elem(p);
    }

    /// Slab test; returns the entry distance when the box overlaps
    /// `[0, t_max]`.
    #[inline]
    fn hit(&self, o: Vec3, inv_d: Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.lo[k] - o[k]) * inv_d[k];
            let b = (self.hi[k] - o[k]) * inv_d[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            // NaN (0·∞ on a slab boundary) leaves the interval unchanged.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
        }
        // Widen slightly so rays grazing a face are not lost to rounding.
        (t0 <= t1 * (1.0 + 1e-12) + 1e-12).then_some(t0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle slot. Interior: index of the right child (the
    /// left child immediately follows the node).
    offset: u32,
    /// Leaf triangle count; 0 marks an interior node.
    count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// Barycentric weights of vertices 1 and 2.
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<[Vec3; 3]>,
}

/// Möller–Trumbore ray/triangle test returning `(t, b1, b2)` for hits with
/// `t_min < t < t_max`.
#[inline]
pub fn intersect_triangle(o: Vec3, d: Vec3, tri: &[Vec3; 3], t_min: f64, t_max: f64) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let b1 = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&b1) {
        return None;
    }
    let q = s.cross(e1);
    let b2 = d.dot(q) * inv;
    if b2 < 0.0 || b1 + b2 > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > t_min && t < t_max).then_some((t, b1, b2))
}

/// Nearest hit by testing every triangle; ties go to the lowest index.
pub fn brute_force_intersect(mesh: &TriMesh, o: Vec3, d: Vec3, t_min: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for f in 0..mesh.face_count() {
        let limit = best.map_or(f64::INFINITY, |h| h.t);
        if let Some((t, b1, b2)) = intersect_triangle(o, d, &mesh.triangle(f), t_min, limit) {
            best = Some(Hit { t, face: f, b1, b2 });
        }
    }
    best
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let tris: Vec<[Vec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        build_node(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        Ok(Bvh { nodes, order, tris })
    }

    pub fn intersect(&self, o: Vec3, d: Vec3, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut visits = 0;
        self.intersect_counted(o, d, t_min, t_max, &mut visits)
    }

    /// Nearest hit; `visits` counts nodes whose box was tested.
    pub fn intersect_counted(&self, o: Vec3, d: Vec3, t_min: f64, t_max: f64, visits: &mut usize) -> Option<Hit> {
        let inv_d = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            *visits += 1;
            if node.bounds.hit(o, inv_d, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for &f in &self.order[start..start + node.count as usize] {
                    let f = f as usize;
                    // Inclusive limit so an equal-distance lower index wins.
                    if let Some((t, b1, b2)) = intersect_triangle(o, d, &self.tris[f], t_min, limit.next_up()) {
                        let better = match best {
                            None => true,
                            Some(h) => t < h.t || (t == h.t && f < h.face),
                        };
                        if better {
                            best = Some(Hit { t, face: f, b1, b2 });
                            limit = t;
                        }
                    }
                }
            } else {
                // Right child below left so the left subtree is visited first.
                let me = stack[sp];
                stack[sp] = node.offset;
                stack[sp + 1] = me + 1;
                sp += 2;
            }
        }
        best
    }

    /// Any hit closer than `t_max`.
    pub fn occluded(&self, o: Vec3, d: Vec3, t_min: f64, t_max: f64) -> bool {
        let inv_d = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.hit(o, inv_d, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for &f in &self.order[start..start + node.count as usize] {
                    if intersect_triangle(o, d, &self.tris[f as usize], t_min, t_max).is_some() {
                        return true;
                    }
                }
            } else {
                // Right child below left so the left subtree is visited first.
                let me = stack[sp];
                stack[sp] = node.offset;
                stack[sp + 1] = me + 1;
                sp += 2;
            }
        }
        false
    }
}

fn build_node(tris: &[[Vec3; 3]], centroids: &[Vec3], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let mut bounds = Aabb::EMPTY;
    let mut cbounds = Aabb::EMPTY;
    for &f in &order[start..end] {
        for &p in &tris[f as usize] {
            bounds.grow(p);
        }
        cbounds.grow(centroids[f as usize]);
    }
    let me = nodes.len() as u32;
    nodes.push(Node { bounds, offset: start as u32, count: (end - start) as u32 });
    if end - start <= LEAF_SIZE {
        return me;
    }
    let ext = cbounds.hi - cbounds.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    if ext[axis] <= 0.0 {
        // All centroids coincide; keep as one (possibly large) leaf.
        return me;
    }
    let mid = (start + end) / 2;
    order[start..end].sort_by(|&a, &b| {
        centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b))
    });
    build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, mid, end, nodes);
    nodes[me as usize] = Node { bounds, offset: right, count: 0 };
    me
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn single_triangle_centroid() {
        let m = TriMesh::new(vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)], vec![[0, 1, 2]]).unwrap();
        let bvh = Bvh::build(&m).unwrap();
        let o = Vec3::new(1.0 / 3.0, 1.0 / 3.0, 1.0);
        let d = Vec3::new(0.0, 0.0, -1.0);
        let a = bvh.intersect(o, d, 0.0, f64::INFINITY).unwrap();
        assert_eq!(Some(a), brute_force_intersect(&m, o, d, 0.0));
        assert!((a.t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn miss_visits_only_root() {
        let bvh = Bvh::build(&synth::icosphere(2, 1.0)).unwrap();
        let mut visits = 0;
        let hit = bvh.intersect_counted(Vec3::new(5.0, 5.0, 5.0), Vec3::new(1.0, 0.0, 0.0), 0.0, f64::INFINITY, &mut visits);
        assert!(hit.is_none());
        assert_eq!(visits, 1);
    }

    #[test]
    fn empty_mesh_rejected() {
        let m = TriMesh { vertices: vec![], faces: vec![], uvs: None, colors: None };
        assert!(matches!(Bvh::build(&m), Err(Error::EmptyMesh)));
    }
}
