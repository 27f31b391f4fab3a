//! Mesh regularizers of the geometry objective with analytic vertex
//! gradients.

use crate::error::{Error, Result};
use crate::geom::mesh::{Topology, TriMesh, DEGENERATE_AREA};
use crate::geom::LossGrad;
use crate::math::Vec3;

/// `Σ (1 − nᵢ·nⱼ)²` over face pairs sharing an edge.
pub fn normal_consistency_loss(mesh: &TriMesh) -> Result<LossGrad> {
    normal_consistency_loss_with(&mesh.vertices, &mesh.faces, &Topology::build(mesh))
}

pub fn normal_consistency_loss_with(positions: &[Vec3], faces: &[[u32; 3]], topo: &Topology) -> Result<LossGrad> {
    // Unnormalized normals c = e1 × e2 and their lengths.
    let mut raw = Vec::with_capacity(faces.len());
    for (fi, f) in faces.iter().enumerate() {
        let [a, b, c] = f.map(|i| positions[i as usize]);
        let cr = (b - a).cross(c - a);
        let len = cr.norm();
        if 0.5 * len < DEGENERATE_AREA {
            return Err(Error::DegenerateFace { face: fi, area: 0.5 * len });
        }
        raw.push((cr, len));
    }
    let unit: Vec<Vec3> = raw.iter().map(|&(c, l)| c / l).collect();

    let mut value = 0.0;
    let mut grad_n = vec![Vec3::ZERO; faces.len()];
    for &[i, j] in &topo.face_pairs {
        let (i, j) = (i as usize, j as usize);
        let r = 1.0 - unit[i].dot(unit[j]);
        value += r * r;
        grad_n[i] += unit[j] * (-2.0 * r);
        grad_n[j] += unit[i] * (-2.0 * r);
    }

    let mut grad = vec![Vec3::ZERO; positions.len()];
    for (fi, f) in faces.iter().enumerate() {
        let g = grad_n[fi];
        if g == Vec3::ZERO {
            continue;
        }
        let (_, len) = raw[fi];
        let n = unit[fi];
        // d(c/|c|) = (I − n nᵀ) dc / |c|
        let gc = (g - n * n.dot(g)) / len;
        let [a, b, c] = f.map(|i| positions[i as usize]);
        let e1 = b - a;
        let e2 = c - a;
        let gb = e2.cross(gc);
        let gcv = gc.cross(e1);
        grad[f[1] as usize] += gb;
        grad[f[2] as usize] += gcv;
        grad[f[0] as usize] -= gb + gcv;
    }
    Ok(LossGrad { value, grad })
}

/// `sqrt(Σ eᵢ²)` over unique undirected edges. The gradient at a zero value
/// is defined as zero.
pub fn edge_length_loss(mesh: &TriMesh) -> LossGrad {
    edge_length_loss_with(&mesh.vertices, &Topology::build(mesh))
}

pub fn edge_length_loss_with(positions: &[Vec3], topo: &Topology) -> LossGrad {
    let sum_sq: f64 = topo
        .edges
        .iter()
        .map(|&[a, b]| (positions[a as usize] - positions[b as usize]).norm_squared())
        .sum();
    let value = sum_sq.sqrt();
    let mut grad = vec![Vec3::ZERO; positions.len()];
    if value > 0.0 {
        for &[a, b] in &topo.edges {
            let d = (positions[a as usize] - positions[b as usize]) / value;
            grad[a as usize] += d;
            grad[b as usize] -= d;
        }
    }
    LossGrad { value, grad }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_faces(apex: Vec3) -> TriMesh {
        // Shared edge along x; second face's apex decides the fold angle.
        TriMesh::new(
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 1.0, 0.0), apex],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap()
    }

    #[test]
    fn coplanar_pair_is_zero() {
        let m = two_faces(Vec3::new(0.5, -1.0, 0.0));
        assert_eq!(normal_consistency_loss(&m).unwrap().value, 0.0);
    }

    #[test]
    fn right_angle_pair_is_one() {
        let m = two_faces(Vec3::new(0.5, 0.0, 1.0));
        assert!((normal_consistency_loss(&m).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folded_pair_is_four() {
        let m = two_faces(Vec3::new(0.5, 1.0, 0.0));
        assert!((normal_consistency_loss(&m).unwrap().value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn edge_length_closed_forms() {
        let s3 = 3f64.sqrt();
        let eq = TriMesh::new(
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, s3 / 2.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((edge_length_loss(&eq).value - s3).abs() < 1e-12);

        let right = TriMesh::new(
            vec![Vec3::ZERO, Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 4.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((edge_length_loss(&right).value - 50f64.sqrt()).abs() < 1e-12);

        let mut collapsed = right.clone();
        collapsed.vertices = vec![Vec3::splat(1.0); 3];
        let r = edge_length_loss(&collapsed);
        assert_eq!(r.value, 0.0);
        assert!(r.grad.iter().all(|g| *g == Vec3::ZERO));
    }

    #[test]
    fn shared_edge_counted_once() {
        let m = two_faces(Vec3::new(0.5, -1.0, 0.0));
        let expected: f64 = [1.0, 1.25, 1.25, 1.25, 1.25].iter().sum::<f64>().sqrt();
        assert!((edge_length_loss(&m).value - expected).abs() < 1e-12);
    }
}
