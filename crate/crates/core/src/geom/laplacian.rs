use crate::error::{Error, Result};
use crate::geom::mesh::{Topology, TriMesh};
use crate::geom::LossGrad;
use crate::math::Vec3;

/// Uniform graph Laplacian `L = I − D⁻¹A` in CSR form. Depends on topology
/// only, so it stays valid while vertices move.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl LaplacianMatrix {
    pub fn from_topology(topo: &Topology) -> Result<Self> {
        let n = topo.vertex_count;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, nbrs) in topo.neighbors.iter().enumerate() {
            if nbrs.is_empty() {
                return Err(Error::IsolatedVertex { vertex: i });
            }
            let w = -1.0 / nbrs.len() as f64;
            let mut diag_done = false;
            for &j in nbrs {
                if !diag_done && j as usize > i {
                    cols.push(i as u32);
                    vals.push(1.0);
                    diag_done = true;
                }
                cols.push(j);
                vals.push(w);
            }
            if !diag_done {
                cols.push(i as u32);
                vals.push(1.0);
            }
            row_ptr.push(cols.len());
        }
        Ok(LaplacianMatrix { n, row_ptr, cols, vals })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `(column, value)` entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `L·x`, evaluated in difference form `Σ_j w_ij (x_j − x_i)` using the
    /// zero row sums, so coincident neighbourhoods give exactly zero.
    pub fn apply(&self, x: &[Vec3]) -> Vec<Vec3> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .filter(|&(j, _)| j != i)
                    .fold(Vec3::ZERO, |acc, (j, w)| acc + (x[j] - x[i]) * w)
            })
            .collect()
    }

    pub fn apply_transpose(&self, x: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![Vec3::ZERO; self.n];
        for (i, &xi) in x.iter().enumerate().take(self.n) {
            for (j, w) in self.row(i) {
                out[j] += xi * w;
            }
        }
        out
    }
}

pub fn build_laplacian(mesh: &TriMesh) -> Result<LaplacianMatrix> {
    LaplacianMatrix::from_topology(&Topology::build(mesh))
}

/// `‖L·V‖²_F` and its gradient `2·Lᵀ·L·V`.
pub fn laplacian_loss(mesh: &TriMesh, lap: &LaplacianMatrix) -> Result<LossGrad> {
    laplacian_loss_at(&mesh.vertices, lap)
}

pub fn laplacian_loss_at(positions: &[Vec3], lap: &LaplacianMatrix) -> Result<LossGrad> {
    if positions.len() != lap.size() {
        return Err(Error::DimensionMismatch {
            what: "laplacian size",
            expected: lap.size().to_string(),
            got: positions.len().to_string(),
        });
    }
    let lv = lap.apply(positions);
    let value = lv.iter().map(|d| d.norm_squared()).sum();
    let grad = lap.apply_transpose(&lv).into_iter().map(|g| g * 2.0).collect();
    Ok(LossGrad { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn single_triangle_entries() {
        let m = TriMesh::new(
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let l = build_laplacian(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { -0.5 };
                assert_eq!(l.get(i, j), expected);
            }
        }
    }

    #[test]
    fn tetrahedron_entries() {
        let l = build_laplacian(&synth::tetrahedron()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { -1.0 / 3.0 };
                assert_eq!(l.get(i, j), expected);
            }
        }
    }

    #[test]
    fn icosphere_rows_sum_to_zero() {
        let l = build_laplacian(&synth::icosphere(1, 1.0)).unwrap();
        for i in 0..l.size() {
            let s: f64 = l.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-10, "row {i} sums to {s}");
        }
    }

    #[test]
    fn isolated_vertex_is_named() {
        let m = TriMesh::new(
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::splat(5.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(build_laplacian(&m), Err(Error::IsolatedVertex { vertex: 3 })));
    }

    #[test]
    fn coincident_vertices_have_zero_loss() {
        let mut m = synth::tetrahedron();
        for v in &mut m.vertices {
            *v = Vec3::new(0.3, -1.0, 2.0);
        }
        let l = build_laplacian(&m).unwrap();
        let r = laplacian_loss(&m, &l).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn regular_tetrahedron_closed_form() {
        // Unit circumradius, centroid at origin: L·v = v + v/3 for every vertex.
        let m = synth::tetrahedron();
        let l = build_laplacian(&m).unwrap();
        let r = laplacian_loss(&m, &l).unwrap();
        assert!((r.value - 64.0 / 9.0).abs() < 1e-12, "{}", r.value);
    }
}
