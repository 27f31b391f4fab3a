//! Triangle meshes, differential quantities, and the mesh regularizers.

mod laplacian;
mod mesh;
pub mod obj;
mod regularizers;

pub use laplacian::{build_laplacian, laplacian_loss, laplacian_loss_at, LaplacianMatrix};
pub use mesh::{face_normals, vertex_normals, weld_slots, Topology, TriMesh, WeldedMesh, DEGENERATE_AREA};
pub use regularizers::{edge_length_loss, edge_length_loss_with, normal_consistency_loss, normal_consistency_loss_with};

use crate::math::Vec3;

/// Scalar loss with its per-vertex gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<Vec3>,
}
