//! Silhouette-driven vertex optimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{LaplacianMatrix, Topology, TriMesh, WeldedMesh};
use crate::losses::{geometry_loss_with, GeoLossWeights};
use crate::math::{hash_combine, Vec3};
use crate::optim::adam::{AdamConfig, AdamState};
use crate::optim::history::{LossHistory, LossRecord};
use crate::scene::{Camera, ImageBuffer};
use crate::softras::{soft_silhouette, soft_silhouette_backward, SoftRasterConfig};

pub const PHASE: &str = "geometry";
const VIEW_STREAM: u64 = 0x6765_6f6d;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub iterations_per_view: usize,
    pub lr: f64,
    pub weights: GeoLossWeights,
    pub sigma: f64,
    pub cutoff: f64,
    /// Visit views in order instead of sampling them uniformly.
    pub round_robin: bool,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let raster = SoftRasterConfig::default();
        GeometryConfig {
            iterations_per_view: 200,
            lr: 1e-3,
            weights: GeoLossWeights::default(),
            sigma: raster.sigma,
            cutoff: raster.cutoff,
            round_robin: false,
        }
    }
}

impl GeometryConfig {
    pub fn raster(&self) -> SoftRasterConfig {
        SoftRasterConfig { sigma: self.sigma, cutoff: self.cutoff }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        AdamConfig::with_lr(self.lr).validate()?;
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive (got {})", self.sigma)));
        }
        Ok(())
    }
}

/// A training view for the geometry phase.
#[derive(Debug, Clone)]
pub struct MaskView {
    pub camera: Camera,
    pub mask: ImageBuffer,
}

#[derive(Debug, Clone)]
pub struct GeometryResult {
    pub mesh: TriMesh,
    pub history: LossHistory,
}

/// Picks the view used at each iteration.
pub(crate) struct ViewSchedule {
    rng: ChaCha8Rng,
    views: usize,
    round_robin: bool,
}

impl ViewSchedule {
    pub(crate) fn new(seed: u64, stream: u64, views: usize, round_robin: bool) -> Self {
        ViewSchedule { rng: ChaCha8Rng::seed_from_u64(hash_combine(seed, stream)), views, round_robin }
    }

    pub(crate) fn pick(&mut self, iteration: usize) -> usize {
        if self.round_robin {
            iteration % self.views
        } else {
            self.rng.random_range(0..self.views)
        }
    }
}

/// Moves the vertices of `mesh` to match the silhouettes in `views`.
///
/// Vertices at identical positions (UV seams, split poles) are welded for
/// the duration of the optimization and move together, so seams cannot
/// open. Runs `iterations_per_view × views` single-view Adam steps.
pub fn optimize_geometry(mesh: &TriMesh, views: &[MaskView], cfg: &GeometryConfig, seed: u64) -> Result<GeometryResult> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::Config("geometry phase needs at least one view".into()));
    }
    for (i, v) in views.iter().enumerate() {
        let expected = (v.camera.width, v.camera.height, 1);
        if (v.mask.width, v.mask.height, v.mask.channels) != expected {
            return Err(Error::DimensionMismatch {
                what: "mask resolution",
                expected: format!("{}x{}x1 for view {i}", expected.0, expected.1),
                got: format!("{}x{}x{}", v.mask.width, v.mask.height, v.mask.channels),
            });
        }
    }
    let welded = WeldedMesh::new(mesh)?;
    let topo = Topology::build(&welded.mesh);
    let lap = LaplacianMatrix::from_topology(&topo)?;
    let raster = cfg.raster();
    let mut work = welded.mesh.clone();
    let mut flat: Vec<f64> = work.vertices.iter().flat_map(|v| v.to_array()).collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &[("vertices", flat.len())]);
    let mut schedule = ViewSchedule::new(seed, VIEW_STREAM, views.len(), cfg.round_robin);
    let mut history = LossHistory::new(&["silhouette", "laplacian", "edge", "normal"]);
    let iterations = cfg.iterations_per_view * views.len();

    for it in 0..iterations {
        let vi = schedule.pick(it);
        let view = &views[vi];
        let pred = soft_silhouette(&work, &view.camera, &raster)?;
        let loss = geometry_loss_with(
            &work.vertices,
            &work.faces,
            &topo,
            &lap,
            std::slice::from_ref(&pred),
            std::slice::from_ref(&view.mask),
            &cfg.weights,
        )?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { phase: PHASE, iteration: it });
        }
        let sil_grad = soft_silhouette_backward(&work, &view.camera, &raster, &loss.pixel_grads[0])?;
        let grad: Vec<f64> = sil_grad
            .iter()
            .zip(&loss.vertex_grad)
            .flat_map(|(a, b)| (*a + *b).to_array())
            .collect();
        history.records.push(LossRecord {
            iteration: it,
            phase: PHASE,
            view_index: vi,
            total: loss.total,
            terms: loss.terms().iter().map(|t| t.1).collect(),
        });
        adam.step(&mut [&mut flat], &[&grad])?;
        for (v, c) in work.vertices.iter_mut().zip(flat.chunks_exact(3)) {
            *v = Vec3::new(c[0], c[1], c[2]);
        }
        if it % 500 == 0 {
            log::info!("geometry iteration {it}/{iterations}: loss {:.6}", loss.total);
        }
    }
    Ok(GeometryResult { mesh: welded.unweld(&work.vertices, mesh), history })
}

/// Intersection over union of two binary masks (values ≥ 0.5 count as set).
pub fn mask_iou(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.check_same_shape(b, "mask iou")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (x, y) = (x >= 0.5, y >= 0.5);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::softras::rasterize_hard_mask;
    use crate::synth;

    #[test]
    fn zero_iterations_returns_input() {
        let mesh = synth::uv_sphere(6, 8, 1.0);
        let cams = synth::hemisphere_cameras(2, 0.0, Vec3::ZERO, 3.0, 16, 16).unwrap();
        let views: Vec<MaskView> =
            cams.into_iter().map(|c| MaskView { mask: rasterize_hard_mask(&mesh, &c), camera: c }).collect();
        let cfg = GeometryConfig { iterations_per_view: 0, ..Default::default() };
        let out = optimize_geometry(&mesh, &views, &cfg, 1).unwrap();
        assert_eq!(out.mesh, mesh);
        assert!(out.history.is_empty());
    }

    #[test]
    fn iou_of_disjoint_and_equal_masks() {
        let a = ImageBuffer::from_data(2, 1, 1, vec![1.0, 0.0]).unwrap();
        let b = ImageBuffer::from_data(2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
    }
}
