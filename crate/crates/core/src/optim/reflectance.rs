//! Texture and lighting optimization through the path tracer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{reflectance_loss, RefLossWeights};
use crate::math::hash_combine;
use crate::optim::adam::{AdamConfig, AdamState};
use crate::optim::geometry::ViewSchedule;
use crate::optim::history::{LossHistory, LossRecord};
use crate::pbrt::{render_backward_with, render_with, RenderConfig, SceneGeometry};
use crate::scene::params::{
    albedo_from_logit, albedo_to_logit, env_from_logit, env_to_logit, roughness_from_logit, roughness_to_logit,
};
use crate::scene::{Camera, ImageBuffer, SceneParams};

pub const PHASE: &str = "reflectance";
const VIEW_STREAM: u64 = 0x7265_666c;
const SEED_STREAM: u64 = 0x7370_7034;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectanceConfig {
    pub iterations_per_view: usize,
    pub lr: f64,
    pub weights: RefLossWeights,
    pub render: RenderConfig,
    pub round_robin: bool,
}

impl Default for ReflectanceConfig {
    fn default() -> Self {
        ReflectanceConfig {
            iterations_per_view: 400,
            lr: 1e-4,
            weights: RefLossWeights::default(),
            render: RenderConfig::default(),
            round_robin: false,
        }
    }
}

impl ReflectanceConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.render.validate()?;
        AdamConfig::with_lr(self.lr).validate()
    }
}

/// A training view for the reflectance phase, at full resolution.
#[derive(Debug, Clone)]
pub struct ImageView {
    pub camera: Camera,
    pub image: ImageBuffer,
}

#[derive(Debug, Clone)]
pub struct ReflectanceResult {
    pub scene: SceneParams,
    pub history: LossHistory,
}

/// Unconstrained optimization variables for the four material/light blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub diffuse: Vec<f64>,
    pub specular: Vec<f64>,
    pub roughness: Vec<f64>,
    pub envmap: Vec<f64>,
}

impl Logits {
    pub fn from_scene(scene: &SceneParams) -> Self {
        Logits {
            diffuse: scene.diffuse.data.iter().map(|&v| albedo_to_logit(v)).collect(),
            specular: scene.specular.data.iter().map(|&v| albedo_to_logit(v)).collect(),
            roughness: scene.roughness.data.iter().map(|&v| roughness_to_logit(v)).collect(),
            envmap: scene.envmap.data().iter().map(|&v| env_to_logit(v)).collect(),
        }
    }

    /// Writes the constrained values into `scene` and rebuilds the
    /// environment sampling distribution.
    pub fn apply(&self, scene: &mut SceneParams) -> Result<()> {
        for (v, &l) in scene.diffuse.data.iter_mut().zip(&self.diffuse) {
            *v = albedo_from_logit(l);
        }
        for (v, &l) in scene.specular.data.iter_mut().zip(&self.specular) {
            *v = albedo_from_logit(l);
        }
        for (v, &l) in scene.roughness.data.iter_mut().zip(&self.roughness) {
            *v = roughness_from_logit(l);
        }
        scene.envmap.set_data(self.envmap.iter().map(|&l| env_from_logit(l)).collect())
    }
}

/// Per-iteration path tracer seed.
pub fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    hash_combine(hash_combine(seed, SEED_STREAM), iteration as u64)
}

/// Optimizes textures and the environment map of `scene` against `views`;
/// the mesh is left untouched. Training renders use the camera and image
/// reduced by `cfg.render.downsample`.
pub fn optimize_reflectance(scene: &SceneParams, views: &[ImageView], cfg: &ReflectanceConfig, seed: u64) -> Result<ReflectanceResult> {
    cfg.validate()?;
    scene.validate()?;
    if views.is_empty() {
        return Err(Error::Config("reflectance phase needs at least one view".into()));
    }
    let d = cfg.render.downsample;
    let mut train = Vec::with_capacity(views.len());
    for (i, v) in views.iter().enumerate() {
        if (v.image.width, v.image.height, v.image.channels) != (v.camera.width, v.camera.height, 3) {
            return Err(Error::DimensionMismatch {
                what: "training image resolution",
                expected: format!("{}x{}x3 for view {i}", v.camera.width, v.camera.height),
                got: format!("{}x{}x{}", v.image.width, v.image.height, v.image.channels),
            });
        }
        train.push((v.camera.downsampled(d), v.image.downsample(d)));
    }

    let geom = SceneGeometry::new(&scene.mesh)?;
    let mut current = scene.clone();
    let mut logits = Logits::from_scene(scene);
    let mut adam = AdamState::new(
        AdamConfig::with_lr(cfg.lr),
        &[
            ("diffuse", logits.diffuse.len()),
            ("specular", logits.specular.len()),
            ("roughness", logits.roughness.len()),
            ("envmap", logits.envmap.len()),
        ],
    );
    let mut schedule = ViewSchedule::new(seed, VIEW_STREAM, views.len(), cfg.round_robin);
    let mut history = LossHistory::new(&["rgb", "reg"]);
    let iterations = cfg.iterations_per_view * views.len();

    for it in 0..iterations {
        let vi = schedule.pick(it);
        let (camera, gt) = &train[vi];
        let rcfg = RenderConfig { seed: iteration_seed(seed, it), ..cfg.render };
        let pred = render_with(&geom, &current, &current, camera, &rcfg)?;
        let loss = reflectance_loss(&pred, gt, &current.diffuse, &current.specular, &cfg.weights)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { phase: PHASE, iteration: it });
        }
        let mut grads = render_backward_with(&geom, &current, &current, camera, &rcfg, &loss.pixel_grad)?;
        for (g, r) in grads.diffuse.iter_mut().zip(&loss.diffuse_grad) {
            *g += r;
        }
        for (g, r) in grads.specular.iter_mut().zip(&loss.specular_grad) {
            *g += r;
        }
        grads.chain_to_logits(&current);
        history.records.push(LossRecord {
            iteration: it,
            phase: PHASE,
            view_index: vi,
            total: loss.total,
            terms: loss.terms().iter().map(|t| t.1).collect(),
        });
        adam.step(
            &mut [&mut logits.diffuse, &mut logits.specular, &mut logits.roughness, &mut logits.envmap],
            &[&grads.diffuse, &grads.specular, &grads.roughness, &grads.envmap],
        )?;
        logits.apply(&mut current)?;
        if it % 500 == 0 {
            log::info!("reflectance iteration {it}/{iterations}: loss {:.6}", loss.total);
        }
    }
    Ok(ReflectanceResult { scene: current, history })
}

/// For every diffuse texel, the number of cameras whose pixel-centre rays
/// hit the surface where that texel has non-zero bilinear weight.
pub fn texel_view_counts(scene: &SceneParams, cameras: &[Camera]) -> Result<Vec<u32>> {
    let geom = SceneGeometry::new(&scene.mesh)?;
    let uvs = scene.mesh.uvs.as_deref().ok_or(Error::MissingUvs)?;
    let n = scene.diffuse.texel_count();
    let mut counts = vec![0u32; n];
    for cam in cameras {
        let mut seen = vec![false; n];
        for y in 0..cam.height {
            for x in 0..cam.width {
                let (o, dir) = cam.ray([x as f64 + 0.5, y as f64 + 0.5]);
                let Some(h) = geom.bvh.intersect(o, dir, 0.0, f64::INFINITY) else { continue };
                let f = scene.mesh.faces[h.face];
                let b0 = 1.0 - h.b1 - h.b2;
                let [a, b, c] = f.map(|i| uvs[i as usize]);
                let uv = [a[0] * b0 + b[0] * h.b1 + c[0] * h.b2, a[1] * b0 + b[1] * h.b1 + c[1] * h.b2];
                let fp = scene.diffuse.footprint(uv);
                for k in 0..4 {
                    if fp.weights[k] > 0.0 {
                        seen[fp.texels[k]] = true;
                    }
                }
            }
        }
        for (c, s) in counts.iter_mut().zip(seen) {
            *c += s as u32;
        }
    }
    Ok(counts)
}
