//! The two-phase run driven by a scene config file: geometry from masks,
//! then materials and lighting from colour images, then evaluation on
//! held-out views.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_cameras, load_images, load_masks, resolve, view_seed, write_scene};
use crate::error::{Error, Result};
use crate::geom::obj::{read_obj, write_obj};
use crate::geom::TriMesh;
use crate::metrics::MetricReport;
use crate::optim::geometry::{self, mask_iou, optimize_geometry, GeometryConfig, MaskView};
use crate::optim::history::LossHistory;
use crate::optim::reflectance::{self, optimize_reflectance, ImageView, ReflectanceConfig};
use crate::pbrt::{render, RenderConfig};
use crate::scene::params::INIT_ENV;
use crate::scene::{init_scene, Camera, ImageBuffer, SceneParams, ENV_HEIGHT, ENV_WIDTH};
use crate::softras::rasterize_hard_mask;

/// Camera set used only for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutConfig {
    pub cameras_path: PathBuf,
    #[serde(default)]
    pub images_dir: Option<PathBuf>,
    #[serde(default)]
    pub masks_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phases {
    pub geometry: bool,
    pub reflectance: bool,
}

impl Default for Phases {
    fn default() -> Self {
        Phases { geometry: true, reflectance: true }
    }
}

/// Hyperparameters a scene config may override. Every field defaults to
/// the published setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub phases: Phases,
    pub geometry: GeometryConfig,
    pub reflectance: ReflectanceConfig,
    /// Samples per pixel for held-out evaluation renders.
    pub eval_spp: u32,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides { phases: Phases::default(), geometry: GeometryConfig::default(), reflectance: ReflectanceConfig::default(), eval_spp: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub mesh_path: PathBuf,
    pub cameras_path: PathBuf,
    #[serde(default)]
    pub images_dir: Option<PathBuf>,
    #[serde(default)]
    pub masks_dir: Option<PathBuf>,
    #[serde(default = "default_tex_resolution")]
    pub tex_resolution: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub holdout: Option<HoldoutConfig>,
    #[serde(default)]
    pub overrides: Overrides,
    /// Directory relative paths are resolved against; the config file's
    /// directory when loaded from disk.
    #[serde(skip)]
    pub base: PathBuf,
}

fn default_tex_resolution() -> usize {
    64
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile { path: path.into() });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: SceneConfig = serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.base, p)
    }

    pub fn output(&self) -> PathBuf {
        self.path(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.overrides;
        o.geometry.validate()?;
        o.reflectance.validate()?;
        if o.eval_spp == 0 {
            return Err(Error::Config("eval_spp must be positive".into()));
        }
        if self.tex_resolution == 0 {
            return Err(Error::Config("tex_resolution must be positive".into()));
        }
        if o.phases.geometry && self.masks_dir.is_none() {
            return Err(Error::Config("the geometry phase needs `masks_dir`".into()));
        }
        if o.phases.reflectance && self.images_dir.is_none() {
            return Err(Error::Config("the reflectance phase needs `images_dir`".into()));
        }
        Ok(())
    }
}

/// The published hyperparameters as one JSON document, for auditing what a
/// build ships with.
pub fn defaults_snapshot() -> serde_json::Value {
    let o = Overrides::default();
    serde_json::json!({
        "geometry": o.geometry,
        "reflectance": o.reflectance,
        "envmap": { "width": ENV_WIDTH, "height": ENV_HEIGHT, "init": [INIT_ENV, INIT_ENV, INIT_ENV] },
        "eval_spp": o.eval_spp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checksums {
    pub mesh: String,
    pub materials: Option<String>,
    pub geometry_history: String,
    pub reflectance_history: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldoutReport {
    pub views: usize,
    pub metrics: Option<MetricReport>,
    pub mask_iou: Option<Vec<f64>>,
    pub min_mask_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub phases: Phases,
    pub geometry_iterations: usize,
    pub reflectance_iterations: usize,
    pub final_geometry_loss: Option<f64>,
    pub final_reflectance_loss: Option<f64>,
    pub holdout: Option<HoldoutReport>,
    pub checksums: Checksums,
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub mesh: TriMesh,
    /// Absent when the mesh has no UVs and only geometry was optimized.
    pub scene: Option<SceneParams>,
    pub geometry_history: LossHistory,
    pub reflectance_history: LossHistory,
    pub report: PipelineReport,
}

fn hex(h: u64) -> String {
    format!("{h:016x}")
}

fn in_phase<T>(phase: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Phase { phase, source: Box::new(e) })
}

/// Runs the configured phases and writes mesh, textures, envmap, loss
/// curves and `report.json` into `out`.
pub fn run_pipeline(cfg: &SceneConfig, seed: u64, out: &Path) -> Result<PipelineOutput> {
    cfg.validate()?;
    let o = &cfg.overrides;
    let mesh_path = cfg.path(&cfg.mesh_path);
    if !mesh_path.is_file() {
        return Err(Error::MissingFile { path: mesh_path });
    }
    let mesh = read_obj(&mesh_path)?;
    let cameras = load_cameras(&cfg.path(&cfg.cameras_path))?;
    // Load every input before any optimization so a missing file is
    // reported up front.
    let masks = match (&cfg.masks_dir, o.phases.geometry) {
        (Some(dir), true) => Some(load_masks(&cfg.path(dir), cameras.len())?),
        _ => None,
    };
    let images = match (&cfg.images_dir, o.phases.reflectance) {
        (Some(dir), true) => Some(load_images(&cfg.path(dir), cameras.len())?),
        _ => None,
    };
    if o.phases.reflectance {
        mesh.check_uvs()?;
    }
    let mut scene = if mesh.uvs.is_some() { Some(init_scene(mesh.clone(), cfg.tex_resolution)?) } else { None };
    let mut current = mesh;

    let mut geometry_history = LossHistory::new(&["silhouette", "laplacian", "edge", "normal"]);
    if let Some(masks) = masks {
        let views: Vec<MaskView> = cameras.iter().cloned().zip(masks).map(|(camera, mask)| MaskView { camera, mask }).collect();
        let before = scene.as_ref().map(SceneParams::material_checksum);
        let result = in_phase(geometry::PHASE, optimize_geometry(&current, &views, &o.geometry, seed))?;
        current = result.mesh;
        geometry_history = result.history;
        if let Some(s) = scene.as_mut() {
            s.mesh = current.clone();
            if Some(s.material_checksum()) != before {
                return Err(Error::Phase { phase: geometry::PHASE, source: Box::new(Error::Config("materials changed during the geometry phase".into())) });
            }
        }
    }

    let mut reflectance_history = LossHistory::new(&["rgb", "reg"]);
    if let Some(images) = images {
        let s = scene.as_ref().ok_or(Error::MissingUvs)?;
        let views: Vec<ImageView> = cameras.iter().cloned().zip(images).map(|(camera, image)| ImageView { camera, image }).collect();
        let before = s.mesh.position_checksum();
        let result = in_phase(reflectance::PHASE, optimize_reflectance(s, &views, &o.reflectance, seed))?;
        if result.scene.mesh.position_checksum() != before {
            return Err(Error::Phase { phase: reflectance::PHASE, source: Box::new(Error::Config("vertices changed during the reflectance phase".into())) });
        }
        reflectance_history = result.history;
        scene = Some(result.scene);
    }

    let holdout = match &cfg.holdout {
        Some(h) => Some(evaluate_holdout(cfg, h, &current, scene.as_ref(), seed)?),
        None => None,
    };

    let report = PipelineReport {
        seed,
        phases: o.phases,
        geometry_iterations: geometry_history.len(),
        reflectance_iterations: reflectance_history.len(),
        final_geometry_loss: geometry_history.records.last().map(|r| r.total),
        final_reflectance_loss: reflectance_history.records.last().map(|r| r.total),
        holdout,
        checksums: Checksums {
            mesh: hex(current.position_checksum()),
            materials: scene.as_ref().map(|s| hex(s.material_checksum())),
            geometry_history: hex(geometry_history.checksum()),
            reflectance_history: hex(reflectance_history.checksum()),
        },
    };

    crate::dataset::create_dir(out)?;
    match &scene {
        Some(s) => write_scene(out, s)?,
        None => write_obj(&out.join("mesh.obj"), &current)?,
    }
    if o.phases.geometry {
        geometry_history.write_csv(&out.join("losses_geometry.csv"))?;
    }
    if o.phases.reflectance {
        reflectance_history.write_csv(&out.join("losses_reflectance.csv"))?;
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    crate::scene::image::write_bytes(&out.join("report.json"), text.as_bytes())?;

    Ok(PipelineOutput { mesh: current, scene, geometry_history, reflectance_history, report })
}

/// Renders `cameras` at full resolution with per-view seeds derived from
/// `seed`.
pub fn render_eval(scene: &SceneParams, cameras: &[Camera], spp: u32, seed: u64) -> Result<Vec<ImageBuffer>> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let cfg = RenderConfig { spp, seed: view_seed(seed, 2, i), downsample: 1, ..RenderConfig::default() };
            render(scene, cam, &cfg)
        })
        .collect()
}

fn evaluate_holdout(cfg: &SceneConfig, h: &HoldoutConfig, mesh: &TriMesh, scene: Option<&SceneParams>, seed: u64) -> Result<HoldoutReport> {
    let cameras = load_cameras(&cfg.path(&h.cameras_path))?;
    let mask_iou = match &h.masks_dir {
        Some(dir) => {
            let masks = load_masks(&cfg.path(dir), cameras.len())?;
            let ious = cameras
                .iter()
                .zip(&masks)
                .map(|(c, m)| mask_iou(&rasterize_hard_mask(mesh, c), m))
                .collect::<Result<Vec<f64>>>()?;
            Some(ious)
        }
        None => None,
    };
    let metrics = match (&h.images_dir, scene) {
        (Some(dir), Some(scene)) if cfg.overrides.phases.reflectance => {
            let reference = load_images(&cfg.path(dir), cameras.len())?;
            let rendered = render_eval(scene, &cameras, cfg.overrides.eval_spp, seed)?;
            Some(MetricReport::evaluate(&rendered, &reference)?)
        }
        _ => None,
    };
    Ok(HoldoutReport {
        views: cameras.len(),
        metrics,
        min_mask_iou: mask_iou.as_ref().map(|v| v.iter().copied().fold(1.0, f64::min)),
        mask_iou,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_default_when_absent() {
        let cfg: SceneConfig = serde_json::from_str(
            r#"{"mesh_path": "m.obj", "cameras_path": "c.json", "masks_dir": "masks", "output_dir": "out",
                "overrides": {"phases": {"reflectance": false}, "geometry": {"iterations_per_view": 3}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.overrides.phases, Phases { geometry: true, reflectance: false });
        assert_eq!(cfg.overrides.geometry.iterations_per_view, 3);
        assert_eq!(cfg.overrides.geometry.lr, 1e-3);
        assert_eq!(cfg.overrides.reflectance, ReflectanceConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn reflectance_without_images_is_invalid() {
        let cfg: SceneConfig =
            serde_json::from_str(r#"{"mesh_path": "m.obj", "cameras_path": "c.json", "masks_dir": "masks", "output_dir": "out"}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
