//! Synthetic ground-truth scenes and the on-disk dataset layout shared by
//! the `synth`, `optimize` and `render` commands.
//!
//! A dataset directory looks like
//!
//! ```text
//! cameras.json  images/view_000.pfm  masks/view_000.png  preview/view_000.png
//! holdout/{cameras.json, images/, masks/}
//! gt/{mesh.obj, diffuse.pfm, specular.pfm, roughness.pfm, envmap.pfm}
//! init_mesh.obj  scene.json
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::obj::{read_obj, write_obj};
use crate::geom::TriMesh;
use crate::math::{hash_combine, Vec3};
use crate::pbrt::{render, RenderConfig};
use crate::scene::image::{read_color_image, read_mask_png, read_pfm, write_pfm, write_png};
use crate::scene::{read_cameras, write_cameras, Camera, EnvMap, ImageBuffer, SceneParams, Texture2D, ENV_HEIGHT, ENV_WIDTH};
use crate::softras::rasterize_hard_mask;
use crate::synth;

/// Azimuthal offset of the held-out camera lattice, chosen so that none of
/// its directions coincide with a training direction.
pub const HOLDOUT_PHASE: f64 = 1.3;
const RENDER_STREAM: u64 = 0x7379_6e74;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Icosphere {
        subdiv: usize,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        perturb: f64,
    },
    UvSphere {
        n_lat: usize,
        n_lon: usize,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        perturb: f64,
    },
    Obj { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl MeshSource {
    pub fn build(&self, base: &Path) -> Result<TriMesh> {
        match self {
            MeshSource::Icosphere { subdiv, radius, perturb } => Ok(synth::perturb_radial(&synth::icosphere(*subdiv, *radius), *perturb)),
            MeshSource::UvSphere { n_lat, n_lon, radius, perturb } => {
                if *n_lat < 2 || *n_lon < 3 {
                    return Err(Error::Config(format!("uv_sphere needs n_lat ≥ 2 and n_lon ≥ 3 (got {n_lat}, {n_lon})")));
                }
                Ok(synth::perturb_radial(&synth::uv_sphere(*n_lat, *n_lon, *radius), *perturb))
            }
            MeshSource::Obj { path } => read_obj(&resolve(base, path)),
        }
    }

    /// The same source without its radial perturbation: the starting mesh
    /// for geometry recovery.
    pub fn unperturbed(&self) -> MeshSource {
        match self.clone() {
            MeshSource::Icosphere { subdiv, radius, .. } => MeshSource::Icosphere { subdiv, radius, perturb: 0.0 },
            MeshSource::UvSphere { n_lat, n_lon, radius, .. } => MeshSource::UvSphere { n_lat, n_lon, radius, perturb: 0.0 },
            obj => obj,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TextureSource {
    Constant { value: Vec<f64> },
    Checkerboard { cell: usize, a: [f64; 3], b: [f64; 3] },
    Pfm { path: PathBuf },
}

impl TextureSource {
    pub fn build(&self, res: usize, channels: usize, base: &Path) -> Result<Texture2D> {
        let tex = match self {
            TextureSource::Constant { value } => {
                let value = match value.len() {
                    1 => vec![value[0]; channels],
                    n if n == channels => value.clone(),
                    n => return Err(Error::Config(format!("constant texture has {n} values, expected 1 or {channels}"))),
                };
                Texture2D::constant(res, res, &value)
            }
            TextureSource::Checkerboard { cell, a, b } => {
                if channels != 3 || *cell == 0 {
                    return Err(Error::Config("checkerboard textures need 3 channels and a positive cell size".into()));
                }
                synth::checkerboard(res, *cell, Vec3::from_array(*a), Vec3::from_array(*b))
            }
            TextureSource::Pfm { path } => Texture2D::from_image(&read_pfm(&resolve(base, path))?),
        };
        if tex.channels != channels {
            return Err(Error::DimensionMismatch { what: "texture channels", expected: channels.to_string(), got: tex.channels.to_string() });
        }
        Ok(tex)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSource {
    Constant {
        value: [f64; 3],
        #[serde(default = "env_width")]
        width: usize,
        #[serde(default = "env_height")]
        height: usize,
    },
    Sky {
        #[serde(default = "env_width")]
        width: usize,
        #[serde(default = "env_height")]
        height: usize,
    },
    Pfm { path: PathBuf },
}

fn env_width() -> usize {
    ENV_WIDTH
}

fn env_height() -> usize {
    ENV_HEIGHT
}

impl EnvSource {
    pub fn build(&self, base: &Path) -> Result<EnvMap> {
        match self {
            EnvSource::Constant { value, width, height } => Ok(EnvMap::constant(*width, *height, Vec3::from_array(*value))),
            EnvSource::Sky { width, height } => Ok(synth::sky_envmap(*width, *height)),
            EnvSource::Pfm { path } => EnvMap::from_image(&read_pfm(&resolve(base, path))?),
        }
    }
}

/// Ground-truth scene description consumed by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub mesh: MeshSource,
    /// Starting mesh written for the optimizer; defaults to `mesh` without
    /// its perturbation.
    #[serde(default)]
    pub init_mesh: Option<MeshSource>,
    pub diffuse: TextureSource,
    #[serde(default = "default_specular")]
    pub specular: TextureSource,
    #[serde(default = "default_roughness")]
    pub roughness: TextureSource,
    pub envmap: EnvSource,
    #[serde(default = "default_tex_resolution")]
    pub tex_resolution: usize,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
    #[serde(default = "default_synth_spp")]
    pub spp: u32,
    #[serde(default = "default_max_depth")]
    pub max_depth: u32,
    /// Camera distance as a multiple of the bounding-sphere radius.
    #[serde(default = "default_distance_scale")]
    pub distance_scale: f64,
    #[serde(default = "default_holdout")]
    pub holdout_views: usize,
    /// Hyperparameter overrides copied verbatim into the generated
    /// `scene.json`.
    #[serde(default)]
    pub overrides: serde_json::Value,
}

fn default_specular() -> TextureSource {
    TextureSource::Constant { value: vec![0.0] }
}
fn default_roughness() -> TextureSource {
    TextureSource::Constant { value: vec![0.3] }
}
fn default_tex_resolution() -> usize {
    64
}
fn default_size() -> usize {
    128
}
fn default_synth_spp() -> u32 {
    256
}
fn default_max_depth() -> u32 {
    3
}
fn default_distance_scale() -> f64 {
    2.5
}
fn default_holdout() -> usize {
    10
}

impl SynthConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
    }

    pub fn validate(&self) -> Result<()> {
        if self.tex_resolution == 0 || self.width == 0 || self.height == 0 || self.spp == 0 {
            return Err(Error::Config("tex_resolution, width, height and spp must be positive".into()));
        }
        if !(self.distance_scale > 1.0) {
            return Err(Error::Config(format!("distance_scale must exceed 1 (got {})", self.distance_scale)));
        }
        Ok(())
    }

    /// Builds the ground-truth scene; paths are relative to `base`.
    pub fn ground_truth(&self, base: &Path) -> Result<SceneParams> {
        let r = self.tex_resolution;
        let scene = SceneParams {
            mesh: self.mesh.build(base)?,
            diffuse: self.diffuse.build(r, 3, base)?,
            specular: self.specular.build(r, 3, base)?,
            roughness: self.roughness.build(r, 1, base)?,
            envmap: self.envmap.build(base)?,
        };
        scene.validate()?;
        Ok(scene)
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn view_name(i: usize) -> String {
    format!("view_{i:03}")
}

/// Training and held-out cameras for a scene: Fibonacci lattices on the
/// upper hemisphere around the bounding sphere.
pub fn dataset_cameras(mesh: &TriMesh, views: usize, holdout: usize, cfg: &SynthConfig) -> Result<(Vec<Camera>, Vec<Camera>)> {
    let (c, r) = mesh.bounding_sphere();
    let d = cfg.distance_scale * r;
    Ok((
        synth::hemisphere_cameras(views, 0.0, c, d, cfg.width, cfg.height)?,
        synth::hemisphere_cameras(holdout, HOLDOUT_PHASE, c, d, cfg.width, cfg.height)?,
    ))
}

/// Seed for the ground-truth render of view `i` in a camera set.
pub fn view_seed(seed: u64, set: u64, i: usize) -> u64 {
    hash_combine(hash_combine(hash_combine(seed, RENDER_STREAM), set), i as u64)
}

/// Renders RGB (when the mesh has UVs) and hard masks for `cameras`.
pub fn render_views(scene: &SceneParams, cameras: &[Camera], spp: u32, max_depth: u32, seed: u64, set: u64) -> Result<Vec<(Option<ImageBuffer>, ImageBuffer)>> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let mask = rasterize_hard_mask(&scene.mesh, cam);
            let rgb = if scene.mesh.uvs.is_some() {
                let cfg = RenderConfig { spp, max_depth, seed: view_seed(seed, set, i), downsample: 1, ..RenderConfig::default() };
                Some(render(scene, cam, &cfg)?)
            } else {
                None
            };
            Ok((rgb, mask))
        })
        .collect()
}

fn round_trip_cameras(dir: &Path, cameras: &[Camera]) -> Result<Vec<Camera>> {
    create_dir(dir)?;
    let path = dir.join("cameras.json");
    write_cameras(&path, cameras)?;
    load_cameras(&path)
}

fn write_view_set(dir: &Path, views: &[(Option<ImageBuffer>, ImageBuffer)], preview: bool) -> Result<()> {
    create_dir(&dir.join("masks"))?;
    let has_rgb = views.iter().any(|v| v.0.is_some());
    if has_rgb {
        create_dir(&dir.join("images"))?;
        if preview {
            create_dir(&dir.join("preview"))?;
        }
    }
    for (i, (rgb, mask)) in views.iter().enumerate() {
        let name = view_name(i);
        write_png(&dir.join("masks").join(format!("{name}.png")), mask)?;
        if let Some(rgb) = rgb {
            write_pfm(&dir.join("images").join(format!("{name}.pfm")), rgb)?;
            if preview {
                write_png(&dir.join("preview").join(format!("{name}.png")), rgb)?;
            }
        }
    }
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes the scene's mesh, textures and envmap into `dir`.
pub fn write_scene(dir: &Path, scene: &SceneParams) -> Result<()> {
    create_dir(dir)?;
    write_obj(&dir.join("mesh.obj"), &scene.mesh)?;
    write_pfm(&dir.join("diffuse.pfm"), &scene.diffuse.to_image())?;
    write_pfm(&dir.join("specular.pfm"), &scene.specular.to_image())?;
    write_pfm(&dir.join("roughness.pfm"), &scene.roughness.to_image())?;
    write_pfm(&dir.join("envmap.pfm"), &scene.envmap.to_image())
}

/// Reads a scene written by [`write_scene`].
pub fn read_scene(dir: &Path) -> Result<SceneParams> {
    let file = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingFile { path: p })
        }
    };
    let scene = SceneParams {
        mesh: read_obj(&file("mesh.obj")?)?,
        diffuse: Texture2D::from_image(&read_pfm(&file("diffuse.pfm")?)?),
        specular: Texture2D::from_image(&read_pfm(&file("specular.pfm")?)?),
        roughness: Texture2D::from_image(&read_pfm(&file("roughness.pfm")?)?),
        envmap: EnvMap::from_image(&read_pfm(&file("envmap.pfm")?)?)?,
    };
    scene.validate()?;
    Ok(scene)
}

/// What `generate_dataset` wrote.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ground_truth: SceneParams,
    pub init_mesh: TriMesh,
    pub cameras: Vec<Camera>,
    pub holdout: Vec<Camera>,
}

/// Renders a full synthetic dataset into `out`. `base` resolves relative
/// paths in `cfg`.
pub fn generate_dataset(cfg: &SynthConfig, base: &Path, views: usize, seed: u64, out: &Path) -> Result<Dataset> {
    cfg.validate()?;
    if views == 0 {
        return Err(Error::Config("views must be positive".into()));
    }
    let gt = cfg.ground_truth(base)?;
    let init_mesh = cfg.init_mesh.clone().unwrap_or_else(|| cfg.mesh.unperturbed()).build(base)?;
    let (cameras, holdout) = dataset_cameras(&gt.mesh, views, cfg.holdout_views, cfg)?;

    // Render from what was written to disk, so that `render` on the saved
    // ground truth and cameras reproduces these images bit for bit.
    create_dir(out)?;
    write_scene(&out.join("gt"), &gt)?;
    let gt = read_scene(&out.join("gt"))?;
    write_obj(&out.join("init_mesh.obj"), &init_mesh)?;
    let init_mesh = read_obj(&out.join("init_mesh.obj"))?;
    let cameras = round_trip_cameras(out, &cameras)?;
    let train = render_views(&gt, &cameras, cfg.spp, cfg.max_depth, seed, 0)?;
    write_view_set(out, &train, true)?;
    let holdout = if holdout.is_empty() {
        holdout
    } else {
        let dir = out.join("holdout");
        let holdout = round_trip_cameras(&dir, &holdout)?;
        let held = render_views(&gt, &holdout, cfg.spp, cfg.max_depth, seed, 1)?;
        write_view_set(&dir, &held, false)?;
        holdout
    };

    let has_rgb = gt.mesh.uvs.is_some();
    let mut scene = serde_json::json!({
        "mesh_path": "init_mesh.obj",
        "cameras_path": "cameras.json",
        "masks_dir": "masks",
        "tex_resolution": cfg.tex_resolution,
        "output_dir": "output",
    });
    if has_rgb {
        scene["images_dir"] = "images".into();
    }
    if !holdout.is_empty() {
        let mut h = serde_json::json!({ "cameras_path": "holdout/cameras.json", "masks_dir": "holdout/masks" });
        if has_rgb {
            h["images_dir"] = "holdout/images".into();
        }
        scene["holdout"] = h;
    }
    if !cfg.overrides.is_null() {
        scene["overrides"] = cfg.overrides.clone();
    }
    let text = serde_json::to_string_pretty(&scene).expect("scene config serializes");
    crate::scene::image::write_bytes(&out.join("scene.json"), text.as_bytes())?;
    Ok(Dataset { ground_truth: gt, init_mesh, cameras, holdout })
}

/// Finds `<dir>/<name>.<ext>` for the first extension that exists.
fn find_view_file(dir: &Path, i: usize, exts: &[&str]) -> Result<PathBuf> {
    let name = view_name(i);
    for ext in exts {
        let p = dir.join(format!("{name}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::MissingFile { path: dir.join(format!("{name}.{}", exts[0])) })
}

/// Loads `view_XXX.png` masks for `count` views. Fails on the first missing
/// file before reading any image.
pub fn load_masks(dir: &Path, count: usize) -> Result<Vec<ImageBuffer>> {
    let paths: Vec<PathBuf> = (0..count).map(|i| find_view_file(dir, i, &["png"])).collect::<Result<_>>()?;
    paths.iter().map(|p| read_mask_png(p)).collect()
}

/// Loads `view_XXX.pfm` (or `.png`) colour images for `count` views.
pub fn load_images(dir: &Path, count: usize) -> Result<Vec<ImageBuffer>> {
    let paths: Vec<PathBuf> = (0..count).map(|i| find_view_file(dir, i, &["pfm", "png"])).collect::<Result<_>>()?;
    paths.iter().map(|p| read_color_image(p)).collect()
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    if !path.is_file() {
        return Err(Error::MissingFile { path: path.into() });
    }
    read_cameras(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_config_parses_with_defaults() {
        let cfg: SynthConfig = serde_json::from_str(
            r#"{"mesh": {"kind": "uv_sphere", "n_lat": 8, "n_lon": 12, "perturb": 0.1},
                "diffuse": {"kind": "checkerboard", "cell": 4, "a": [0.8, 0.2, 0.2], "b": [0.2, 0.2, 0.8]},
                "envmap": {"kind": "constant", "value": [0.5, 0.5, 0.5]}}"#,
        )
        .unwrap();
        assert_eq!((cfg.width, cfg.height, cfg.spp, cfg.holdout_views), (128, 128, 256, 10));
        assert_eq!(cfg.mesh.unperturbed(), MeshSource::UvSphere { n_lat: 8, n_lon: 12, radius: 1.0, perturb: 0.0 });
        let gt = cfg.ground_truth(Path::new(".")).unwrap();
        assert_eq!(gt.envmap.width(), ENV_WIDTH);
        assert!(gt.specular.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: std::result::Result<SynthConfig, _> =
            serde_json::from_str(r#"{"mesh": {"kind": "icosphere", "subdiv": 1}, "diffuse": {"kind": "constant", "value": [0.5]}, "envmap": {"kind": "sky"}, "sppp": 3}"#);
        assert!(r.is_err());
    }
}
