//! Finite-difference checks of every analytic gradient, grouped into the
//! suites run by `invren gradcheck`.
//!
//! Each check compares an analytic gradient `a` with central differences
//! `n` and reports the normwise relative error `max|a − n| / max|n|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{edge_length_loss_with, laplacian_loss_at, normal_consistency_loss_with, LaplacianMatrix, Topology, TriMesh};
use crate::losses::{bilateral_specular_reg, rgb_l1_loss, silhouette_loss, RefLossWeights};
use crate::math::{hash_combine, Vec3};
use crate::pbrt::{render_backward_with, render_with, RenderConfig, SceneGeometry};
use crate::scene::{init_scene, Camera, EnvMap, ImageBuffer, SceneParams, Texture2D};
use crate::softras::{soft_silhouette, soft_silhouette_backward, SoftRasterConfig};
use crate::synth;

pub const SUITES: [&str; 3] = ["softras", "pbrt", "losses"];

pub const SOFTRAS_TOLERANCE: f64 = 1e-3;
pub const PBRT_TOLERANCE: f64 = 0.02;
pub const LOSSES_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpCheck {
    pub op: String,
    /// Number of gradient entries compared.
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub ops: Vec<OpCheck>,
}

impl SuiteReport {
    fn new(suite: &'static str, tolerance: f64, ops: Vec<OpCheck>) -> Self {
        // NaN errors must fail, so compare with `<` and default to failure.
        let max_rel_error = ops.iter().map(|o| o.max_rel_error).fold(0.0, |a: f64, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) });
        SuiteReport { suite, tolerance, max_rel_error, passed: max_rel_error < tolerance, ops }
    }

    /// The op with the largest error.
    pub fn worst(&self) -> Option<&OpCheck> {
        self.ops.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Options shared by all suites.
#[derive(Debug, Clone, Default)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Negates the analytic gradient of the named op. Used to confirm that
    /// the harness notices a wrong gradient.
    pub flip_sign: Option<String>,
    /// Number of random meshes in the soft-rasterizer suite.
    pub softras_meshes: usize,
}

impl GradcheckOptions {
    pub fn new(seed: u64) -> Self {
        GradcheckOptions { seed, flip_sign: None, softras_meshes: 50 }
    }

    fn sign(&self, op: &str) -> f64 {
        if self.flip_sign.as_deref() == Some(op) {
            -1.0
        } else {
            1.0
        }
    }
}

pub fn run_suite(name: &str, opts: &GradcheckOptions) -> Result<SuiteReport> {
    match name {
        "softras" => softras_suite(opts),
        "pbrt" => pbrt_suite(opts),
        "losses" => losses_suite(opts),
        other => Err(Error::Config(format!("unknown gradcheck suite `{other}` (expected one of {})", SUITES.join(", ")))),
    }
}

/// Normwise relative error between analytic and numeric gradients.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

fn central(f: &mut impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_combine(seed, stream))
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| p.to_array()).collect()
}

fn set_coord(p: &mut Vec3, k: usize, value: f64) {
    let mut a = p.to_array();
    a[k] = value;
    *p = Vec3::from_array(a);
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Small random mesh (1 to 20 faces) around the origin.
fn random_small_mesh(rng: &mut ChaCha8Rng) -> TriMesh {
    let base = match rng.random_range(0..4) {
        0 => TriMesh::new(
            vec![Vec3::new(-0.6, -0.4, 0.0), Vec3::new(0.6, -0.3, 0.1), Vec3::new(0.0, 0.6, -0.1)],
            vec![[0, 1, 2]],
        )
        .expect("triangle"),
        1 => TriMesh::new(
            vec![Vec3::new(-0.5, -0.5, 0.0), Vec3::new(0.5, -0.5, 0.0), Vec3::new(0.5, 0.5, 0.0), Vec3::new(-0.5, 0.5, 0.0)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .expect("quad"),
        2 => synth::tetrahedron(),
        _ => synth::icosphere(0, 1.0),
    };
    let scale = rng.random_range(0.3..0.7);
    let axis = random_unit(rng);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let shift = Vec3::new(rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25));
    let mut out = base.clone();
    for v in &mut out.vertices {
        let jitter = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        let p = *v + jitter;
        // Rodrigues rotation.
        let (s, c) = angle.sin_cos();
        let r = p * c + axis.cross(p) * s + axis * (axis.dot(p) * (1.0 - c));
        *v = r * scale + shift;
    }
    out
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize, lo: f64, hi: f64) -> ImageBuffer {
    let data = (0..w * h * ch).map(|_| rng.random_range(lo..hi)).collect();
    ImageBuffer::from_data(w, h, ch, data).expect("sizes agree")
}

/// Soft-rasterizer vertex gradients on random small meshes at 32×32.
pub fn softras_suite(opts: &GradcheckOptions) -> Result<SuiteReport> {
    let mut rng = rng_for(opts.seed, 0x736f_6674);
    let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 32, 32, 40.0)?;
    let cfg = SoftRasterConfig::default();
    let sign = opts.sign("soft_silhouette_backward");
    let mut worst = 0.0f64;
    let mut entries = 0;
    for _ in 0..opts.softras_meshes {
        let mesh = random_small_mesh(&mut rng);
        let up = random_image(&mut rng, 32, 32, 1, -1.0, 1.0);
        let objective = |m: &TriMesh| -> Result<f64> {
            let img = soft_silhouette(m, &cam, &cfg)?;
            Ok(img.data.iter().zip(&up.data).map(|(a, b)| a * b).sum())
        };
        let analytic: Vec<f64> = flatten(&soft_silhouette_backward(&mesh, &cam, &cfg, &up)?).iter().map(|g| g * sign).collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..mesh.vertex_count() {
            for k in 0..3 {
                let base = mesh.vertices[i].to_array()[k];
                let mut err = None;
                let mut f = |d: f64| {
                    let mut m = mesh.clone();
                    set_coord(&mut m.vertices[i], k, base + d);
                    objective(&m).unwrap_or_else(|e| {
                        err = Some(e);
                        f64::NAN
                    })
                };
                let v = central(&mut f, 1e-7);
                if let Some(e) = err {
                    return Err(e);
                }
                numeric.push(v);
            }
        }
        entries += analytic.len();
        worst = worst.max(rel_error(&analytic, &numeric));
    }
    Ok(SuiteReport::new("softras", SOFTRAS_TOLERANCE, vec![OpCheck { op: "soft_silhouette_backward".into(), entries, max_rel_error: worst }]))
}

/// Random textured sphere under a small random envmap, for path-tracer
/// checks.
pub fn pbrt_test_scene(seed: u64) -> Result<(SceneParams, Camera)> {
    let mut rng = rng_for(seed, 0x7062_7274);
    let mut scene = init_scene(synth::uv_sphere(8, 12, 1.0), 8)?;
    for v in scene.diffuse.data.iter_mut() {
        *v = rng.random_range(0.2..0.8);
    }
    for v in scene.specular.data.iter_mut() {
        *v = rng.random_range(0.05..0.35);
    }
    for v in scene.roughness.data.iter_mut() {
        *v = rng.random_range(0.2..0.7);
    }
    let sky = synth::sky_envmap(16, 8);
    let data = sky.data().iter().map(|v| v * rng.random_range(0.5..1.5)).collect();
    scene.envmap = EnvMap::new(16, 8, data)?;
    let cam = Camera::look_at(Vec3::new(0.4, 1.2, 2.6), Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 16, 16, 14.0)?;
    Ok((scene, cam))
}

/// Path-tracer texel and envmap gradients (16×16 image, spp 256, 8×8
/// textures) with the sampling distributions held fixed.
pub fn pbrt_suite(opts: &GradcheckOptions) -> Result<SuiteReport> {
    const PER_BLOCK: usize = 8;
    let (scene, cam) = pbrt_test_scene(opts.seed)?;
    let geom = SceneGeometry::new(&scene.mesh)?;
    let cfg = RenderConfig { spp: 256, seed: hash_combine(opts.seed, 0x6664), ..RenderConfig::default() };
    let mut rng = rng_for(opts.seed, 0x7570);
    let up = random_image(&mut rng, cam.width, cam.height, 3, 0.5, 1.5);
    let objective = |s: &SceneParams| -> Result<f64> {
        let img = render_with(&geom, s, &scene, &cam, &cfg)?;
        Ok(img.data.iter().zip(&up.data).map(|(a, b)| a * b).sum())
    };
    let grads = render_backward_with(&geom, &scene, &scene, &cam, &cfg, &up)?;
    let names = ["render_backward/diffuse", "render_backward/specular", "render_backward/roughness", "render_backward/envmap"];
    let mut ops = Vec::new();
    for (block, (_, g)) in grads.blocks().iter().enumerate() {
        let sign = opts.sign(names[block]);
        // The entries with the largest gradients, which are the ones an
        // optimizer actually moves.
        let mut idx: Vec<usize> = (0..g.len()).collect();
        idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
        idx.truncate(PER_BLOCK);
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &i in &idx {
            let h = 1e-4;
            let eval = |delta: f64| -> Result<f64> {
                let mut s = scene.clone();
                match block {
                    0 => s.diffuse.data[i] += delta,
                    1 => s.specular.data[i] += delta,
                    2 => s.roughness.data[i] += delta,
                    _ => {
                        let mut d = s.envmap.data().to_vec();
                        d[i] += delta;
                        s.envmap.set_data(d)?;
                    }
                }
                objective(&s)
            };
            numeric.push((eval(h)? - eval(-h)?) / (2.0 * h));
            analytic.push(sign * g[i]);
        }
        ops.push(OpCheck { op: names[block].into(), entries: idx.len(), max_rel_error: rel_error(&analytic, &numeric) });
    }
    Ok(SuiteReport::new("pbrt", PBRT_TOLERANCE, ops))
}

fn check_positions(
    op: &str,
    positions: &[Vec3],
    sign: f64,
    f: impl Fn(&[Vec3]) -> Result<(f64, Vec<Vec3>)>,
) -> Result<OpCheck> {
    let (_, g) = f(positions)?;
    let analytic: Vec<f64> = flatten(&g).iter().map(|v| v * sign).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..positions.len() {
        for k in 0..3 {
            let base = positions[i].to_array()[k];
            let mut p = positions.to_vec();
            let mut eval = |d: f64| -> Result<f64> {
                set_coord(&mut p[i], k, base + d);
                Ok(f(&p)?.0)
            };
            let h = 1e-6;
            numeric.push((eval(h)? - eval(-h)?) / (2.0 * h));
        }
    }
    Ok(OpCheck { op: op.into(), entries: analytic.len(), max_rel_error: rel_error(&analytic, &numeric) })
}

fn check_values(op: &str, x: &[f64], sign: f64, f: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>) -> Result<OpCheck> {
    let (_, g) = f(x)?;
    let analytic: Vec<f64> = g.iter().map(|v| v * sign).collect();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut p = x.to_vec();
        let mut eval = |d: f64| -> Result<f64> {
            p[i] = x[i] + d;
            Ok(f(&p)?.0)
        };
        let h = 1e-6;
        numeric.push((eval(h)? - eval(-h)?) / (2.0 * h));
    }
    Ok(OpCheck { op: op.into(), entries: analytic.len(), max_rel_error: rel_error(&analytic, &numeric) })
}

/// Mesh regularizers, image losses and the bilateral regularizer at random
/// inputs.
pub fn losses_suite(opts: &GradcheckOptions) -> Result<SuiteReport> {
    let mut rng = rng_for(opts.seed, 0x6c6f_7373);
    let mut mesh = synth::icosphere(1, 1.0);
    for v in &mut mesh.vertices {
        *v = *v * rng.random_range(0.8..1.2);
    }
    let topo = Topology::build(&mesh);
    let lap = LaplacianMatrix::from_topology(&topo)?;
    let faces = mesh.faces.clone();
    let mut ops = Vec::new();

    ops.push(check_positions("laplacian_loss", &mesh.vertices, opts.sign("laplacian_loss"), |p| {
        let l = laplacian_loss_at(p, &lap)?;
        Ok((l.value, l.grad))
    })?);
    ops.push(check_positions("edge_length_loss", &mesh.vertices, opts.sign("edge_length_loss"), |p| {
        let l = edge_length_loss_with(p, &topo);
        Ok((l.value, l.grad))
    })?);
    ops.push(check_positions("normal_consistency_loss", &mesh.vertices, opts.sign("normal_consistency_loss"), |p| {
        let l = normal_consistency_loss_with(p, &faces, &topo)?;
        Ok((l.value, l.grad))
    })?);

    let (w, h) = (12, 10);
    let pred = random_image(&mut rng, w, h, 1, 0.05, 0.95);
    let mask_data = (0..w * h).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let mask = ImageBuffer::from_data(w, h, 1, mask_data)?;
    ops.push(check_values("silhouette_loss", &pred.data, opts.sign("silhouette_loss"), |x| {
        let img = ImageBuffer::from_data(w, h, 1, x.to_vec())?;
        let l = silhouette_loss(&img, &mask)?;
        Ok((l.value, l.grad.data))
    })?);

    // Keep |pred − gt| away from the kink of |·|.
    let gt = random_image(&mut rng, w, h, 3, 0.0, 1.0);
    let rgb: Vec<f64> = gt.data.iter().map(|g| g + if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.05..0.3)).collect();
    ops.push(check_values("rgb_l1_loss", &rgb, opts.sign("rgb_l1_loss"), |x| {
        let img = ImageBuffer::from_data(w, h, 3, x.to_vec())?;
        let l = rgb_l1_loss(&img, &gt)?;
        Ok((l.value, l.grad.data))
    })?);

    let res = 8;
    let weights = RefLossWeights::default();
    let diffuse = Texture2D::from_data(res, res, 3, (0..res * res * 3).map(|_| rng.random_range(0.0..1.0)).collect())?;
    let specular = Texture2D::from_data(res, res, 3, (0..res * res * 3).map(|_| rng.random_range(0.0..1.0)).collect())?;
    ops.push(check_values("bilateral_reg/specular", &specular.data, opts.sign("bilateral_reg/specular"), |x| {
        let s = Texture2D::from_data(res, res, 3, x.to_vec())?;
        let r = bilateral_specular_reg(&diffuse, &s, &weights)?;
        Ok((r.value, r.grad_specular))
    })?);
    ops.push(check_values("bilateral_reg/diffuse", &diffuse.data, opts.sign("bilateral_reg/diffuse"), |x| {
        let d = Texture2D::from_data(res, res, 3, x.to_vec())?;
        let r = bilateral_specular_reg(&d, &specular, &weights)?;
        Ok((r.value, r.grad_diffuse))
    })?);

    Ok(SuiteReport::new("losses", LOSSES_TOLERANCE, ops))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_error_edge_cases() {
        assert_eq!(rel_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(rel_error(&[1.0], &[0.0]), f64::INFINITY);
        assert!((rel_error(&[1.0, 2.2], &[1.0, 2.0]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn nan_error_fails_the_suite() {
        let r = SuiteReport::new("x", 1.0, vec![OpCheck { op: "a".into(), entries: 1, max_rel_error: f64::NAN }]);
        assert!(!r.passed);
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("nope", &GradcheckOptions::new(0)), Err(Error::Config(_))));
    }
}
