//! Unidirectional path tracer with environment-map lighting and its
//! pathwise derivative.
//!
//! At every surface vertex one environment sample and one BRDF sample are
//! combined with the balance heuristic. The BRDF sample also continues the
//! path. Derivatives hold every sampling decision fixed: the backward pass
//! replays each path with the same random numbers and differentiates only
//! the BRDF values and environment radiance along it. Sampling densities and
//! MIS weights are treated as constants.
//!
//! Every entry point takes two scenes. `scene` supplies the values being
//! integrated; `sampling` supplies the distributions used to pick
//! directions. Normal rendering passes the same scene twice; finite
//! difference checks pass a fixed `sampling` scene so that perturbed
//! renders share their sample directions exactly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{face_normals, vertex_normals, TriMesh};
use crate::math::{Frame, Vec3};
use crate::pbrt::brdf::{specular_factor, Material};
use crate::pbrt::bvh::Bvh;
use crate::pbrt::sampler::PixelSampler;
use crate::scene::{Camera, Footprint, ImageBuffer, SceneParams};

/// Ray offset as a fraction of the mesh bounding-box diagonal.
const RAY_EPSILON_SCALE: f64 = 1e-4;

/// Upper bound on parallel chunks in the backward pass. Chunking depends on
/// the image height only, never on the thread count.
const MAX_CHUNKS: usize = 16;

/// Which estimators contribute direct lighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Mis,
    /// Environment sampling only; escaping BRDF rays add nothing.
    EnvOnly,
    /// BRDF sampling only; no environment samples.
    BrdfOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RenderConfig {
    pub spp: u32,
    /// Maximum number of surface interactions along a path.
    pub max_depth: u32,
    pub seed: u64,
    /// Factor by which ground-truth images are reduced before rendering.
    pub downsample: usize,
    #[serde(default)]
    pub strategy: Strategy,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { spp: 4, max_depth: 3, seed: 0, downsample: 4, strategy: Strategy::Mis }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spp == 0 || self.max_depth == 0 || self.downsample == 0 {
            return Err(Error::Config(format!(
                "spp, max_depth and downsample must be positive (got {}, {}, {})",
                self.spp, self.max_depth, self.downsample
            )));
        }
        Ok(())
    }
}

/// Geometry-derived data shared by every render of a fixed mesh.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    pub bvh: Bvh,
    shading_normals: Vec<Vec3>,
    face_normals: Vec<Vec3>,
    epsilon: f64,
}

impl SceneGeometry {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        let bvh = Bvh::build(mesh)?;
        Ok(SceneGeometry {
            bvh,
            shading_normals: vertex_normals(mesh),
            face_normals: face_normals(mesh)?,
            epsilon: RAY_EPSILON_SCALE * mesh.bbox_diagonal(),
        })
    }
}

/// Gradients with respect to texel values (or logits, after
/// [`ParamGrads::chain_to_logits`]), laid out like the textures.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub diffuse: Vec<f64>,
    pub specular: Vec<f64>,
    pub roughness: Vec<f64>,
    pub envmap: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(scene: &SceneParams) -> Self {
        ParamGrads {
            diffuse: vec![0.0; scene.diffuse.data.len()],
            specular: vec![0.0; scene.specular.data.len()],
            roughness: vec![0.0; scene.roughness.data.len()],
            envmap: vec![0.0; scene.envmap.data().len()],
        }
    }

    pub fn add_assign(&mut self, o: &ParamGrads) {
        for (a, b) in [
            (&mut self.diffuse, &o.diffuse),
            (&mut self.specular, &o.specular),
            (&mut self.roughness, &o.roughness),
            (&mut self.envmap, &o.envmap),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for block in [&mut self.diffuse, &mut self.specular, &mut self.roughness, &mut self.envmap] {
            for x in block.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 4] {
        [("diffuse", &self.diffuse), ("specular", &self.specular), ("roughness", &self.roughness), ("envmap", &self.envmap)]
    }

    /// Converts value-space gradients to the logit parameterization using
    /// the current values in `scene`.
    pub fn chain_to_logits(&mut self, scene: &SceneParams) {
        for (g, &v) in self.diffuse.iter_mut().zip(&scene.diffuse.data) {
            *g *= v * (1.0 - v);
        }
        for (g, &v) in self.specular.iter_mut().zip(&scene.specular.data) {
            *g *= v * (1.0 - v);
        }
        let span = 1.0 - crate::scene::params::ROUGHNESS_MIN;
        for (g, &r) in self.roughness.iter_mut().zip(&scene.roughness.data) {
            let s = (r - crate::scene::params::ROUGHNESS_MIN) / span;
            *g *= span * s * (1.0 - s);
        }
        for (g, &v) in self.envmap.iter_mut().zip(scene.envmap.data()) {
            *g *= v;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|&x| x == 0.0))
    }
}

/// Balance-heuristic weight of a strategy with density `a` against `b`.
#[inline]
fn balance(a: f64, b: f64) -> f64 {
    a / (a + b)
}

#[derive(Debug, Clone, Copy)]
struct MatRecord {
    fp_d: Footprint,
    fp_s: Footprint,
    fp_r: Footprint,
    mat: Material,
}

/// BRDF evaluation kept for the backward pass: value and the specular factor
/// with its roughness derivative.
#[derive(Debug, Clone, Copy)]
struct BrdfEval {
    /// Both directions lie above the shading surface.
    valid: bool,
    f: Vec3,
    spec: f64,
    dspec: f64,
}

#[derive(Debug, Clone, Copy)]
struct NeeRecord {
    brdf: BrdfEval,
    le: Vec3,
    env_fp: Footprint,
    /// `cos·w/pdf`.
    coef: f64,
}

#[derive(Debug, Clone, Copy)]
struct BounceRecord {
    brdf: BrdfEval,
    /// `cos/pdf`.
    coef: f64,
    /// Radiance, footprint and MIS weight when the bounce ray escaped.
    escape: Option<(Vec3, Footprint, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct VertexRecord {
    mat: MatRecord,
    nee: Option<NeeRecord>,
    bounce: Option<BounceRecord>,
}

/// Per-path record replayed by the backward pass.
#[derive(Debug, Default)]
struct Tape {
    camera_miss: Option<Footprint>,
    vertices: Vec<VertexRecord>,
}

struct Tracer<'a> {
    geom: &'a SceneGeometry,
    scene: &'a SceneParams,
    sampling: &'a SceneParams,
    camera: &'a Camera,
    cfg: &'a RenderConfig,
}

fn material_record(scene: &SceneParams, uv: [f64; 2]) -> MatRecord {
    let fp_d = scene.diffuse.footprint(uv);
    let fp_s = scene.specular.footprint(uv);
    let fp_r = scene.roughness.footprint(uv);
    MatRecord {
        fp_d,
        fp_s,
        fp_r,
        mat: Material {
            diffuse: scene.diffuse.sample_rgb_with(&fp_d),
            specular: scene.specular.sample_rgb_with(&fp_s),
            alpha: scene.roughness.sample_scalar_with(&fp_r),
        },
    }
}

#[inline]
fn eval_brdf_local(mat: &Material, wo: Vec3, wi: Vec3) -> BrdfEval {
    if wo.z <= 0.0 || wi.z <= 0.0 {
        return BrdfEval { valid: false, f: Vec3::ZERO, spec: 0.0, dspec: 0.0 };
    }
    let (spec, dspec) = specular_factor(wo, wi, mat.alpha);
    BrdfEval { valid: true, f: mat.diffuse * std::f64::consts::FRAC_1_PI + mat.specular * spec, spec, dspec }
}

impl Tracer<'_> {
    /// Radiance estimate of one pixel sample. When `tape` is given the path
    /// is recorded for [`backprop`].
    fn trace(&self, x: usize, y: usize, s: u32, mut tape: Option<&mut Tape>) -> Vec3 {
        let cfg = self.cfg;
        let mesh = &self.scene.mesh;
        let uvs = mesh.uvs.as_deref();
        let env = &self.scene.envmap;
        let senv = &self.sampling.envmap;
        let pixel = (y * self.camera.width + x) as u64;
        let mut sampler = PixelSampler::new(cfg.seed, pixel, s, cfg.spp);
        let jitter = sampler.next_2d();
        let offset = if cfg.spp > 4 { jitter } else { [0.5, 0.5] };
        let (origin, mut dir) = self.camera.ray([x as f64 + offset[0], y as f64 + offset[1]]);
        if let Some(t) = tape.as_deref_mut() {
            t.camera_miss = None;
            t.vertices.clear();
        }

        let mut hit = self.geom.bvh.intersect(origin, dir, 0.0, f64::INFINITY);
        if hit.is_none() {
            let fp = env.footprint(dir);
            if let Some(t) = tape.as_deref_mut() {
                t.camera_miss = Some(fp);
            }
            return env.eval_with(&fp);
        }

        let mut radiance = Vec3::ZERO;
        let mut beta = Vec3::ONE;
        for _depth in 0..cfg.max_depth {
            let Some(h) = hit else { break };
            let face = mesh.faces[h.face];
            let b0 = 1.0 - h.b1 - h.b2;
            let [p0, p1, p2] = mesh.triangle(h.face);
            let p = p0 * b0 + p1 * h.b1 + p2 * h.b2;
            let uv = match uvs {
                Some(uvs) => {
                    let [a, b, c] = face.map(|i| uvs[i as usize]);
                    [a[0] * b0 + b[0] * h.b1 + c[0] * h.b2, a[1] * b0 + b[1] * h.b1 + c[1] * h.b2]
                }
                None => [0.5, 0.5],
            };
            let wo = -dir;
            let mut ng = self.geom.face_normals[h.face];
            let [n0, n1, n2] = face.map(|i| self.geom.shading_normals[i as usize]);
            let mut ns = (n0 * b0 + n1 * h.b1 + n2 * h.b2).normalized();
            if ng.dot(wo) < 0.0 {
                ng = -ng;
                ns = -ns;
            }
            if !(ns.dot(wo) > 0.0) {
                ns = ng;
            }
            let frame = Frame::from_normal(ns);
            let wo_l = frame.to_local(wo);
            let rec = material_record(self.scene, uv);
            let smat = material_record(self.sampling, uv).mat;
            let shadow_origin = p + ng * self.geom.epsilon;

            // Environment sample.
            let ue = sampler.next_2d();
            let mut nee = None;
            if cfg.strategy != Strategy::BrdfOnly {
                let es = senv.sample(ue[0], ue[1]);
                let wi_l = frame.to_local(es.dir);
                if wi_l.z > 0.0 && es.dir.dot(ng) > 0.0 && !self.geom.bvh.occluded(shadow_origin, es.dir, 0.0, f64::INFINITY) {
                    let brdf = eval_brdf_local(&rec.mat, wo_l, wi_l);
                    let w = match cfg.strategy {
                        Strategy::Mis => balance(es.pdf, smat.pdf(wo_l, wi_l)),
                        _ => 1.0,
                    };
                    let env_fp = env.footprint(es.dir);
                    let le = env.eval_with(&env_fp);
                    let coef = wi_l.z * w / es.pdf;
                    radiance += beta.mul_elem(brdf.f.mul_elem(le)) * coef;
                    nee = Some(NeeRecord { brdf, le, env_fp, coef });
                }
            }

            // BRDF sample, which also extends the path.
            let u_sel = sampler.next_1d();
            let ub = sampler.next_2d();
            let mut bounce = None;
            let mut next_hit = None;
            if let Some(bs) = smat.sample(wo_l, u_sel, ub) {
                let wi = frame.to_world(bs.wi);
                if bs.wi.z > 0.0 && wi.dot(ng) > 0.0 {
                    let brdf = eval_brdf_local(&rec.mat, wo_l, bs.wi);
                    let coef = bs.wi.z / bs.pdf;
                    let new_beta = beta.mul_elem(brdf.f) * coef;
                    let h2 = self.geom.bvh.intersect(shadow_origin, wi, 0.0, f64::INFINITY);
                    let mut escape = None;
                    if h2.is_none() && cfg.strategy != Strategy::EnvOnly {
                        let w = match cfg.strategy {
                            Strategy::Mis => balance(bs.pdf, senv.pdf(wi)),
                            _ => 1.0,
                        };
                        let fp = env.footprint(wi);
                        let le = env.eval_with(&fp);
                        radiance += new_beta.mul_elem(le) * w;
                        escape = Some((le, fp, w));
                    }
                    bounce = Some(BounceRecord { brdf, coef, escape });
                    beta = new_beta;
                    dir = wi;
                    next_hit = h2;
                }
            }
            if let Some(t) = tape.as_deref_mut() {
                t.vertices.push(VertexRecord { mat: rec, nee, bounce });
            }
            if bounce.is_none() {
                break;
            }
            hit = next_hit;
        }
        radiance
    }
}

/// Reverse pass over one recorded path with upstream gradient `g` (RGB).
///
/// With throughput `T_k` before vertex `k`, bounce factor `a_k` and
/// direct light `E_k`, the path value is `Σ T_k ⊙ (E_k + a_k ⊙ L_k)` where
/// `L_k` is the escape radiance. Suffix sums give the adjoint of each `a_k`.
fn backprop(tape: &Tape, g: Vec3, out: &mut ParamGrads) {
    if let Some(fp) = &tape.camera_miss {
        scatter_rgb(&mut out.envmap, fp, g);
        return;
    }
    let n = tape.vertices.len();
    let escape_of = |b: &BounceRecord| b.escape.map_or(Vec3::ZERO, |(le, _, w)| le * w);
    let mut suffix = vec![Vec3::ZERO; n + 1];
    for k in (0..n).rev() {
        let v = &tape.vertices[k];
        let mut s = Vec3::ZERO;
        if let Some(nee) = &v.nee {
            s += nee.brdf.f.mul_elem(nee.le) * nee.coef;
        }
        if let Some(b) = &v.bounce {
            s += (b.brdf.f * b.coef).mul_elem(escape_of(b) + suffix[k + 1]);
        }
        suffix[k] = s;
    }
    let mut prefix = Vec3::ONE;
    for (k, v) in tape.vertices.iter().enumerate() {
        let gk = g.mul_elem(prefix);
        if let Some(nee) = &v.nee {
            accumulate_brdf(&nee.brdf, &v.mat, gk.mul_elem(nee.le) * nee.coef, out);
            scatter_rgb(&mut out.envmap, &nee.env_fp, gk.mul_elem(nee.brdf.f) * nee.coef);
        }
        if let Some(b) = &v.bounce {
            let a = b.brdf.f * b.coef;
            accumulate_brdf(&b.brdf, &v.mat, gk.mul_elem(escape_of(b) + suffix[k + 1]) * b.coef, out);
            if let Some((_, fp, w)) = &b.escape {
                scatter_rgb(&mut out.envmap, fp, gk.mul_elem(a) * *w);
            }
            prefix = prefix.mul_elem(a);
        }
    }
}

/// Routes the adjoint `af` of one BRDF value into the material textures.
#[inline]
fn accumulate_brdf(brdf: &BrdfEval, rec: &MatRecord, af: Vec3, out: &mut ParamGrads) {
    if !brdf.valid {
        return;
    }
    scatter_rgb(&mut out.diffuse, &rec.fp_d, af * std::f64::consts::FRAC_1_PI);
    if brdf.spec != 0.0 {
        scatter_rgb(&mut out.specular, &rec.fp_s, af * brdf.spec);
    }
    let da = af.dot(rec.mat.specular) * brdf.dspec;
    if da != 0.0 {
        for k in 0..4 {
            out.roughness[rec.fp_r.texels[k]] += rec.fp_r.weights[k] * da;
        }
    }
}

#[inline]
fn scatter_rgb(buf: &mut [f64], fp: &Footprint, g: Vec3) {
    for k in 0..4 {
        let w = fp.weights[k];
        if w == 0.0 {
            continue;
        }
        let b = 3 * fp.texels[k];
        buf[b] += w * g.x;
        buf[b + 1] += w * g.y;
        buf[b + 2] += w * g.z;
    }
}

fn check_scenes(scene: &SceneParams, sampling: &SceneParams) -> Result<()> {
    if scene.mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    for (what, a, b) in [
        ("sampling scene diffuse size", scene.diffuse.data.len(), sampling.diffuse.data.len()),
        ("sampling scene specular size", scene.specular.data.len(), sampling.specular.data.len()),
        ("sampling scene roughness size", scene.roughness.data.len(), sampling.roughness.data.len()),
        ("sampling scene envmap size", scene.envmap.data().len(), sampling.envmap.data().len()),
    ] {
        if a != b {
            return Err(Error::DimensionMismatch { what, expected: a.to_string(), got: b.to_string() });
        }
    }
    Ok(())
}

/// Renders `scene` through `camera`; the image has the camera's resolution.
pub fn render(scene: &SceneParams, camera: &Camera, cfg: &RenderConfig) -> Result<ImageBuffer> {
    let geom = SceneGeometry::new(&scene.mesh)?;
    render_with(&geom, scene, scene, camera, cfg)
}

pub fn render_with(
    geom: &SceneGeometry,
    scene: &SceneParams,
    sampling: &SceneParams,
    camera: &Camera,
    cfg: &RenderConfig,
) -> Result<ImageBuffer> {
    cfg.validate()?;
    check_scenes(scene, sampling)?;
    let tracer = Tracer { geom, scene, sampling, camera, cfg };
    let (w, h) = (camera.width, camera.height);
    let mut data = vec![0.0; w * h * 3];
    let inv = 1.0 / cfg.spp as f64;
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let mut sum = Vec3::ZERO;
            for s in 0..cfg.spp {
                sum += tracer.trace(x, y, s, None);
            }
            let v = sum * inv;
            row[3 * x..3 * x + 3].copy_from_slice(&v.to_array());
        }
    });
    Ok(ImageBuffer { width: w, height: h, channels: 3, data })
}

/// Gradient of `Σ upstream ⊙ render(scene)` with respect to texel and
/// envmap logits. `cfg` (including the seed) must match the forward render.
pub fn render_backward(scene: &SceneParams, camera: &Camera, cfg: &RenderConfig, upstream: &ImageBuffer) -> Result<ParamGrads> {
    let geom = SceneGeometry::new(&scene.mesh)?;
    let mut g = render_backward_with(&geom, scene, scene, camera, cfg, upstream)?;
    g.chain_to_logits(scene);
    Ok(g)
}

/// Value-space gradients of `Σ upstream ⊙ render_with(geom, scene, sampling, …)`
/// with respect to the texel and envmap values of `scene`.
pub fn render_backward_with(
    geom: &SceneGeometry,
    scene: &SceneParams,
    sampling: &SceneParams,
    camera: &Camera,
    cfg: &RenderConfig,
    upstream: &ImageBuffer,
) -> Result<ParamGrads> {
    cfg.validate()?;
    check_scenes(scene, sampling)?;
    let (w, h) = (camera.width, camera.height);
    if (upstream.width, upstream.height, upstream.channels) != (w, h, 3) {
        return Err(Error::DimensionMismatch {
            what: "render upstream gradient",
            expected: format!("{w}x{h}x3"),
            got: format!("{}x{}x{}", upstream.width, upstream.height, upstream.channels),
        });
    }
    let tracer = Tracer { geom, scene, sampling, camera, cfg };
    let rows_per_chunk = h.div_ceil(MAX_CHUNKS).max(1);
    let n_chunks = h.div_ceil(rows_per_chunk);
    let inv = 1.0 / cfg.spp as f64;
    let partials: Vec<ParamGrads> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = ParamGrads::zeros(scene);
            let mut tape = Tape::default();
            for y in c * rows_per_chunk..((c + 1) * rows_per_chunk).min(h) {
                for x in 0..w {
                    let g = upstream.rgb(x, y) * inv;
                    if g == Vec3::ZERO {
                        continue;
                    }
                    for s in 0..cfg.spp {
                        tracer.trace(x, y, s, Some(&mut tape));
                        backprop(&tape, g, &mut acc);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = ParamGrads::zeros(scene);
    for p in &partials {
        total.add_assign(p);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{init_scene, EnvMap};
    use crate::synth;

    fn small_scene() -> (SceneParams, Camera) {
        let scene = init_scene(synth::uv_sphere(12, 24, 1.0), 8).unwrap();
        let cam = Camera::look_at(Vec3::new(0.0, 0.5, 3.0), Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 12, 12, 14.0).unwrap();
        (scene, cam)
    }

    #[test]
    fn black_envmap_renders_black() {
        let (mut scene, cam) = small_scene();
        scene.envmap = EnvMap::constant(16, 8, Vec3::ZERO);
        let img = render(&scene, &cam, &RenderConfig { spp: 2, ..Default::default() }).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_envmap_doubles_image() {
        let (mut scene, cam) = small_scene();
        scene.envmap = synth::sky_envmap(32, 8);
        let cfg = RenderConfig { spp: 3, seed: 11, ..Default::default() };
        let a = render(&scene, &cam, &cfg).unwrap();
        scene.envmap = scene.envmap.scaled(2.0);
        let b = render(&scene, &cam, &cfg).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let (scene, cam) = small_scene();
        let g = render_backward(&scene, &cam, &RenderConfig::default(), &ImageBuffer::new(12, 12, 3)).unwrap();
        assert!(g.is_zero());
    }

    fn textured_scene() -> (SceneParams, Camera) {
        let (mut scene, cam) = small_scene();
        let mut k = 0u64;
        let mut next = || {
            k += 1;
            crate::math::unit_f64(crate::math::mix64(k))
        };
        for v in scene.diffuse.data.iter_mut() {
            *v = 0.2 + 0.6 * next();
        }
        for v in scene.specular.data.iter_mut() {
            *v = 0.05 + 0.3 * next();
        }
        for v in scene.roughness.data.iter_mut() {
            *v = 0.2 + 0.5 * next();
        }
        scene.envmap = synth::sky_envmap(16, 8);
        (scene, cam)
    }

    #[test]
    fn frozen_sampling_gradients_match_central_differences() {
        let (scene, cam) = textured_scene();
        let geom = SceneGeometry::new(&scene.mesh).unwrap();
        let cfg = RenderConfig { spp: 2, seed: 5, ..Default::default() };
        let mut up = ImageBuffer::new(cam.width, cam.height, 3);
        for (i, v) in up.data.iter_mut().enumerate() {
            *v = 0.5 + ((i * 37) % 11) as f64 / 11.0;
        }
        let objective = |s: &SceneParams| -> f64 {
            let img = render_with(&geom, s, &scene, &cam, &cfg).unwrap();
            img.data.iter().zip(&up.data).map(|(a, b)| a * b).sum()
        };
        let g = render_backward_with(&geom, &scene, &scene, &cam, &cfg, &up).unwrap();
        let h = 1e-5;
        let mut checked = 0;
        for block in 0..4 {
            let grads = g.blocks()[block].1;
            let mut idx: Vec<usize> = (0..grads.len()).collect();
            idx.sort_by(|&a, &b| grads[b].abs().total_cmp(&grads[a].abs()));
            for &i in idx.iter().take(3) {
                let eval = |delta: f64| {
                    let mut s = scene.clone();
                    match block {
                        0 => s.diffuse.data[i] += delta,
                        1 => s.specular.data[i] += delta,
                        2 => s.roughness.data[i] += delta,
                        _ => {
                            let mut d = s.envmap.data().to_vec();
                            d[i] += delta;
                            s.envmap.set_data(d).unwrap();
                        }
                    }
                    objective(&s)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads[i];
                assert!(an.abs() > 1e-3, "block {block} has a negligible gradient {an}");
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "block {block} index {i}: {fd} vs {an}");
                checked += 1;
            }
        }
        assert_eq!(checked, 12);
    }
}
