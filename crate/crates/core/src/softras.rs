//! Soft silhouette rasterizer with analytic vertex gradients.
//!
//! Each triangle contributes a coverage probability
//! `D = sigmoid(δ·d²/σ)` at every pixel centre, where `d` is the distance
//! from the pixel to the triangle's projected boundary and `δ = ±1` for
//! inside/outside. Probabilities combine as `I = 1 − Π(1 − D)`. Distances
//! are measured in normalized device coordinates: pixel offsets from the
//! principal point scaled by `2 / max(width, height)`.
//!
//! The product is accumulated in log space (`log(1 − D) = −softplus(s/σ)`),
//! which keeps far-field values like `e^{−30}` representable instead of
//! rounding them to zero.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::TriMesh;
use crate::math::{sigmoid, Vec3};
use crate::scene::{Camera, ImageBuffer};

/// Rows per parallel work unit. Fixed so that reductions do not depend on
/// the thread count.
const ROWS_PER_CHUNK: usize = 4;

/// Vertices closer than this to the camera plane count as behind it.
const NEAR_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftRasterConfig {
    /// Softness in NDC² units.
    pub sigma: f64,
    /// Outside a triangle, contributions with `d²/σ` above this are
    /// dropped (`sigmoid(−50) ≈ 2·10⁻²²`). Use `f64::INFINITY` to keep all.
    pub cutoff: f64,
}

impl Default for SoftRasterConfig {
    fn default() -> Self {
        SoftRasterConfig { sigma: 1e-4, cutoff: 50.0 }
    }
}

/// Per-vertex projection: NDC position and the rows of `∂(X, Y)/∂p_world`.
#[derive(Debug, Clone, Copy)]
struct ProjVertex {
    ndc: [f64; 2],
    dx: Vec3,
    dy: Vec3,
}

#[derive(Debug, Clone, Copy)]
struct ProjTri {
    face: u32,
    p: [[f64; 2]; 3],
    /// Sign of the projected signed area.
    orient: f64,
    x_range: (usize, usize),
}

struct Prepared {
    width: usize,
    height: usize,
    scale: f64,
    cx: f64,
    cy: f64,
    verts: Vec<ProjVertex>,
    tris: Vec<ProjTri>,
    /// Triangle indices (into `tris`) overlapping each row, ascending.
    rows: Vec<Vec<u32>>,
}

#[inline]
fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Projects the mesh, culls back-facing and behind-camera triangles and bins
/// the survivors by row. `margin` is the NDC distance by which each
/// triangle's box is grown.
fn prepare(mesh: &TriMesh, camera: &Camera, margin: f64) -> Prepared {
    let (w, h) = (camera.width, camera.height);
    let scale = 2.0 / w.max(h) as f64;
    let r = camera.rotation.transpose();
    let cam_pts: Vec<Vec3> = mesh.vertices.iter().map(|&p| camera.to_camera(p)).collect();
    let verts: Vec<ProjVertex> = cam_pts
        .iter()
        .map(|c| {
            let z = c.z;
            let (kx, ky) = (scale * camera.fx, scale * camera.fy);
            let ndc = [-kx * c.x / z, ky * c.y / z];
            let gx = Vec3::new(-kx / z, 0.0, kx * c.x / (z * z));
            let gy = Vec3::new(0.0, ky / z, -ky * c.y / (z * z));
            ProjVertex { ndc, dx: r.mul_vec(gx), dy: r.mul_vec(gy) }
        })
        .collect();

    let mut tris = Vec::new();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let [a, b, c] = f.map(|i| i as usize);
        let (ca, cb, cc) = (cam_pts[a], cam_pts[b], cam_pts[c]);
        if -ca.z <= NEAR_DEPTH || -cb.z <= NEAR_DEPTH || -cc.z <= NEAR_DEPTH {
            continue;
        }
        let n = (cb - ca).cross(cc - ca);
        if n.dot(-ca) <= 0.0 {
            continue;
        }
        let p = [verts[a].ndc, verts[b].ndc, verts[c].ndc];
        let area = cross2(sub2(p[1], p[0]), sub2(p[2], p[0]));
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let lo_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min) - margin;
        let hi_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max) + margin;
        let lo_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min) - margin;
        let hi_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max) + margin;
        // Pixel i has NDC centre (i + 0.5 − cx)·scale; one extra pixel of
        // slack keeps the box conservative under rounding.
        let to_col = |x: f64| x / scale + camera.cx - 0.5;
        let to_row = |y: f64| y / scale + camera.cy - 0.5;
        let (i0, i1) = (to_col(lo_x).floor() - 1.0, to_col(hi_x).ceil() + 1.0);
        let (j0, j1) = (to_row(lo_y).floor() - 1.0, to_row(hi_y).ceil() + 1.0);
        if i1 < 0.0 || j1 < 0.0 || i0 > (w - 1) as f64 || j0 > (h - 1) as f64 {
            continue;
        }
        let x_range = (i0.max(0.0) as usize, i1.min((w - 1) as f64) as usize);
        let (j0, j1) = (j0.max(0.0) as usize, j1.min((h - 1) as f64) as usize);
        let idx = tris.len() as u32;
        tris.push(ProjTri { face: fi as u32, p, orient: area.signum(), x_range });
        for row in &mut rows[j0..=j1] {
            row.push(idx);
        }
    }
    Prepared { width: w, height: h, scale, cx: camera.cx, cy: camera.cy, verts, tris, rows }
}

/// Signed squared distance (`+` inside) from `q` to the triangle boundary,
/// plus what the backward pass needs: the closest edge `k` (from vertex `k`
/// to `k+1`), the parameter `t` along it, and `q − closest point`.
#[derive(Debug, Clone, Copy)]
struct EdgeDistance {
    signed: f64,
    edge: usize,
    t: f64,
    diff: [f64; 2],
}

#[inline]
fn signed_distance(tri: &ProjTri, q: [f64; 2]) -> EdgeDistance {
    let mut best = EdgeDistance { signed: f64::INFINITY, edge: 0, t: 0.0, diff: [0.0; 2] };
    let mut inside = true;
    for k in 0..3 {
        let a = tri.p[k];
        let b = tri.p[(k + 1) % 3];
        let e = sub2(b, a);
        let aq = sub2(q, a);
        if cross2(e, aq) * tri.orient < 0.0 {
            inside = false;
        }
        let len2 = dot2(e, e);
        let t = if len2 > 0.0 { (dot2(aq, e) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let diff = [aq[0] - t * e[0], aq[1] - t * e[1]];
        let d2 = dot2(diff, diff);
        if d2 < best.signed {
            best = EdgeDistance { signed: d2, edge: k, t, diff };
        }
    }
    if !inside {
        best.signed = -best.signed;
    }
    best
}

impl Prepared {
    #[inline]
    fn pixel_center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5 - self.cx) * self.scale, (j as f64 + 0.5 - self.cy) * self.scale]
    }

    /// Calls `f(tri_index, distance)` for every triangle contributing to
    /// pixel `(i, j)`, in ascending triangle order.
    #[inline]
    fn for_each_contribution(&self, i: usize, j: usize, cfg: &SoftRasterConfig, mut f: impl FnMut(u32, &EdgeDistance)) {
        let q = self.pixel_center(i, j);
        for &t in &self.rows[j] {
            let tri = &self.tris[t as usize];
            if i < tri.x_range.0 || i > tri.x_range.1 {
                continue;
            }
            let ed = signed_distance(tri, q);
            if ed.signed < 0.0 && -ed.signed / cfg.sigma > cfg.cutoff {
                continue;
            }
            f(t, &ed);
        }
    }

    /// Sum of `log(1 − D_j)` over contributing triangles.
    #[inline]
    fn log_empty(&self, i: usize, j: usize, cfg: &SoftRasterConfig) -> f64 {
        let mut acc = 0.0;
        self.for_each_contribution(i, j, cfg, |_, ed| acc -= softplus(ed.signed / cfg.sigma));
        acc
    }
}

fn check_config(cfg: &SoftRasterConfig) -> Result<()> {
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::Config(format!("soft rasterizer sigma must be positive, got {}", cfg.sigma)));
    }
    Ok(())
}

fn margin(cfg: &SoftRasterConfig) -> f64 {
    if cfg.cutoff.is_finite() {
        (cfg.cutoff * cfg.sigma).sqrt()
    } else {
        f64::INFINITY
    }
}

/// Soft silhouette image (1 channel, values in [0, 1]).
pub fn soft_silhouette(mesh: &TriMesh, camera: &Camera, cfg: &SoftRasterConfig) -> Result<ImageBuffer> {
    check_config(cfg)?;
    let prep = prepare(mesh, camera, margin(cfg).min(1e6));
    let (w, h) = (prep.width, prep.height);
    let mut data = vec![0.0; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
        for (i, out) in row.iter_mut().enumerate() {
            *out = -prep.log_empty(i, j, cfg).exp_m1();
        }
    });
    Ok(ImageBuffer { width: w, height: h, channels: 1, data })
}

/// Vertex gradient of `Σ_p upstream(p)·I(p)`. Culled triangles contribute
/// nothing.
pub fn soft_silhouette_backward(
    mesh: &TriMesh,
    camera: &Camera,
    cfg: &SoftRasterConfig,
    upstream: &ImageBuffer,
) -> Result<Vec<Vec3>> {
    check_config(cfg)?;
    if (upstream.width, upstream.height, upstream.channels) != (camera.width, camera.height, 1) {
        return Err(Error::DimensionMismatch {
            what: "silhouette upstream gradient",
            expected: format!("{}x{}x1", camera.width, camera.height),
            got: format!("{}x{}x{}", upstream.width, upstream.height, upstream.channels),
        });
    }
    let prep = prepare(mesh, camera, margin(cfg).min(1e6));
    let (w, h) = (prep.width, prep.height);
    let n_chunks = h.div_ceil(ROWS_PER_CHUNK);

    // Each chunk accumulates NDC-space gradients per projected triangle
    // vertex; chunks are merged in order afterwards.
    let partials: Vec<Vec<(u32, [[f64; 2]; 3])>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let rows = c * ROWS_PER_CHUNK..((c + 1) * ROWS_PER_CHUNK).min(h);
            let mut local: Vec<(u32, [[f64; 2]; 3])> = Vec::new();
            let mut slot: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
            for j in rows {
                for i in 0..w {
                    let g = upstream.data[j * w + i];
                    if g == 0.0 {
                        continue;
                    }
                    let empty = prep.log_empty(i, j, cfg).exp();
                    prep.for_each_contribution(i, j, cfg, |t, ed| {
                        // dI/ds = (1 − I)·D/σ, then s = ±d².
                        let dd = g * empty * sigmoid(ed.signed / cfg.sigma) / cfg.sigma;
                        let sgn = if ed.signed >= 0.0 { 1.0 } else { -1.0 };
                        let coef = -2.0 * dd * sgn;
                        let k = ed.edge;
                        let ga = [coef * ed.diff[0] * (1.0 - ed.t), coef * ed.diff[1] * (1.0 - ed.t)];
                        let gb = [coef * ed.diff[0] * ed.t, coef * ed.diff[1] * ed.t];
                        let s = *slot.entry(t).or_insert_with(|| {
                            local.push((t, [[0.0; 2]; 3]));
                            local.len() - 1
                        });
                        let acc = &mut local[s].1;
                        acc[k][0] += ga[0];
                        acc[k][1] += ga[1];
                        acc[(k + 1) % 3][0] += gb[0];
                        acc[(k + 1) % 3][1] += gb[1];
                    });
                }
            }
            local
        })
        .collect();

    let mut grad = vec![Vec3::ZERO; mesh.vertex_count()];
    for chunk in partials {
        for (t, g) in chunk {
            let face = mesh.faces[prep.tris[t as usize].face as usize];
            for k in 0..3 {
                let v = &prep.verts[face[k] as usize];
                grad[face[k] as usize] += v.dx * g[k][0] + v.dy * g[k][1];
            }
        }
    }
    Ok(grad)
}

/// Binary coverage of front-facing triangles at pixel centres.
pub fn rasterize_hard_mask(mesh: &TriMesh, camera: &Camera) -> ImageBuffer {
    let prep = prepare(mesh, camera, 0.0);
    let (w, h) = (prep.width, prep.height);
    let mut data = vec![0.0; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
        for (i, out) in row.iter_mut().enumerate() {
            let q = prep.pixel_center(i, j);
            let covered = prep.rows[j].iter().any(|&t| {
                let tri = &prep.tris[t as usize];
                (tri.x_range.0..=tri.x_range.1).contains(&i)
                    && (0..3).all(|k| {
                        let a = tri.p[k];
                        let b = tri.p[(k + 1) % 3];
                        cross2(sub2(b, a), sub2(q, a)) * tri.orient >= 0.0
                    })
            });
            *out = if covered { 1.0 } else { 0.0 };
        }
    });
    ImageBuffer { width: w, height: h, channels: 1, data }
}
