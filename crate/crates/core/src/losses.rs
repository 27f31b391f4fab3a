//! Training objectives for the two optimization phases.
//!
//! The geometry objective combines a soft-IoU silhouette term with three
//! mesh regularizers. The reflectance objective is a mean L1 image term plus
//! an edge-aware (bilateral) smoothness prior on the specular albedo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{edge_length_loss_with, laplacian_loss_at, normal_consistency_loss_with, LaplacianMatrix, Topology};
use crate::math::Vec3;
use crate::scene::{ImageBuffer, Texture2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoLossWeights {
    pub silhouette: f64,
    pub laplacian: f64,
    pub edge: f64,
    pub normal: f64,
}

impl Default for GeoLossWeights {
    fn default() -> Self {
        GeoLossWeights { silhouette: 1.0, laplacian: 1.0, edge: 1.0, normal: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefLossWeights {
    pub rgb: f64,
    pub reg: f64,
    /// Spatial bandwidth of the bilateral kernel, in texels.
    pub sigma_spatial: f64,
    /// Range bandwidth on channel-mean diffuse albedo.
    pub sigma_range: f64,
    pub window_radius: usize,
}

impl Default for RefLossWeights {
    fn default() -> Self {
        RefLossWeights { rgb: 0.1, reg: 1.0, sigma_spatial: 2.0, sigma_range: 0.1, window_radius: 3 }
    }
}

fn check_weights(ws: &[(&str, f64)]) -> Result<()> {
    for &(name, w) in ws {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("loss weight `{name}` must be finite and non-negative (got {w})")));
        }
    }
    Ok(())
}

impl GeoLossWeights {
    pub fn validate(&self) -> Result<()> {
        check_weights(&[
            ("silhouette", self.silhouette),
            ("laplacian", self.laplacian),
            ("edge", self.edge),
            ("normal", self.normal),
        ])
    }
}

impl RefLossWeights {
    pub fn validate(&self) -> Result<()> {
        check_weights(&[("rgb", self.rgb), ("reg", self.reg)])?;
        if !(self.sigma_spatial > 0.0 && self.sigma_range > 0.0) {
            return Err(Error::Config("bilateral bandwidths must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar loss with its gradient with respect to every pixel value.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLoss {
    pub value: f64,
    pub grad: ImageBuffer,
}

/// `1 − Σ p·g / Σ (p + g − p·g)` over all pixels.
pub fn silhouette_loss(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<ImageLoss> {
    pred.check_same_shape(gt, "silhouette")?;
    if gt.data.iter().all(|&v| v == 0.0) {
        return Err(Error::EmptyGroundTruth);
    }
    let (mut inter, mut union) = (0.0, 0.0);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        inter += p * g;
        union += p + g - p * g;
    }
    let u2 = union * union;
    let grad = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(_, &g)| -(g * union - inter * (1.0 - g)) / u2)
        .collect();
    Ok(ImageLoss {
        value: 1.0 - inter / union,
        grad: ImageBuffer { width: pred.width, height: pred.height, channels: pred.channels, data: grad },
    })
}

/// Mean absolute difference over all pixel channels.
pub fn rgb_l1_loss(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<ImageLoss> {
    pred.check_same_shape(gt, "rgb loss")?;
    let n = pred.data.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.data.len());
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let d = p - g;
        sum += d.abs();
        grad.push(sign(d) / n);
    }
    Ok(ImageLoss {
        value: sum / n,
        grad: ImageBuffer { width: pred.width, height: pred.height, channels: pred.channels, data: grad },
    })
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Bilateral regularizer value with gradients on both albedo textures.
#[derive(Debug, Clone, PartialEq)]
pub struct BilateralReg {
    pub value: f64,
    pub grad_specular: Vec<f64>,
    pub grad_diffuse: Vec<f64>,
}

/// Per-texel quantities from the first pass of the regularizer.
#[derive(Debug, Clone, Copy)]
struct TexelState {
    /// Kernel normalizer `K_p = Σ_q k_pq`.
    norm: f64,
    /// Residual `θ_s[p] − weighted mean`, per channel.
    resid: [f64; 3],
    sign: [f64; 3],
}

/// `Σ_p ‖θ_s[p] − Σ_q k_pq θ_s[q] / Σ_q k_pq‖₁` with the edge-aware kernel
/// `k_pq = exp(−‖p−q‖²/2σ₁² − (d̄_p − d̄_q)²/2σ₂²)`, where `d̄` is the
/// channel mean of the diffuse albedo. `q` ranges over the square window of
/// the configured radius around `p`, clipped to the texture.
pub fn bilateral_specular_reg(diffuse: &Texture2D, specular: &Texture2D, w: &RefLossWeights) -> Result<BilateralReg> {
    if (diffuse.width, diffuse.height, diffuse.channels) != (specular.width, specular.height, specular.channels)
        || specular.channels != 3
    {
        return Err(Error::DimensionMismatch {
            what: "bilateral regularizer textures",
            expected: format!("{}x{}x3", diffuse.width, diffuse.height),
            got: format!("{}x{}x{}", specular.width, specular.height, specular.channels),
        });
    }
    let (wd, ht) = (specular.width, specular.height);
    let r = w.window_radius as isize;
    let mean_d: Vec<f64> = diffuse.data.chunks_exact(3).map(|c| (c[0] + c[1] + c[2]) / 3.0).collect();
    let s = &specular.data;
    let inv_s1 = 1.0 / (2.0 * w.sigma_spatial * w.sigma_spatial);
    let inv_s2 = 1.0 / (2.0 * w.sigma_range * w.sigma_range);
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| ((dx * dx + dy * dy) as f64 * -inv_s1).exp()))
        .collect();
    let side = (2 * r + 1) as usize;

    // Calls `f(q, k_pq, Δ = d̄_p − d̄_q)` for every q in the window of p.
    let window = |p: usize, f: &mut dyn FnMut(usize, f64, f64)| {
        let (px, py) = ((p % wd) as isize, (p / wd) as isize);
        for dy in -r..=r {
            let qy = py + dy;
            if qy < 0 || qy >= ht as isize {
                continue;
            }
            for dx in -r..=r {
                let qx = px + dx;
                if qx < 0 || qx >= wd as isize {
                    continue;
                }
                let q = qy as usize * wd + qx as usize;
                let delta = mean_d[p] - mean_d[q];
                let k = spatial[(dy + r) as usize * side + (dx + r) as usize] * (-delta * delta * inv_s2).exp();
                f(q, k, delta);
            }
        }
    };

    let n = wd * ht;
    let states: Vec<TexelState> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut norm = 0.0;
            let mut acc = [0.0; 3];
            window(p, &mut |q, k, _| {
                norm += k;
                for c in 0..3 {
                    acc[c] += k * (s[3 * p + c] - s[3 * q + c]);
                }
            });
            let resid = acc.map(|a| a / norm);
            TexelState { norm, resid, sign: resid.map(sign) }
        })
        .collect();
    let value: f64 = states.iter().map(|t| t.resid.iter().map(|x| x.abs()).sum::<f64>()).sum();

    // ∂r_p/∂k_pq, summed over channels against sign(r_p).
    let kernel_adj = |p: usize, q: usize| -> f64 {
        let t = &states[p];
        (0..3).map(|c| t.sign[c] * ((s[3 * p + c] - s[3 * q + c]) - t.resid[c])).sum::<f64>() / t.norm
    };

    // Second pass gathers, for each texel x, every term it appears in. The
    // window relation is symmetric so "p in window of x" enumerates them.
    let per_texel: Vec<([f64; 3], f64)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut gs = [0.0; 3];
            let mut gd = 0.0;
            let tx = &states[x];
            for c in 0..3 {
                gs[c] += tx.sign[c];
            }
            window(x, &mut |p, k, delta_xp| {
                let tp = &states[p];
                for c in 0..3 {
                    gs[c] -= tp.sign[c] * k / tp.norm;
                }
                // x as the centre of its own window, and as a neighbour of p.
                // Both share k and |Δ|; Δ flips sign between the two roles.
                let dk = k * 2.0 * inv_s2 * delta_xp;
                gd -= kernel_adj(x, p) * dk;
                gd -= kernel_adj(p, x) * dk;
            });
            (gs, gd / 3.0)
        })
        .collect();
    let mut grad_specular = Vec::with_capacity(3 * n);
    let mut grad_diffuse = Vec::with_capacity(3 * n);
    for (gs, gd) in per_texel {
        grad_specular.extend_from_slice(&gs);
        grad_diffuse.extend_from_slice(&[gd; 3]);
    }
    Ok(BilateralReg { value, grad_specular, grad_diffuse })
}

/// Geometry objective with unweighted term values and weighted gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoLoss {
    pub total: f64,
    pub silhouette: f64,
    pub laplacian: f64,
    pub edge: f64,
    pub normal: f64,
    /// Regularizer gradient per vertex.
    pub vertex_grad: Vec<Vec3>,
    /// Gradient on each predicted silhouette.
    pub pixel_grads: Vec<ImageBuffer>,
}

impl GeoLoss {
    pub fn terms(&self) -> [(&'static str, f64); 4] {
        [("silhouette", self.silhouette), ("laplacian", self.laplacian), ("edge", self.edge), ("normal", self.normal)]
    }
}

/// Weighted sum of the silhouette term (averaged over views) and the three
/// mesh regularizers, evaluated at `positions`.
#[allow(clippy::too_many_arguments)]
pub fn geometry_loss_with(
    positions: &[Vec3],
    faces: &[[u32; 3]],
    topo: &Topology,
    lap: &LaplacianMatrix,
    sil_preds: &[ImageBuffer],
    sil_gts: &[ImageBuffer],
    w: &GeoLossWeights,
) -> Result<GeoLoss> {
    w.validate()?;
    if sil_preds.len() != sil_gts.len() {
        return Err(Error::DimensionMismatch {
            what: "silhouette views",
            expected: sil_gts.len().to_string(),
            got: sil_preds.len().to_string(),
        });
    }
    let views = sil_preds.len().max(1) as f64;
    let mut silhouette = 0.0;
    let mut pixel_grads = Vec::with_capacity(sil_preds.len());
    for (p, g) in sil_preds.iter().zip(sil_gts) {
        let l = silhouette_loss(p, g)?;
        silhouette += l.value / views;
        pixel_grads.push(l.grad.map(|v| v * w.silhouette / views));
    }
    let lap_l = laplacian_loss_at(positions, lap)?;
    let edge_l = edge_length_loss_with(positions, topo);
    let norm_l = normal_consistency_loss_with(positions, faces, topo)?;
    let vertex_grad = (0..positions.len())
        .map(|i| lap_l.grad[i] * w.laplacian + edge_l.grad[i] * w.edge + norm_l.grad[i] * w.normal)
        .collect();
    Ok(GeoLoss {
        total: w.silhouette * silhouette + w.laplacian * lap_l.value + w.edge * edge_l.value + w.normal * norm_l.value,
        silhouette,
        laplacian: lap_l.value,
        edge: edge_l.value,
        normal: norm_l.value,
        vertex_grad,
        pixel_grads,
    })
}

pub fn geometry_loss(
    mesh: &crate::geom::TriMesh,
    lap: &LaplacianMatrix,
    sil_preds: &[ImageBuffer],
    sil_gts: &[ImageBuffer],
    w: &GeoLossWeights,
) -> Result<GeoLoss> {
    let topo = Topology::build(mesh);
    geometry_loss_with(&mesh.vertices, &mesh.faces, &topo, lap, sil_preds, sil_gts, w)
}

/// Reflectance objective with unweighted term values and weighted gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RefLoss {
    pub total: f64,
    pub rgb: f64,
    pub reg: f64,
    /// Gradient on the rendered image, for the renderer's backward pass.
    pub pixel_grad: ImageBuffer,
    /// Direct gradients on albedo texel values from the regularizer.
    pub diffuse_grad: Vec<f64>,
    pub specular_grad: Vec<f64>,
}

impl RefLoss {
    pub fn terms(&self) -> [(&'static str, f64); 2] {
        [("rgb", self.rgb), ("reg", self.reg)]
    }
}

pub fn reflectance_loss(
    pred: &ImageBuffer,
    gt: &ImageBuffer,
    diffuse: &Texture2D,
    specular: &Texture2D,
    w: &RefLossWeights,
) -> Result<RefLoss> {
    w.validate()?;
    let l1 = rgb_l1_loss(pred, gt)?;
    let (reg, diffuse_grad, specular_grad) = if w.reg == 0.0 {
        (0.0, vec![0.0; diffuse.data.len()], vec![0.0; specular.data.len()])
    } else {
        let b = bilateral_specular_reg(diffuse, specular, w)?;
        let scale = |v: Vec<f64>| v.into_iter().map(|x| x * w.reg).collect::<Vec<_>>();
        (b.value, scale(b.grad_diffuse), scale(b.grad_specular))
    };
    Ok(RefLoss {
        total: w.rgb * l1.value + w.reg * reg,
        rgb: l1.value,
        reg,
        pixel_grad: l1.grad.map(|v| v * w.rgb),
        diffuse_grad,
        specular_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(data: &[f64]) -> ImageBuffer {
        ImageBuffer::from_data(data.len(), 1, 1, data.to_vec()).unwrap()
    }

    #[test]
    fn silhouette_examples() {
        let a = img(&[1.0, 1.0, 0.0]);
        let b = img(&[0.0, 1.0, 1.0]);
        assert!((silhouette_loss(&a, &b).unwrap().value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(silhouette_loss(&b, &b).unwrap().value, 0.0);
        assert_eq!(silhouette_loss(&img(&[1.0, 0.0, 0.0]), &img(&[0.0, 0.0, 1.0])).unwrap().value, 1.0);
        assert!(matches!(silhouette_loss(&a, &img(&[0.0; 3])), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn l1_offset() {
        let a = img(&[0.2, 0.4, 0.9]);
        let b = a.map(|v| v + 0.1);
        assert!((rgb_l1_loss(&b, &a).unwrap().value - 0.1).abs() < 1e-15);
        let same = rgb_l1_loss(&a, &a).unwrap();
        assert_eq!(same.value, 0.0);
        assert!(same.grad.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn bilateral_constant_specular_is_zero() {
        let d = crate::synth::checkerboard(8, 2, Vec3::splat(0.2), Vec3::splat(0.9));
        let s = Texture2D::constant(8, 8, &[0.3; 3]);
        let b = bilateral_specular_reg(&d, &s, &RefLossWeights::default()).unwrap();
        assert_eq!(b.value, 0.0);
        assert!(b.grad_diffuse.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn default_weights() {
        let g = GeoLossWeights::default();
        assert_eq!((g.silhouette, g.laplacian, g.edge, g.normal), (1.0, 1.0, 1.0, 0.01));
        let r = RefLossWeights::default();
        assert_eq!((r.rgb, r.reg), (0.1, 1.0));
    }
}
