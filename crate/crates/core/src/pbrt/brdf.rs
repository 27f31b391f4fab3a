//! Cook-Torrance style BRDF without Fresnel:
//! `f = ρ_d/π + ρ_s·D·G / (π·cos_i·cos_o)` with GGX `D` and separable
//! Smith-GGX `G`. All directions here are in the local shading frame
//! (normal = +z) unless a function says otherwise.

use std::f64::consts::{FRAC_1_PI, PI};

use crate::math::{Frame, Vec3};
use crate::scene::SceneParams;

#[inline]
pub fn ggx_d(cos_nh: f64, alpha: f64) -> f64 {
    if cos_nh <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let t = cos_nh * cos_nh * (a2 - 1.0) + 1.0;
    a2 / (PI * t * t)
}

#[inline]
pub fn ggx_d_dalpha(cos_nh: f64, alpha: f64) -> f64 {
    if cos_nh <= 0.0 {
        return 0.0;
    }
    let c2 = cos_nh * cos_nh;
    let t = c2 * (alpha * alpha - 1.0) + 1.0;
    2.0 * alpha * (1.0 - c2 - alpha * alpha * c2) / (PI * t * t * t)
}

#[inline]
pub fn smith_g1(c: f64, alpha: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    2.0 * c / (c + (a2 + (1.0 - a2) * c * c).sqrt())
}

#[inline]
fn smith_g1_dalpha(c: f64, alpha: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let r = (a2 + (1.0 - a2) * c * c).sqrt();
    let s = c + r;
    -2.0 * c / (s * s) * alpha * (1.0 - c * c) / r
}

#[inline]
pub fn smith_g(cos_ni: f64, cos_no: f64, alpha: f64) -> f64 {
    smith_g1(cos_ni, alpha) * smith_g1(cos_no, alpha)
}

/// Material values at one surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub diffuse: Vec3,
    pub specular: Vec3,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrdfSample {
    pub wi: Vec3,
    pub pdf: f64,
    pub f: Vec3,
}

/// Scalar specular factor `S = D·G/(π·cos_i·cos_o)` and `∂S/∂α`; the
/// specular term is `ρ_s·S`. Zero outside the upper hemisphere.
#[inline]
pub fn specular_factor(wo: Vec3, wi: Vec3, alpha: f64) -> (f64, f64) {
    let (co, ci) = (wo.z, wi.z);
    if co <= 0.0 || ci <= 0.0 {
        return (0.0, 0.0);
    }
    let h = (wo + wi).normalized();
    let denom = PI * ci * co;
    let d = ggx_d(h.z, alpha);
    let (g1i, g1o) = (smith_g1(ci, alpha), smith_g1(co, alpha));
    let dd = ggx_d_dalpha(h.z, alpha);
    let dg = smith_g1_dalpha(ci, alpha) * g1o + g1i * smith_g1_dalpha(co, alpha);
    (d * g1i * g1o / denom, (dd * g1i * g1o + d * dg) / denom)
}

impl Material {
    pub fn eval(&self, wo: Vec3, wi: Vec3) -> Vec3 {
        if wo.z <= 0.0 || wi.z <= 0.0 {
            return Vec3::ZERO;
        }
        let (s, _) = specular_factor(wo, wi, self.alpha);
        self.diffuse * FRAC_1_PI + self.specular * s
    }

    /// Probability of choosing the cosine lobe.
    #[inline]
    pub fn diffuse_weight(&self) -> f64 {
        let (ld, ls) = (self.diffuse.luminance().max(0.0), self.specular.luminance().max(0.0));
        if ld + ls > 0.0 {
            ld / (ld + ls)
        } else {
            1.0
        }
    }

    /// Density over the whole sphere of [`Material::sample`]'s directions.
    pub fn pdf(&self, wo: Vec3, wi: Vec3) -> f64 {
        let pd = self.diffuse_weight();
        let mut pdf = 0.0;
        if pd > 0.0 && wi.z > 0.0 {
            pdf += pd * wi.z * FRAC_1_PI;
        }
        if pd < 1.0 {
            let h = wo + wi;
            if h.norm_squared() > 0.0 {
                let h = h.normalized();
                let oh = wo.dot(h);
                if h.z > 0.0 && oh > 0.0 {
                    pdf += (1.0 - pd) * ggx_d(h.z, self.alpha) * h.z / (4.0 * oh);
                }
            }
        }
        pdf
    }

    /// Mixture sample: `u_sel` picks the lobe, `u` drives the direction.
    /// Returns `None` when the GGX half-vector faces away from `wo`.
    /// Directions below the surface are returned with `f = 0`.
    pub fn sample(&self, wo: Vec3, u_sel: f64, u: [f64; 2]) -> Option<BrdfSample> {
        let pd = self.diffuse_weight();
        let wi = if u_sel < pd {
            cosine_hemisphere(u)
        } else {
            let h = ggx_half_vector(self.alpha, u);
            let oh = wo.dot(h);
            if oh <= 0.0 {
                return None;
            }
            h * (2.0 * oh) - wo
        };
        let pdf = self.pdf(wo, wi);
        if !(pdf > 0.0) {
            return None;
        }
        Some(BrdfSample { wi, pdf, f: self.eval(wo, wi) })
    }
}

/// Cosine-weighted hemisphere direction via the concentric disk map.
pub fn cosine_hemisphere(u: [f64; 2]) -> Vec3 {
    let (a, b) = (2.0 * u[0] - 1.0, 2.0 * u[1] - 1.0);
    let (r, phi) = if a == 0.0 && b == 0.0 {
        (0.0, 0.0)
    } else if a.abs() > b.abs() {
        (a, PI / 4.0 * (b / a))
    } else {
        (b, PI / 2.0 - PI / 4.0 * (a / b))
    };
    let (x, y) = (r * phi.cos(), r * phi.sin());
    Vec3::new(x, y, (1.0 - x * x - y * y).max(0.0).sqrt())
}

/// GGX half vector distributed as `D(h)·cos θ_h`.
pub fn ggx_half_vector(alpha: f64, u: [f64; 2]) -> Vec3 {
    let tan2 = alpha * alpha * u[0] / (1.0 - u[0]);
    let cos_t = 1.0 / (1.0 + tan2).sqrt();
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * u[1];
    Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
}

/// Material of `scene` at texture coordinate `uv`.
pub fn material_at(scene: &SceneParams, uv: [f64; 2]) -> Material {
    let fd = scene.diffuse.footprint(uv);
    let fr = scene.roughness.footprint(uv);
    let fs = if (scene.specular.width, scene.specular.height) == (scene.diffuse.width, scene.diffuse.height) {
        fd
    } else {
        scene.specular.footprint(uv)
    };
    Material {
        diffuse: scene.diffuse.sample_rgb_with(&fd),
        specular: scene.specular.sample_rgb_with(&fs),
        alpha: scene.roughness.sample_scalar_with(&fr),
    }
}

/// BRDF of `scene` at `uv` for world-space unit vectors.
pub fn eval_brdf(scene: &SceneParams, uv: [f64; 2], normal: Vec3, wo: Vec3, wi: Vec3) -> Vec3 {
    let frame = Frame::from_normal(normal);
    material_at(scene, uv).eval(frame.to_local(wo), frame.to_local(wi))
}

/// World-space mixture sample of the BRDF of `scene` at `uv`.
pub fn sample_brdf(scene: &SceneParams, uv: [f64; 2], normal: Vec3, wo: Vec3, u_sel: f64, u: [f64; 2]) -> Option<BrdfSample> {
    let frame = Frame::from_normal(normal);
    let s = material_at(scene, uv).sample(frame.to_local(wo), u_sel, u)?;
    Some(BrdfSample { wi: frame.to_world(s.wi), ..s })
}

/// Density of [`sample_brdf`] for world-space directions.
pub fn pdf_brdf(scene: &SceneParams, uv: [f64; 2], normal: Vec3, wo: Vec3, wi: Vec3) -> f64 {
    let frame = Frame::from_normal(normal);
    material_at(scene, uv).pdf(frame.to_local(wo), frame.to_local(wi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ggx_closed_forms() {
        assert!((ggx_d(1.0, 0.5) - 1.0 / (PI * 0.25)).abs() < 1e-12);
        for c in [0.1, 0.5, 0.9] {
            assert!((ggx_d(c, 1.0) - FRAC_1_PI).abs() < 1e-15);
        }
        assert_eq!(ggx_d(-0.2, 0.5), 0.0);
    }

    #[test]
    fn smith_closed_forms() {
        for a in [0.01, 0.3, 1.0] {
            assert!((smith_g(1.0, 1.0, a) - 1.0).abs() < 1e-15);
        }
        assert!((smith_g1(0.5, 1.0) - 1.0 / 1.5).abs() < 1e-15);
        assert!((smith_g(0.5, 0.5, 1.0) - 4.0 / 9.0).abs() < 1e-15);
        assert!((smith_g(0.3, 0.7, 1e-9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brdf_closed_forms() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let lam = Material { diffuse: Vec3::splat(0.6), specular: Vec3::ZERO, alpha: 0.5 };
        let wo = Vec3::new(0.3, 0.1, 0.8).normalized();
        let wi = Vec3::new(-0.5, 0.2, 0.6).normalized();
        assert!((lam.eval(wo, wi).x - 0.6 / PI).abs() < 1e-15);
        assert_eq!(lam.eval(wo, Vec3::new(0.0, 0.6, -0.8)), Vec3::ZERO);
        let spec = Material { diffuse: Vec3::ZERO, specular: Vec3::ONE, alpha: 0.5 };
        let v = spec.eval(n, n).x;
        assert!((v - 1.0 / (PI * 0.25) / PI).abs() < 1e-12, "{v}");
    }

    #[test]
    fn alpha_derivatives_match_differences() {
        let wo = Vec3::new(0.3, -0.2, 0.9).normalized();
        let wi = Vec3::new(-0.4, 0.5, 0.7).normalized();
        for a in [0.05, 0.3, 0.8] {
            let h = 1e-6;
            let fd = (specular_factor(wo, wi, a + h).0 - specular_factor(wo, wi, a - h).0) / (2.0 * h);
            let an = specular_factor(wo, wi, a).1;
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{a}: {fd} vs {an}");
        }
    }

    #[test]
    fn sample_pdf_is_consistent() {
        let m = Material { diffuse: Vec3::splat(0.3), specular: Vec3::splat(0.4), alpha: 0.2 };
        let wo = Vec3::new(0.2, 0.1, 0.95).normalized();
        for k in 0..200 {
            let u = [(k as f64 + 0.5) / 200.0, ((k * 73) % 200) as f64 / 200.0 + 0.001];
            if let Some(s) = m.sample(wo, (k % 7) as f64 / 7.0, u) {
                assert!((s.pdf - m.pdf(wo, s.wi)).abs() <= 1e-12 * s.pdf);
            }
        }
    }
}
