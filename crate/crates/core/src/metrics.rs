//! Image quality metrics for held-out evaluation.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// every fully interior window position and every channel.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall { width: a.width, height: a.height, window: SSIM_WINDOW });
    }
    if a.data == b.data {
        return Ok(1.0);
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let g = gaussian_window();
    let (ow, oh) = (a.width - SSIM_WINDOW + 1, a.height - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..a.channels {
        for y0 in 0..oh {
            for x0 in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, gy) in g.iter().enumerate() {
                    for (i, gx) in g.iter().enumerate() {
                        let w = gy * gx;
                        let va = a.get(x0 + i, y0 + j, c);
                        let vb = b.get(x0 + i, y0 + j, c);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
    }
    Ok(total / (ow * oh * a.channels) as f64)
}

/// Clamps linear radiance to [0, 1] and applies the sRGB transfer curve.
pub fn tonemap(img: &ImageBuffer) -> ImageBuffer {
    img.map(|v| v.clamp(0.0, 1.0)).to_srgb()
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewMetrics {
    pub view: usize,
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub views: Vec<ViewMetrics>,
    #[serde(serialize_with = "serialize_db")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl MetricReport {
    /// Scores rendered views against references after tone mapping both.
    pub fn evaluate(rendered: &[ImageBuffer], reference: &[ImageBuffer]) -> Result<MetricReport> {
        if rendered.len() != reference.len() || rendered.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "metric views",
                expected: reference.len().to_string(),
                got: rendered.len().to_string(),
            });
        }
        let mut views = Vec::with_capacity(rendered.len());
        for (i, (r, g)) in rendered.iter().zip(reference).enumerate() {
            let (r, g) = (tonemap(r), tonemap(g));
            views.push(ViewMetrics { view: i, psnr: psnr(&r, &g, 1.0)?, ssim: ssim(&r, &g, 1.0)? });
        }
        let n = views.len() as f64;
        Ok(MetricReport {
            mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
            mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
            views,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_forms() {
        let a = ImageBuffer::filled(4, 4, 3, 0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &a.map(|v| v + 0.1), 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr(&a, &a.map(|v| v + 0.01), 1.0).unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_constant_images() {
        let a = ImageBuffer::filled(16, 16, 1, 0.5);
        let b = ImageBuffer::filled(16, 16, 1, 0.6);
        let c1 = 1e-4;
        let expected = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        assert!((ssim(&a, &b, 1.0).unwrap() - expected).abs() < 1e-12);
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        assert!(matches!(ssim(&ImageBuffer::new(8, 8, 1), &ImageBuffer::new(8, 8, 1), 1.0), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn infinite_psnr_serializes_as_string() {
        let v = ViewMetrics { view: 0, psnr: f64::INFINITY, ssim: 1.0 };
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"view":0,"psnr":"inf","ssim":1.0}"#);
    }
}
