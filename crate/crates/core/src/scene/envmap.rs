use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::image::ImageBuffer;
use crate::scene::texture::{axis_clamp, axis_wrap, bilinear, Footprint};

pub const ENV_WIDTH: usize = 512;
pub const ENV_HEIGHT: usize = 128;

/// Tolerance on `‖dir‖ − 1` accepted by [`EnvMap::lookup`].
const UNIT_TOLERANCE: f64 = 1e-6;

/// Lat-long environment map (y up). Column `u = (atan2(dx, −dz) + π)/2π`,
/// row `v = acos(dy)/π`, so row 0 is the zenith and `−z` sits at `u = 0.5`.
///
/// The radiance grid is private so that the sampling tables can never go
/// stale: every mutation goes through [`EnvMap::set_data`], which rebuilds
/// them.
#[derive(Debug, Clone)]
pub struct EnvMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    dist: Distribution,
}

impl PartialEq for EnvMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.data == other.data
    }
}

/// Piecewise-constant sampling tables. Texel weight is luminance times the
/// texel's exact solid angle; inside a texel directions are uniform in
/// `(φ, cos θ)`, i.e. uniform in solid angle, so the density is the texel
/// probability divided by its solid angle.
#[derive(Debug, Clone)]
struct Distribution {
    black: bool,
    row_cdf: Vec<f64>,
    col_cdf: Vec<f64>,
    texel_pdf: Vec<f64>,
    cos_edges: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSample {
    pub dir: Vec3,
    pub pdf: f64,
}

#[inline]
pub fn uniform_sphere(u1: f64, u2: f64) -> Vec3 {
    let z = 1.0 - 2.0 * u1;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * u2;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

pub const UNIFORM_SPHERE_PDF: f64 = 1.0 / (4.0 * PI);

/// Lat-long coordinates of a unit direction.
#[inline]
pub fn dir_to_uv(d: Vec3) -> [f64; 2] {
    let u = (d.x.atan2(-d.z) + PI) / (2.0 * PI);
    let v = d.y.clamp(-1.0, 1.0).acos() / PI;
    [u, v]
}

/// First index `k` with `cdf[k] ≤ u < cdf[k+1]`; zero-width bins are never
/// returned.
#[inline]
fn find_bin(cdf: &[f64], u: f64) -> usize {
    let k = cdf.partition_point(|&c| c <= u);
    k.saturating_sub(1).min(cdf.len() - 2)
}

impl Distribution {
    fn build(width: usize, height: usize, data: &[f64]) -> Self {
        let cos_edges: Vec<f64> = (0..=height).map(|j| (PI * j as f64 / height as f64).cos()).collect();
        let dphi = 2.0 * PI / width as f64;
        let mut weights = vec![0.0; width * height];
        for j in 0..height {
            let solid = dphi * (cos_edges[j] - cos_edges[j + 1]);
            for i in 0..width {
                let k = j * width + i;
                let lum = Vec3::new(data[3 * k], data[3 * k + 1], data[3 * k + 2]).luminance().max(0.0);
                weights[k] = lum * solid;
            }
        }
        let mut row_cdf = vec![0.0; height + 1];
        let mut col_cdf = vec![0.0; height * (width + 1)];
        for j in 0..height {
            let row = &weights[j * width..(j + 1) * width];
            let cdf = &mut col_cdf[j * (width + 1)..(j + 1) * (width + 1)];
            for i in 0..width {
                cdf[i + 1] = cdf[i] + row[i];
            }
            let total = cdf[width];
            row_cdf[j + 1] = row_cdf[j] + total;
            if total > 0.0 {
                for c in cdf.iter_mut() {
                    *c /= total;
                }
                cdf[width] = 1.0;
            }
        }
        let total = row_cdf[height];
        let black = !(total > 0.0 && total.is_finite());
        let mut texel_pdf = vec![UNIFORM_SPHERE_PDF; width * height];
        if !black {
            for c in row_cdf.iter_mut() {
                *c /= total;
            }
            row_cdf[height] = 1.0;
            for j in 0..height {
                let solid = dphi * (cos_edges[j] - cos_edges[j + 1]);
                for i in 0..width {
                    let k = j * width + i;
                    texel_pdf[k] = weights[k] / total / solid;
                }
            }
        }
        Distribution { black, row_cdf, col_cdf, texel_pdf, cos_edges }
    }
}

impl EnvMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                what: "environment map data length",
                expected: (width * height * 3).to_string(),
                got: data.len().to_string(),
            });
        }
        if let Some(k) = data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("environment map value {} at index {k} is negative or non-finite", data[k])));
        }
        let dist = Distribution::build(width, height, &data);
        Ok(EnvMap { width, height, data, dist })
    }

    pub fn constant(width: usize, height: usize, rgb: Vec3) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb.to_array());
        }
        EnvMap::new(width, height, data).expect("constant map is valid")
    }

    pub fn from_image(img: &ImageBuffer) -> Result<Self> {
        if img.channels != 3 {
            return Err(Error::DimensionMismatch {
                what: "environment map channels",
                expected: "3".into(),
                got: img.channels.to_string(),
            });
        }
        EnvMap::new(img.width, img.height, img.data.clone())
    }

    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer { width: self.width, height: self.height, channels: 3, data: self.data.clone() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Replaces the radiance grid and rebuilds the sampling tables.
    pub fn set_data(&mut self, data: Vec<f64>) -> Result<()> {
        *self = EnvMap::new(self.width, self.height, data)?;
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> EnvMap {
        EnvMap::new(self.width, self.height, self.data.iter().map(|v| v * s).collect()).expect("scaled map is valid")
    }

    pub fn is_black(&self) -> bool {
        self.dist.black
    }

    pub fn texel(&self, k: usize) -> Vec3 {
        Vec3::new(self.data[3 * k], self.data[3 * k + 1], self.data[3 * k + 2])
    }

    pub fn lookup(&self, dir: Vec3) -> Result<Vec3> {
        let n = dir.norm();
        if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::NonUnitDirection { norm: n });
        }
        Ok(self.eval(dir))
    }

    /// Bilinear footprint: horizontal wrap, vertical clamp.
    #[inline]
    pub fn footprint(&self, dir: Vec3) -> Footprint {
        let [u, v] = dir_to_uv(dir);
        bilinear(self.width, axis_wrap(u, self.width), axis_clamp(v, self.height))
    }

    /// Lookup without the unit-length check, for renderer-internal directions.
    #[inline]
    pub fn eval(&self, dir: Vec3) -> Vec3 {
        self.eval_with(&self.footprint(dir))
    }

    #[inline]
    pub fn eval_with(&self, fp: &Footprint) -> Vec3 {
        let t = fp.texels;
        let d = &self.data;
        Vec3::new(
            fp.interpolate(t.map(|k| d[3 * k])),
            fp.interpolate(t.map(|k| d[3 * k + 1])),
            fp.interpolate(t.map(|k| d[3 * k + 2])),
        )
    }

    /// Draws a direction with density proportional to luminance times solid
    /// angle. An all-black map falls back to uniform sphere sampling.
    pub fn sample(&self, u1: f64, u2: f64) -> EnvSample {
        let d = &self.dist;
        if d.black {
            return EnvSample { dir: uniform_sphere(u1, u2), pdf: UNIFORM_SPHERE_PDF };
        }
        let w = self.width;
        let j = find_bin(&d.row_cdf, u1);
        let pr = d.row_cdf[j + 1] - d.row_cdf[j];
        let t = ((u1 - d.row_cdf[j]) / pr).clamp(0.0, 1.0);
        let cdf = &d.col_cdf[j * (w + 1)..(j + 1) * (w + 1)];
        let i = find_bin(cdf, u2);
        let pc = cdf[i + 1] - cdf[i];
        let s = ((u2 - cdf[i]) / pc).clamp(0.0, 1.0);

        let cos_t = d.cos_edges[j] + t * (d.cos_edges[j + 1] - d.cos_edges[j]);
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = 2.0 * PI * (i as f64 + s) / w as f64 - PI;
        let dir = Vec3::new(sin_t * phi.sin(), cos_t, -sin_t * phi.cos());
        EnvSample { dir, pdf: d.texel_pdf[j * w + i] }
    }

    /// Solid-angle density of [`EnvMap::sample`] at `dir`.
    pub fn pdf(&self, dir: Vec3) -> f64 {
        if self.dist.black {
            return UNIFORM_SPHERE_PDF;
        }
        let [u, v] = dir_to_uv(dir);
        let i = ((u * self.width as f64) as usize).min(self.width - 1);
        let j = ((v * self.height as f64) as usize).min(self.height - 1);
        self.dist.texel_pdf[j * self.width + i]
    }

    /// Index of the texel containing `dir` (no interpolation).
    pub fn texel_of(&self, dir: Vec3) -> usize {
        let [u, v] = dir_to_uv(dir);
        let i = ((u * self.width as f64) as usize).min(self.width - 1);
        let j = ((v * self.height as f64) as usize).min(self.height - 1);
        j * self.width + i
    }
}
