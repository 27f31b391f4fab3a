use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::image::ImageBuffer;

/// Row-major texture. `uv = (0, 0)` is the top-left corner of texel (0, 0);
/// texel `(i, j)` is centred at `((i + 0.5)/W, (j + 0.5)/H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture2D {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// The four texels a bilinear lookup touches and their weights. Indices are
/// texel indices (`y * width + x`); weights sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub texels: [usize; 4],
    pub weights: [f64; 4],
    /// Interpolation fractions along x and y.
    pub frac: [f64; 2],
}

impl Footprint {
    /// Separable lerp of four corner values. Equal corners reproduce their
    /// value exactly, which the product-of-weights form does not.
    #[inline]
    pub fn interpolate(&self, c: [f64; 4]) -> f64 {
        let [fx, fy] = self.frac;
        let top = c[0] + fx * (c[1] - c[0]);
        let bottom = c[2] + fx * (c[3] - c[2]);
        top + fy * (bottom - top)
    }
}

/// Fractional parts this close to a texel centre snap onto it so that
/// centres reproduce texel values exactly.
const CENTER_SNAP: f64 = 1e-12;

/// One-axis bilinear split: lower index, upper index, weight of the upper.
#[inline]
pub(crate) fn axis_clamp(t: f64, n: usize) -> (usize, usize, f64) {
    let x = t * n as f64 - 0.5;
    let x0 = x.floor();
    let mut f = x - x0;
    let mut i0 = x0 as i64;
    if f < CENTER_SNAP {
        f = 0.0;
    } else if f > 1.0 - CENTER_SNAP {
        f = 0.0;
        i0 += 1;
    }
    let last = n as i64 - 1;
    ((i0.clamp(0, last)) as usize, ((i0 + 1).clamp(0, last)) as usize, f)
}

#[inline]
pub(crate) fn axis_wrap(t: f64, n: usize) -> (usize, usize, f64) {
    let x = t * n as f64 - 0.5;
    let x0 = x.floor();
    let mut f = x - x0;
    let mut i0 = x0 as i64;
    if f < CENTER_SNAP {
        f = 0.0;
    } else if f > 1.0 - CENTER_SNAP {
        f = 0.0;
        i0 += 1;
    }
    let n = n as i64;
    (i0.rem_euclid(n) as usize, (i0 + 1).rem_euclid(n) as usize, f)
}

#[inline]
pub(crate) fn bilinear(width: usize, x: (usize, usize, f64), y: (usize, usize, f64)) -> Footprint {
    let (x0, x1, fx) = x;
    let (y0, y1, fy) = y;
    Footprint {
        texels: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
        weights: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        frac: [fx, fy],
    }
}

impl Texture2D {
    pub fn constant(width: usize, height: usize, value: &[f64]) -> Self {
        let mut data = Vec::with_capacity(width * height * value.len());
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Texture2D { width, height, channels: value.len(), data }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                what: "texture data length",
                expected: (width * height * channels).to_string(),
                got: data.len().to_string(),
            });
        }
        Ok(Texture2D { width, height, channels, data })
    }

    pub fn texel_count(&self) -> usize {
        self.width * self.height
    }

    /// Bilinear footprint with clamp-to-edge addressing.
    #[inline]
    pub fn footprint(&self, uv: [f64; 2]) -> Footprint {
        bilinear(self.width, axis_clamp(uv[0], self.width), axis_clamp(uv[1], self.height))
    }

    pub fn sample(&self, uv: [f64; 2]) -> Vec<f64> {
        let fp = self.footprint(uv);
        let ch = self.channels;
        (0..ch).map(|c| fp.interpolate(fp.texels.map(|t| self.data[t * ch + c]))).collect()
    }

    #[inline]
    pub fn sample_rgb_with(&self, fp: &Footprint) -> Vec3 {
        debug_assert_eq!(self.channels, 3);
        let t = fp.texels;
        let d = &self.data;
        Vec3::new(
            fp.interpolate(t.map(|k| d[3 * k])),
            fp.interpolate(t.map(|k| d[3 * k + 1])),
            fp.interpolate(t.map(|k| d[3 * k + 2])),
        )
    }

    #[inline]
    pub fn sample_scalar_with(&self, fp: &Footprint) -> f64 {
        debug_assert_eq!(self.channels, 1);
        fp.interpolate(fp.texels.map(|k| self.data[k]))
    }

    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer { width: self.width, height: self.height, channels: self.channels, data: self.data.clone() }
    }

    pub fn from_image(img: &ImageBuffer) -> Self {
        Texture2D { width: img.width, height: img.height, channels: img.channels, data: img.data.clone() }
    }
}
