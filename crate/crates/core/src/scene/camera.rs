use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Pinhole camera. Camera space is right-handed with the camera looking down
/// −z and +y up; image rows grow downward, so `v = cy − fy·y/(−z)`.
/// Pixel `(i, j)` covers `[i, i+1) × [j, j+1)` in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Rotation part of world-to-camera.
    pub rotation: Mat3,
    /// Translation part of world-to-camera.
    pub translation: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    /// Distance along the viewing axis (`−z_cam`); positive in front.
    pub depth: f64,
    /// Set when the point is on or behind the camera plane.
    pub behind: bool,
}

/// On-disk camera record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
    ) -> Result<Self> {
        let cam = Camera { width, height, fx, fy, cx, cy, rotation, translation };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("zero image size".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive ({}, {})", self.fx, self.fy)));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidCamera(format!("principal point ({}, {}) outside the image", self.cx, self.cy)));
        }
        let err = self.rotation.orthonormality_error();
        if err >= 1e-6 {
            return Err(Error::InvalidCamera(format!("rotation is not orthonormal (‖RᵀR − I‖ = {err:e})")));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, principal point at the image
    /// centre.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, focal: f64) -> Result<Self> {
        let back = (eye - target).normalized();
        let mut right = up.cross(back);
        if right.norm() < 1e-9 {
            // Looking straight along `up`; pick any perpendicular.
            right = Vec3::new(1.0, 0.0, 0.0).cross(back);
            if right.norm() < 1e-9 {
                right = Vec3::new(0.0, 0.0, 1.0).cross(back);
            }
        }
        let right = right.normalized();
        let cam_up = back.cross(right);
        let rotation = Mat3 { rows: [right, cam_up, back] };
        let translation = -rotation.mul_vec(eye);
        Camera::new(width, height, focal, focal, width as f64 / 2.0, height as f64 / 2.0, rotation, translation)
    }

    #[inline]
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn center(&self) -> Vec3 {
        -self.rotation.mul_transpose_vec(self.translation)
    }

    pub fn project(&self, p: Vec3) -> Projection {
        let c = self.to_camera(p);
        let depth = -c.z;
        let behind = depth <= 1e-9;
        let pixel = [self.fx * c.x / depth + self.cx, self.cy - self.fy * c.y / depth];
        Projection { pixel, depth, behind }
    }

    /// World point at `depth` along the ray through pixel coordinates `pixel`.
    pub fn unproject(&self, pixel: [f64; 2], depth: f64) -> Vec3 {
        let c = Vec3::new((pixel[0] - self.cx) / self.fx * depth, (self.cy - pixel[1]) / self.fy * depth, -depth);
        self.rotation.mul_transpose_vec(c - self.translation)
    }

    /// Unit world-space ray through pixel coordinates `pixel`.
    pub fn ray(&self, pixel: [f64; 2]) -> (Vec3, Vec3) {
        let d = Vec3::new((pixel[0] - self.cx) / self.fx, (self.cy - pixel[1]) / self.fy, -1.0);
        (self.center(), self.rotation.mul_transpose_vec(d).normalized())
    }

    /// Intrinsics for an image downsampled by an integer factor.
    pub fn downsampled(&self, factor: usize) -> Camera {
        if factor <= 1 {
            return self.clone();
        }
        let f = factor as f64;
        Camera {
            width: self.width / factor,
            height: self.height / factor,
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            ..self.clone()
        }
    }

    pub fn to_record(&self) -> CameraRecord {
        CameraRecord {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            r: self.rotation.to_row_major(),
            t: self.translation.to_array(),
        }
    }

    pub fn from_record(r: &CameraRecord) -> Result<Self> {
        Camera::new(r.width, r.height, r.fx, r.fy, r.cx, r.cy, Mat3::from_row_major(r.r), Vec3::from_array(r.t))
    }
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<CameraRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
    records.iter().map(Camera::from_record).collect()
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    let records: Vec<CameraRecord> = cameras.iter().map(Camera::to_record).collect();
    let text = serde_json::to_string_pretty(&records).expect("camera records serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
