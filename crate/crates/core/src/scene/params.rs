use crate::error::{Error, Result};
use crate::geom::TriMesh;
use crate::math::{logit, sigmoid, Vec3};
use crate::scene::envmap::{EnvMap, ENV_HEIGHT, ENV_WIDTH};
use crate::scene::texture::Texture2D;

pub const ROUGHNESS_MIN: f64 = 0.01;
pub const INIT_ENV: f64 = 0.5;
pub const INIT_DIFFUSE: f64 = 0.5;
pub const INIT_SPECULAR: f64 = 0.04;
pub const INIT_ROUGHNESS: f64 = 0.3;

/// Everything the renderers read: geometry, the three material textures and
/// the lighting.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub mesh: TriMesh,
    /// ρ_d, 3 channels in [0, 1].
    pub diffuse: Texture2D,
    /// ρ_s, 3 channels in [0, 1].
    pub specular: Texture2D,
    /// α, 1 channel in [0.01, 1].
    pub roughness: Texture2D,
    pub envmap: EnvMap,
}

impl SceneParams {
    /// Checksum over textures and envmap, used to assert that the geometry
    /// phase leaves materials untouched.
    pub fn material_checksum(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for block in [&self.diffuse.data, &self.specular.data, &self.roughness.data] {
            for v in block.iter() {
                h = crate::math::hash_combine(h, v.to_bits());
            }
        }
        for v in self.envmap.data() {
            h = crate::math::hash_combine(h, v.to_bits());
        }
        h
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.check_uvs()?;
        for (name, tex, ch) in [("diffuse", &self.diffuse, 3), ("specular", &self.specular, 3), ("roughness", &self.roughness, 1)] {
            if tex.channels != ch {
                return Err(Error::DimensionMismatch {
                    what: "texture channels",
                    expected: format!("{ch} for {name}"),
                    got: tex.channels.to_string(),
                });
            }
        }
        if (self.diffuse.width, self.diffuse.height) != (self.specular.width, self.specular.height) {
            return Err(Error::DimensionMismatch {
                what: "diffuse/specular resolution",
                expected: format!("{}x{}", self.diffuse.width, self.diffuse.height),
                got: format!("{}x{}", self.specular.width, self.specular.height),
            });
        }
        Ok(())
    }
}

/// Initial scene for the reflectance phase: constant grey lighting, diffuse
/// from baked vertex colours when present, dielectric-like specular.
pub fn init_scene(mesh: TriMesh, tex_resolution: usize) -> Result<SceneParams> {
    mesh.check_uvs()?;
    if tex_resolution == 0 {
        return Err(Error::Config("tex_resolution must be positive".into()));
    }
    let r = tex_resolution;
    let diffuse = match &mesh.colors {
        Some(colors) => bake_vertex_colors(&mesh, colors, r),
        None => Texture2D::constant(r, r, &[INIT_DIFFUSE; 3]),
    };
    Ok(SceneParams {
        diffuse,
        specular: Texture2D::constant(r, r, &[INIT_SPECULAR; 3]),
        roughness: Texture2D::constant(r, r, &[INIT_ROUGHNESS]),
        envmap: EnvMap::constant(ENV_WIDTH, ENV_HEIGHT, Vec3::splat(INIT_ENV)),
        mesh,
    })
}

/// Rasterizes per-vertex colours into UV space at texel centres. Texels no
/// triangle covers are filled from covered neighbours, then from the mean
/// vertex colour.
fn bake_vertex_colors(mesh: &TriMesh, colors: &[Vec3], res: usize) -> Texture2D {
    let uvs = mesh.uvs.as_ref().expect("checked by caller");
    let mut data = vec![0.0; res * res * 3];
    let mut covered = vec![false; res * res];
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| i as usize);
        let p = [uvs[a], uvs[b], uvs[c]].map(|uv| [uv[0] * res as f64, uv[1] * res as f64]);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if det.abs() < 1e-14 {
            continue;
        }
        let lo_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let hi_x = (p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(res);
        let lo_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let hi_y = (p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(res);
        for y in lo_y..hi_y {
            for x in lo_x..hi_x {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let w1 = ((px - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (py - p[0][1])) / det;
                let w2 = ((p[1][0] - p[0][0]) * (py - p[0][1]) - (px - p[0][0]) * (p[1][1] - p[0][1])) / det;
                let w0 = 1.0 - w1 - w2;
                if w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9 {
                    continue;
                }
                let col = colors[a] * w0 + colors[b] * w1 + colors[c] * w2;
                let k = y * res + x;
                data[3 * k..3 * k + 3].copy_from_slice(&col.to_array());
                covered[k] = true;
            }
        }
    }
    dilate(&mut data, &mut covered, res, 4);
    let mean = colors.iter().fold(Vec3::ZERO, |acc, &c| acc + c) / colors.len().max(1) as f64;
    for k in 0..res * res {
        if !covered[k] {
            data[3 * k..3 * k + 3].copy_from_slice(&mean.to_array());
        }
    }
    Texture2D { width: res, height: res, channels: 3, data }
}

fn dilate(data: &mut [f64], covered: &mut [bool], res: usize, passes: usize) {
    for _ in 0..passes {
        let snapshot = covered.to_vec();
        let values = data.to_vec();
        for y in 0..res {
            for x in 0..res {
                let k = y * res + x;
                if snapshot[k] {
                    continue;
                }
                let mut sum = Vec3::ZERO;
                let mut n = 0;
                for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= res as i64 || ny >= res as i64 {
                        continue;
                    }
                    let q = ny as usize * res + nx as usize;
                    if snapshot[q] {
                        sum += Vec3::new(values[3 * q], values[3 * q + 1], values[3 * q + 2]);
                        n += 1;
                    }
                }
                if n > 0 {
                    data[3 * k..3 * k + 3].copy_from_slice(&(sum / n as f64).to_array());
                    covered[k] = true;
                }
            }
        }
    }
}

/// Albedo = sigmoid(logit).
pub fn albedo_from_logit(l: f64) -> f64 {
    sigmoid(l)
}

pub fn albedo_to_logit(a: f64) -> f64 {
    logit(a)
}

/// Roughness = 0.01 + 0.99·sigmoid(logit).
pub fn roughness_from_logit(l: f64) -> f64 {
    ROUGHNESS_MIN + (1.0 - ROUGHNESS_MIN) * sigmoid(l)
}

pub fn roughness_to_logit(r: f64) -> f64 {
    logit((r - ROUGHNESS_MIN) / (1.0 - ROUGHNESS_MIN))
}

/// Envmap radiance = exp(logit).
pub fn env_from_logit(l: f64) -> f64 {
    l.exp()
}

/// Zero radiance maps to a large negative logit rather than −∞.
pub fn env_to_logit(v: f64) -> f64 {
    v.max(1e-12).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn defaults_without_colors() {
        let scene = init_scene(synth::uv_sphere(8, 12, 1.0), 16).unwrap();
        assert!(scene.diffuse.data.iter().all(|&v| v == 0.5));
        assert!(scene.specular.data.iter().all(|&v| v == 0.04));
        assert!(scene.roughness.data.iter().all(|&v| v == 0.3));
        assert_eq!((scene.envmap.width(), scene.envmap.height()), (512, 128));
        assert!(scene.envmap.data().iter().all(|&v| v == 0.5));
        assert_eq!((scene.diffuse.width, scene.roughness.height), (16, 16));
    }

    #[test]
    fn missing_uvs_rejected() {
        assert!(matches!(init_scene(synth::icosphere(1, 1.0), 8), Err(Error::MissingUvs)));
    }

    #[test]
    fn baked_constant_color() {
        let m = synth::uv_sphere(8, 12, 1.0);
        let n = m.vertex_count();
        let m = m.with_colors(vec![Vec3::new(0.2, 0.4, 0.6); n]).unwrap();
        let scene = init_scene(m, 8).unwrap();
        for px in scene.diffuse.data.chunks(3) {
            assert!((px[0] - 0.2).abs() < 1e-12 && (px[1] - 0.4).abs() < 1e-12 && (px[2] - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_roundtrips() {
        for v in [0.04, 0.3, 0.5, 0.9] {
            assert!((albedo_from_logit(albedo_to_logit(v)) - v).abs() < 1e-12);
            assert!((roughness_from_logit(roughness_to_logit(v)) - v).abs() < 1e-12);
            assert!((env_from_logit(env_to_logit(v)) - v).abs() < 1e-12);
        }
    }
}
