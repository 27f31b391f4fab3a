//! Procedural meshes, textures, lighting and camera rigs for synthetic
//! datasets and tests.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::Result;
use crate::geom::TriMesh;
use crate::math::Vec3;
use crate::scene::{Camera, EnvMap, Texture2D};

/// Regular tetrahedron with unit circumradius, centred at the origin, faces
/// wound counter-clockwise seen from outside.
pub fn tetrahedron() -> TriMesh {
    let s = 1.0 / 3f64.sqrt();
    let v = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    TriMesh::new(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).expect("tetrahedron is valid")
}

/// Icosahedron refined `subdiv` times by edge midpoints projected onto the
/// sphere. Level `k` has `10·4^k + 2` vertices.
pub fn icosphere(subdiv: usize, radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalized());
                (verts.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    TriMesh::new(verts, faces).expect("icosphere is valid")
}

/// Latitude/longitude sphere with UVs. Seam vertices are duplicated so every
/// vertex has a single UV, and each pole is split into one vertex per
/// longitude sector (at the sector's centre `u`). `u` follows longitude, `v`
/// grows from the north pole (+y).
pub fn uv_sphere(n_lat: usize, n_lon: usize, radius: f64) -> TriMesh {
    assert!(n_lat >= 2 && n_lon >= 3);
    let mut verts = Vec::new();
    let mut uvs = Vec::new();
    for i in 0..n_lon {
        verts.push(Vec3::new(0.0, radius, 0.0));
        uvs.push([(i as f64 + 0.5) / n_lon as f64, 0.0]);
    }
    let ring_start = verts.len();
    for j in 1..n_lat {
        let theta = PI * j as f64 / n_lat as f64;
        let (st, ct) = theta.sin_cos();
        for i in 0..=n_lon {
            let phi = 2.0 * PI * i as f64 / n_lon as f64;
            let (sp, cp) = if i == n_lon { (0.0, 1.0) } else { phi.sin_cos() };
            verts.push(Vec3::new(st * sp, ct, st * cp) * radius);
            uvs.push([i as f64 / n_lon as f64, j as f64 / n_lat as f64]);
        }
    }
    let bottom_start = verts.len();
    for i in 0..n_lon {
        verts.push(Vec3::new(0.0, -radius, 0.0));
        uvs.push([(i as f64 + 0.5) / n_lon as f64, 1.0]);
    }
    let ring = |j: usize, i: usize| (ring_start + (j - 1) * (n_lon + 1) + i) as u32;
    let mut faces = Vec::new();
    for i in 0..n_lon {
        faces.push([i as u32, ring(1, i), ring(1, i + 1)]);
    }
    for j in 1..n_lat - 1 {
        for i in 0..n_lon {
            let (a, b, c, d) = (ring(j, i), ring(j, i + 1), ring(j + 1, i), ring(j + 1, i + 1));
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    for i in 0..n_lon {
        faces.push([ring(n_lat - 1, i), (bottom_start + i) as u32, ring(n_lat - 1, i + 1)]);
    }
    TriMesh::new(verts, faces).and_then(|m| m.with_uvs(uvs)).expect("uv sphere is valid")
}

/// Smooth bounded field on the unit sphere with values in [−1, 1].
pub fn bump_field(d: Vec3) -> f64 {
    let f = (2.1 * d.x + 0.3).sin() * (1.7 * d.y).cos() + 0.6 * (2.3 * d.z + 1.1).sin() + 0.4 * (1.3 * (d.x + d.y)).cos();
    f / 2.0
}

/// Moves every vertex radially by `amplitude · bump_field(direction)`
/// relative to its distance from the origin.
pub fn perturb_radial(mesh: &TriMesh, amplitude: f64) -> TriMesh {
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        let r = v.norm();
        if r > 0.0 {
            let d = *v / r;
            *v = d * (r * (1.0 + amplitude * bump_field(d)));
        }
    }
    out
}

/// Two-colour checkerboard with square cells of `cell` texels.
pub fn checkerboard(res: usize, cell: usize, a: Vec3, b: Vec3) -> Texture2D {
    let mut data = Vec::with_capacity(res * res * 3);
    for y in 0..res {
        for x in 0..res {
            let c = if ((x / cell) + (y / cell)) % 2 == 0 { a } else { b };
            data.extend_from_slice(&c.to_array());
        }
    }
    Texture2D { width: res, height: res, channels: 3, data }
}

/// Smooth coloured sky used as an alternative lighting for relighting
/// checks: a warm key light from one side over a blue-grey gradient.
pub fn sky_envmap(width: usize, height: usize) -> EnvMap {
    let key = Vec3::new(0.6, 0.5, -0.6).normalized();
    let mut data = Vec::with_capacity(width * height * 3);
    for j in 0..height {
        let theta = PI * (j as f64 + 0.5) / height as f64;
        for i in 0..width {
            let phi = 2.0 * PI * (i as f64 + 0.5) / width as f64 - PI;
            let d = Vec3::new(theta.sin() * phi.sin(), theta.cos(), -theta.sin() * phi.cos());
            let up = 0.5 * (d.y + 1.0);
            let base = Vec3::new(0.25, 0.3, 0.4) * (0.4 + 0.6 * up);
            let lobe = d.dot(key).max(0.0).powi(8) * 2.0;
            let c = base + Vec3::new(1.0, 0.85, 0.6) * lobe;
            data.extend_from_slice(&c.to_array());
        }
    }
    EnvMap::new(width, height, data).expect("sky is valid")
}

/// Unit directions on the upper hemisphere (`y ≥ 0`) from a Fibonacci
/// lattice. `phase` rotates the lattice in azimuth so that a second call
/// with a different phase yields interleaved, unseen directions.
pub fn fibonacci_hemisphere(n: usize, phase: f64) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let y = (k as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * k as f64 + phase;
            Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Cameras on a hemisphere of radius `distance` around `center`, looking at
/// it, with a 60° vertical field of view.
pub fn hemisphere_cameras(n: usize, phase: f64, center: Vec3, distance: f64, width: usize, height: usize) -> Result<Vec<Camera>> {
    let focal = 0.5 * height as f64 / (PI / 6.0).tan();
    fibonacci_hemisphere(n, phase)
        .into_iter()
        .map(|d| Camera::look_at(center + d * distance, center, Vec3::new(0.0, 1.0, 0.0), width, height, focal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::face_normals;

    #[test]
    fn icosphere_counts() {
        for k in 0..4 {
            let m = icosphere(k, 1.0);
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(k as u32) + 2);
            assert_eq!(m.face_count(), 20 * 4usize.pow(k as u32));
        }
    }

    #[test]
    fn closed_meshes_face_outward() {
        for m in [tetrahedron(), icosphere(2, 1.0), uv_sphere(8, 12, 1.0)] {
            let n = face_normals(&m).unwrap();
            for (f, nf) in n.iter().enumerate() {
                let [a, b, c] = m.triangle(f);
                assert!(nf.dot((a + b + c) / 3.0) > 0.0);
            }
        }
    }

    #[test]
    fn hemisphere_is_upper() {
        for d in fibonacci_hemisphere(20, 0.0).into_iter().chain(fibonacci_hemisphere(10, 1.0)) {
            assert!(d.y >= 0.0);
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
    }
}
