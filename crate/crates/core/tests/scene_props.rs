//! Environment-map sampling, camera and texture invariants.

use std::f64::consts::PI;

use invren::math::{Mat3, Vec3};
use invren::scene::envmap::{dir_to_uv, UNIFORM_SPHERE_PDF};
use invren::scene::{Camera, EnvMap, Texture2D};
use invren::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_envmap(seed: u64, w: usize, h: usize) -> EnvMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EnvMap::new(w, h, (0..w * h * 3).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap()
}

#[test]
fn constant_map_samples_uniformly() {
    let env = EnvMap::constant(512, 128, Vec3::splat(0.5));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let s = env.sample(rng.random(), rng.random());
        assert!((s.pdf - 1.0 / (4.0 * PI)).abs() < 1e-9 * s.pdf, "{}", s.pdf);
    }
}

#[test]
fn sampled_pdf_agrees_with_evaluated_pdf() {
    let env = random_envmap(3, 64, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let s = env.sample(rng.random(), rng.random());
        let p = env.pdf(s.dir);
        assert!((s.pdf - p).abs() <= 1e-6 * p, "{} vs {p}", s.pdf);
    }
}

#[test]
fn single_bright_texel_captures_samples() {
    let (w, h) = (64, 16);
    let mut data = vec![1e-4; w * h * 3];
    let k = 5 * w + 17;
    data[3 * k..3 * k + 3].copy_from_slice(&[1e3, 1e3, 1e3]);
    let env = EnvMap::new(w, h, data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let inside = (0..n).filter(|_| env.texel_of(env.sample(rng.random(), rng.random()).dir) == k).count();
    assert!(inside as f64 >= 0.99 * n as f64, "{inside} of {n}");
}

#[test]
fn pdf_integrates_to_one_over_the_sphere() {
    // 10⁵ directions stratified in (cos θ, φ), each cell of equal solid angle.
    let env = random_envmap(11, 32, 8);
    let (nz, nphi) = (250, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sum = 0.0;
    for i in 0..nz {
        for j in 0..nphi {
            let z = -1.0 + 2.0 * (i as f64 + rng.random::<f64>()) / nz as f64;
            let phi = 2.0 * PI * (j as f64 + rng.random::<f64>()) / nphi as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            sum += env.pdf(Vec3::new(r * phi.cos(), z, r * phi.sin()));
        }
    }
    let integral = sum * 4.0 * PI / (nz * nphi) as f64;
    assert!((integral - 1.0).abs() < 0.01, "{integral}");
}

#[test]
fn black_map_falls_back_to_uniform_sphere() {
    let env = EnvMap::constant(16, 8, Vec3::ZERO);
    let s = env.sample(0.3, 0.7);
    assert_eq!(s.pdf, UNIFORM_SPHERE_PDF);
    assert!((s.dir.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn lookup_conventions() {
    let env = random_envmap(4, 32, 8);
    assert!(dir_to_uv(Vec3::new(0.0, 1.0, 0.0))[1] == 0.0);
    assert!((dir_to_uv(Vec3::new(0.0, 0.0, -1.0))[0] - 0.5).abs() < 1e-15);
    assert!(env.lookup(Vec3::new(0.0, 2.0, 0.0)).is_err());
    let c = EnvMap::constant(32, 8, Vec3::new(0.2, 0.3, 0.4));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalized();
        assert_eq!(c.lookup(d).unwrap(), Vec3::new(0.2, 0.3, 0.4));
    }
}

#[test]
fn lookup_is_continuous_across_the_seam() {
    // The seam is at u = 0/1, i.e. direction (0, ·, +1) approached from ±x.
    let env = synth::sky_envmap(64, 16);
    for y in [-0.6, 0.0, 0.5] {
        let eps = 1e-9;
        let a = env.lookup(Vec3::new(eps, y, 1.0).normalized()).unwrap();
        let b = env.lookup(Vec3::new(-eps, y, 1.0).normalized()).unwrap();
        assert!((a - b).norm() < 1e-6, "{a:?} vs {b:?}");
    }
}

#[test]
fn projection_examples() {
    let cam = Camera::new(128, 128, 100.0, 100.0, 64.0, 64.0, Mat3::IDENTITY, Vec3::ZERO).unwrap();
    let p = cam.project(Vec3::new(0.0, 0.0, -1.0));
    assert_eq!(p.pixel, [64.0, 64.0]);
    assert_eq!(p.depth, 1.0);
    let q = cam.project(Vec3::new(0.5, 0.0, -1.0));
    assert_eq!(q.pixel, [114.0, 64.0]);
    assert!(cam.project(Vec3::new(0.0, 0.0, 1.0)).behind);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unproject_inverts_project(
        eye in prop::array::uniform3(-4.0f64..4.0),
        pixel in prop::array::uniform2(0.0f64..64.0),
        depth in 0.1f64..20.0,
    ) {
        let eye = Vec3::from_array(eye);
        prop_assume!(eye.norm() > 0.5);
        let cam = Camera::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 64, 48, 55.0);
        prop_assume!(cam.is_ok());
        let cam = cam.unwrap();
        let p = cam.unproject(pixel, depth);
        let back = cam.project(p);
        prop_assert!((back.pixel[0] - pixel[0]).abs() < 1e-6 && (back.pixel[1] - pixel[1]).abs() < 1e-6);
        prop_assert!((back.depth - depth).abs() < 1e-6);
        prop_assert!((cam.unproject(back.pixel, back.depth) - p).norm() < 1e-6);
    }

    #[test]
    fn texture_reproduces_texel_centres(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tex = Texture2D::from_data(w, h, 3, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap();
        for y in 0..h {
            for x in 0..w {
                let uv = [(x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64];
                let v = tex.sample(uv);
                let k = 3 * (y * w + x);
                prop_assert_eq!(&v[..], &tex.data[k..k + 3]);
            }
        }
    }

    #[test]
    fn sampled_directions_are_unit_and_match_pdf(u1 in 0.0f64..1.0, u2 in 0.0f64..1.0, seed in 0u64..50) {
        let env = random_envmap(seed, 16, 8);
        let s = env.sample(u1, u2);
        prop_assert!((s.dir.norm() - 1.0).abs() < 1e-12);
        prop_assert!((env.pdf(s.dir) - s.pdf).abs() <= 1e-6 * s.pdf);
    }
}
