//! Property tests for the mesh regularizers and image/texture losses,
//! checked against finite differences and brute-force re-evaluation.

use invren::geom::{build_laplacian, edge_length_loss, laplacian_loss, normal_consistency_loss, LossGrad, TriMesh};
use invren::losses::{
    bilateral_specular_reg, geometry_loss, reflectance_loss, rgb_l1_loss, silhouette_loss, GeoLossWeights, RefLossWeights,
};
use invren::math::Vec3;
use invren::scene::{ImageBuffer, Texture2D};
use invren::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small closed mesh: a tetrahedron or a level-0/1 icosphere, jittered,
/// scaled to unit size.
fn random_mesh(seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = match rng.random_range(0..3) {
        0 => synth::tetrahedron(),
        1 => synth::icosphere(0, 1.0),
        _ => synth::icosphere(1, 1.0),
    };
    for v in &mut mesh.vertices {
        *v += Vec3::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
    }
    mesh
}

/// max |analytic − numeric| / max |numeric|, the normwise relative error.
fn normwise_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn flatten(g: &[Vec3]) -> Vec<f64> {
    g.iter().flat_map(|v| v.to_array()).collect()
}

fn central_differences(mesh: &TriMesh, h: f64, f: &dyn Fn(&TriMesh) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * mesh.vertices.len());
    let mut m = mesh.clone();
    for i in 0..mesh.vertices.len() {
        for c in 0..3 {
            let orig = m.vertices[i];
            let mut a = orig.to_array();
            a[c] += h;
            m.vertices[i] = Vec3::from_array(a);
            let fp = f(&m);
            a[c] -= 2.0 * h;
            m.vertices[i] = Vec3::from_array(a);
            let fm = f(&m);
            m.vertices[i] = orig;
            out.push((fp - fm) / (2.0 * h));
        }
    }
    out
}

fn lap_loss(m: &TriMesh) -> LossGrad {
    laplacian_loss(m, &build_laplacian(m).unwrap()).unwrap()
}

#[test]
fn regularizer_gradients_match_differences_on_random_meshes() {
    for seed in 0..24 {
        let mesh = random_mesh(seed);
        let cases: [(&str, LossGrad, &dyn Fn(&TriMesh) -> f64); 3] = [
            ("laplacian", lap_loss(&mesh), &|m| lap_loss(m).value),
            ("edge", edge_length_loss(&mesh), &|m| edge_length_loss(m).value),
            ("normal", normal_consistency_loss(&mesh).unwrap(), &|m| normal_consistency_loss(m).unwrap().value),
        ];
        for (name, lg, f) in cases {
            let fd = central_differences(&mesh, 1e-4, f);
            let err = normwise_error(&flatten(&lg.grad), &fd);
            assert!(err < 1e-4, "{name} on mesh {seed}: relative error {err}");
        }
    }
}

#[test]
fn laplacian_gradient_on_larger_icosphere() {
    let mut mesh = synth::icosphere(2, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for v in &mut mesh.vertices {
        *v = *v * rng.random_range(0.9..1.1);
    }
    let lg = lap_loss(&mesh);
    let fd = central_differences(&mesh, 1e-4, &|m| lap_loss(m).value);
    let err = normwise_error(&flatten(&lg.grad), &fd);
    assert!(err < 1e-5, "{err}");
}

/// Relabels vertices by `perm` (new index of old vertex i is perm[i]).
fn permute_mesh(mesh: &TriMesh, perm: &[usize]) -> TriMesh {
    let mut verts = vec![Vec3::ZERO; mesh.vertices.len()];
    for (i, &p) in perm.iter().enumerate() {
        verts[p] = mesh.vertices[i];
    }
    let faces = mesh.faces.iter().map(|f| f.map(|i| perm[i as usize] as u32)).collect();
    TriMesh::new(verts, faces).unwrap()
}

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0), "{what}: {a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_rows_sum_to_zero(seed in 0u64..1000) {
        let mesh = random_mesh(seed);
        let lap = build_laplacian(&mesh).unwrap();
        for i in 0..lap.size() {
            let s: f64 = lap.row(i).map(|(_, v)| v).sum();
            prop_assert!(s.abs() < 1e-10);
        }
    }

    #[test]
    fn regularizers_are_nonnegative(seed in 0u64..1000) {
        let mesh = random_mesh(seed);
        prop_assert!(lap_loss(&mesh).value >= 0.0);
        prop_assert!(edge_length_loss(&mesh).value >= 0.0);
        prop_assert!(normal_consistency_loss(&mesh).unwrap().value >= 0.0);
    }

    #[test]
    fn regularizers_scale_as_documented(seed in 0u64..1000, s in 0.2f64..5.0) {
        let mesh = random_mesh(seed);
        let mut scaled = mesh.clone();
        for v in &mut scaled.vertices {
            *v = *v * s;
        }
        assert_close(lap_loss(&scaled).value, s * s * lap_loss(&mesh).value, 1e-10, "laplacian");
        assert_close(edge_length_loss(&scaled).value, s * edge_length_loss(&mesh).value, 1e-10, "edge");
        assert_close(
            normal_consistency_loss(&scaled).unwrap().value,
            normal_consistency_loss(&mesh).unwrap().value,
            1e-9,
            "normal",
        );
    }

    #[test]
    fn regularizers_ignore_vertex_order(seed in 0u64..1000, shuffle in any::<u64>()) {
        let mesh = random_mesh(seed);
        let n = mesh.vertices.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let p = permute_mesh(&mesh, &perm);
        assert_close(lap_loss(&p).value, lap_loss(&mesh).value, 1e-12, "laplacian");
        assert_close(edge_length_loss(&p).value, edge_length_loss(&mesh).value, 1e-12, "edge");
        assert_close(normal_consistency_loss(&p).unwrap().value, normal_consistency_loss(&mesh).unwrap().value, 1e-12, "normal");
        let (g, gp) = (lap_loss(&mesh).grad, lap_loss(&p).grad);
        for i in 0..n {
            prop_assert!((g[i] - gp[perm[i]]).norm() < 1e-10);
        }
    }

    #[test]
    fn silhouette_loss_is_a_unit_interval_soft_iou(pred in prop::collection::vec(0.0f64..=1.0, 16), gt in prop::collection::vec(0.0f64..=1.0, 16)) {
        prop_assume!(gt.iter().sum::<f64>() > 1e-3);
        let p = ImageBuffer::from_data(4, 4, 1, pred).unwrap();
        let g = ImageBuffer::from_data(4, 4, 1, gt).unwrap();
        let l = silhouette_loss(&p, &g).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&l));
    }

    #[test]
    fn bilateral_reg_is_nonnegative_and_translation_invariant(seed in 0u64..1000, shift_x in 0usize..4, shift_y in 0usize..4) {
        // A 4-periodic pattern on a 24×24 texture; interior texels of the
        // shifted copy see exactly the same windows as the original.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tile_d: Vec<f64> = (0..16 * 3).map(|_| rng.random_range(0.1..0.9)).collect();
        let tile_s: Vec<f64> = (0..16 * 3).map(|_| rng.random_range(0.0..0.5)).collect();
        let make = |tile: &[f64], sx: usize, sy: usize| {
            let n = 24;
            let mut data = Vec::with_capacity(n * n * 3);
            for y in 0..n {
                for x in 0..n {
                    let t = ((y + sy) % 4) * 4 + (x + sx) % 4;
                    data.extend_from_slice(&tile[3 * t..3 * t + 3]);
                }
            }
            Texture2D::from_data(n, n, 3, data).unwrap()
        };
        let w = RefLossWeights::default();
        let a = bilateral_specular_reg(&make(&tile_d, 0, 0), &make(&tile_s, 0, 0), &w).unwrap();
        let b = bilateral_specular_reg(&make(&tile_d, shift_x, shift_y), &make(&tile_s, shift_x, shift_y), &w).unwrap();
        prop_assert!(a.value >= 0.0 && b.value >= 0.0);
        // Interior residuals (window fully inside) depend only on the
        // pattern phase, so their sum over one period is shift invariant.
        let interior = |tex_d: &Texture2D, tex_s: &Texture2D| {
            let r = w.window_radius;
            let mut total = 0.0;
            for y in 8..12 {
                for x in 8..12 {
                    let mut num = [0.0; 3];
                    let mut den = 0.0;
                    let md = |q: usize| (tex_d.data[3 * q] + tex_d.data[3 * q + 1] + tex_d.data[3 * q + 2]) / 3.0;
                    let p = y * 24 + x;
                    for qy in y - r..=y + r {
                        for qx in x - r..=x + r {
                            let q = qy * 24 + qx;
                            let d2 = ((qx as f64 - x as f64).powi(2) + (qy as f64 - y as f64).powi(2)) / (2.0 * w.sigma_spatial.powi(2));
                            let r2 = (md(p) - md(q)).powi(2) / (2.0 * w.sigma_range.powi(2));
                            let k = (-d2 - r2).exp();
                            den += k;
                            for c in 0..3 {
                                num[c] += k * tex_s.data[3 * q + c];
                            }
                        }
                    }
                    for c in 0..3 {
                        total += (tex_s.data[3 * p + c] - num[c] / den).abs();
                    }
                }
            }
            total
        };
        let ia = interior(&make(&tile_d, 0, 0), &make(&tile_s, 0, 0));
        let ib = interior(&make(&tile_d, shift_x, shift_y), &make(&tile_s, shift_x, shift_y));
        prop_assert!((ia - ib).abs() < 1e-9 * ia.max(1.0));
    }

    #[test]
    fn objectives_are_linear_in_their_weights(seed in 0u64..1000, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = random_mesh(seed);
        let lap = build_laplacian(&mesh).unwrap();
        let img = |rng: &mut ChaCha8Rng| ImageBuffer::from_data(6, 6, 1, (0..36).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap();
        let preds = vec![img(&mut rng), img(&mut rng)];
        let gts = vec![img(&mut rng), img(&mut rng)];
        let w1 = GeoLossWeights { silhouette: rng.random(), laplacian: rng.random(), edge: rng.random(), normal: rng.random() };
        let w2 = GeoLossWeights { silhouette: rng.random(), laplacian: rng.random(), edge: rng.random(), normal: rng.random() };
        let mix = GeoLossWeights {
            silhouette: a * w1.silhouette + b * w2.silhouette,
            laplacian: a * w1.laplacian + b * w2.laplacian,
            edge: a * w1.edge + b * w2.edge,
            normal: a * w1.normal + b * w2.normal,
        };
        let l1 = geometry_loss(&mesh, &lap, &preds, &gts, &w1).unwrap();
        let l2 = geometry_loss(&mesh, &lap, &preds, &gts, &w2).unwrap();
        let lm = geometry_loss(&mesh, &lap, &preds, &gts, &mix).unwrap();
        assert_close(lm.total, a * l1.total + b * l2.total, 1e-12, "geometry total");
        // Hand-assembled from the component ops.
        let sil = (silhouette_loss(&preds[0], &gts[0]).unwrap().value + silhouette_loss(&preds[1], &gts[1]).unwrap().value) / 2.0;
        let hand = w1.silhouette * sil
            + w1.laplacian * laplacian_loss(&mesh, &lap).unwrap().value
            + w1.edge * edge_length_loss(&mesh).value
            + w1.normal * normal_consistency_loss(&mesh).unwrap().value;
        assert_close(l1.total, hand, 1e-12, "geometry composition");

        let tex = |rng: &mut ChaCha8Rng| Texture2D::from_data(6, 6, 3, (0..108).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let (d, s) = (tex(&mut rng), tex(&mut rng));
        let rp = ImageBuffer::from_data(5, 5, 3, (0..75).map(|_| rng.random()).collect()).unwrap();
        let rg = ImageBuffer::from_data(5, 5, 3, (0..75).map(|_| rng.random()).collect()).unwrap();
        let rw = |rgb: f64, reg: f64| RefLossWeights { rgb, reg, ..RefLossWeights::default() };
        let (r1, r2) = (rw(0.3, 0.7), rw(1.1, 0.2));
        let v = |w: &RefLossWeights| reflectance_loss(&rp, &rg, &d, &s, w).unwrap().total;
        assert_close(v(&rw(a * 0.3 + b * 1.1, a * 0.7 + b * 0.2)), a * v(&r1) + b * v(&r2), 1e-12, "reflectance total");
        let hand = 0.3 * rgb_l1_loss(&rp, &rg).unwrap().value + 0.7 * bilateral_specular_reg(&d, &s, &r1).unwrap().value;
        assert_close(v(&r1), hand, 1e-12, "reflectance composition");
    }
}

#[test]
fn image_and_texture_loss_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-4;
    for _ in 0..10 {
        // Soft IoU on random soft masks.
        let pred = ImageBuffer::from_data(5, 5, 1, (0..25).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap();
        let gt = ImageBuffer::from_data(5, 5, 1, (0..25).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let an = silhouette_loss(&pred, &gt).unwrap().grad.data;
        let fd: Vec<f64> = (0..25)
            .map(|i| {
                let mut p = pred.clone();
                p.data[i] += h;
                let fp = silhouette_loss(&p, &gt).unwrap().value;
                p.data[i] -= 2.0 * h;
                (fp - silhouette_loss(&p, &gt).unwrap().value) / (2.0 * h)
            })
            .collect();
        assert!(normwise_error(&an, &fd) < 1e-3);

        // L1 on a 4×4 pair kept away from ties.
        let gt = ImageBuffer::from_data(4, 4, 3, (0..48).map(|_| rng.random()).collect()).unwrap();
        let pred = gt.map(|v| v + if v > 0.5 { -0.2 } else { 0.2 });
        let an = rgb_l1_loss(&pred, &gt).unwrap().grad.data;
        for i in 0..48 {
            let mut p = pred.clone();
            p.data[i] += h;
            let fp = rgb_l1_loss(&p, &gt).unwrap().value;
            p.data[i] -= 2.0 * h;
            let fd = (fp - rgb_l1_loss(&p, &gt).unwrap().value) / (2.0 * h);
            assert!((fd - an[i]).abs() < 1e-6);
        }

        // Bilateral regularizer, both textures.
        let w = RefLossWeights { window_radius: 2, ..RefLossWeights::default() };
        let d = Texture2D::from_data(6, 6, 3, (0..108).map(|_| rng.random_range(0.2..0.8)).collect()).unwrap();
        let s = Texture2D::from_data(6, 6, 3, (0..108).map(|_| rng.random_range(0.0..0.6)).collect()).unwrap();
        let b = bilateral_specular_reg(&d, &s, &w).unwrap();
        for (which, grad) in [(0, &b.grad_specular), (1, &b.grad_diffuse)] {
            let fd: Vec<f64> = (0..108)
                .map(|i| {
                    let eval = |delta: f64| {
                        let (mut d2, mut s2) = (d.clone(), s.clone());
                        if which == 0 {
                            s2.data[i] += delta;
                        } else {
                            d2.data[i] += delta;
                        }
                        bilateral_specular_reg(&d2, &s2, &w).unwrap().value
                    };
                    (eval(h) - eval(-h)) / (2.0 * h)
                })
                .collect();
            let err = normwise_error(grad, &fd);
            assert!(err < 1e-3, "bilateral block {which}: {err}");
        }
    }
}
