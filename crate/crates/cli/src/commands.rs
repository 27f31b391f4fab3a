use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use invren::dataset::{generate_dataset, load_cameras, read_scene, view_seed, SynthConfig, HOLDOUT_PHASE};
use invren::gradcheck::{run_suite, GradcheckOptions, SUITES};
use invren::metrics::{MetricReport, ViewMetrics};
use invren::optim::{run_pipeline, Phases, SceneConfig};
use invren::pbrt::{render as render_image, RenderConfig};
use invren::scene::image::{read_color_image, read_pfm, write_bytes, write_pfm, write_png};
use invren::scene::EnvMap;
use invren::synth::hemisphere_cameras;
use serde::Serialize;

use crate::{prepare_output, Failure, GradcheckArgs, MetricsArgs, OptimizeArgs, PhaseArg, RenderArgs, SynthArgs};

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    let mut cfg = SynthConfig::from_file(&a.config)?;
    if let Some(spp) = a.spp {
        cfg.spp = spp;
    }
    cfg.validate()?;
    prepare_output(&a.out, a.common.force)?;
    let ds = generate_dataset(&cfg, &base_dir(&a.config), a.views, a.common.seed, &a.out)?;
    println!(
        "wrote {} training and {} held-out views to {}",
        ds.cameras.len(),
        ds.holdout.len(),
        a.out.display()
    );
    Ok(())
}

pub fn optimize(a: OptimizeArgs) -> Result<(), Failure> {
    let mut cfg = SceneConfig::load(&a.config)?;
    if let Some(p) = a.phase {
        cfg.overrides.phases = match p {
            PhaseArg::Geometry => Phases { geometry: true, reflectance: false },
            PhaseArg::Reflectance => Phases { geometry: false, reflectance: true },
            PhaseArg::Both => Phases { geometry: true, reflectance: true },
        };
    }
    cfg.validate()?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output());
    prepare_output(&out, a.common.force)?;
    let result = run_pipeline(&cfg, a.common.seed, &out)?;
    let r = &result.report;
    println!("geometry iterations: {}, reflectance iterations: {}", r.geometry_iterations, r.reflectance_iterations);
    if let Some(h) = &r.holdout {
        if let Some(iou) = h.min_mask_iou {
            println!("held-out min mask IoU: {iou:.4}");
        }
        if let Some(m) = &h.metrics {
            println!("held-out mean PSNR: {:.2} dB, mean SSIM: {:.4}", m.mean_psnr, m.mean_ssim);
        }
    }
    println!("artifacts written to {}", out.display());
    Ok(())
}

pub fn render(a: RenderArgs) -> Result<(), Failure> {
    let mut scene = read_scene(&a.config)?;
    if let Some(path) = &a.envmap {
        if !path.is_file() {
            return Err(invren::Error::MissingFile { path: path.clone() }.into());
        }
        scene.envmap = EnvMap::from_image(&read_pfm(path)?)?;
    }
    if let Some(s) = a.scale_specular {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Failure::Validation(format!("--scale-specular must be a finite non-negative number (got {s})")));
        }
        for v in scene.specular.data.iter_mut() {
            *v = (*v * s).clamp(0.0, 1.0);
        }
    }
    let cameras = match &a.cameras {
        Some(p) => load_cameras(p)?,
        None => {
            let (c, r) = scene.mesh.bounding_sphere();
            hemisphere_cameras(a.views, HOLDOUT_PHASE, c, 2.5 * r, a.size, a.size)?
        }
    };
    if a.spp == 0 {
        return Err(Failure::Validation("--spp must be positive".into()));
    }
    prepare_output(&a.out, a.common.force)?;
    for (i, cam) in cameras.iter().enumerate() {
        // Same per-view seeds as the training renders written by `synth`.
        let cfg = RenderConfig { spp: a.spp, seed: view_seed(a.common.seed, 0, i), downsample: 1, ..RenderConfig::default() };
        let img = render_image(&scene, cam, &cfg)?;
        let name = invren::dataset::view_name(i);
        write_pfm(&a.out.join(format!("{name}.pfm")), &img)?;
        write_png(&a.out.join(format!("{name}.png")), &img)?;
    }
    println!("rendered {} views to {}", cameras.len(), a.out.display());
    Ok(())
}

fn image_files(dir: &Path) -> Result<BTreeSet<String>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let lower = name.to_ascii_lowercase();
        if entry.path().is_file() && (lower.ends_with(".pfm") || lower.ends_with(".png")) {
            names.insert(name);
        }
    }
    Ok(names)
}

#[derive(Serialize)]
struct NamedMetrics<'a> {
    file: &'a str,
    #[serde(flatten)]
    metrics: &'a ViewMetrics,
}

#[derive(Serialize)]
struct MetricsOutput<'a> {
    images: Vec<NamedMetrics<'a>>,
    #[serde(flatten)]
    report: &'a MetricReport,
}

pub fn metrics(a: MetricsArgs) -> Result<(), Failure> {
    let (fa, fb) = (image_files(&a.dir_a)?, image_files(&a.dir_b)?);
    let only_a: Vec<&String> = fa.difference(&fb).collect();
    let only_b: Vec<&String> = fb.difference(&fa).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(Failure::Validation(format!(
            "image sets differ: only in {}: {:?}; only in {}: {:?}",
            a.dir_a.display(),
            only_a,
            a.dir_b.display(),
            only_b
        )));
    }
    if fa.is_empty() {
        return Err(Failure::Validation(format!("no .pfm or .png images in {}", a.dir_a.display())));
    }
    let names: Vec<&String> = fa.iter().collect();
    let mut rendered = Vec::new();
    let mut reference = Vec::new();
    for n in &names {
        rendered.push(read_color_image(&a.dir_a.join(n))?);
        reference.push(read_color_image(&a.dir_b.join(n))?);
    }
    let report = MetricReport::evaluate(&rendered, &reference)?;
    let out = MetricsOutput {
        images: names.iter().zip(&report.views).map(|(n, m)| NamedMetrics { file: n, metrics: m }).collect(),
        report: &report,
    };
    let text = serde_json::to_string_pretty(&out).expect("metrics serialize");
    println!("{text}");
    if let Some(path) = &a.out {
        if path.exists() && !a.force {
            return Err(Failure::Validation(format!("{} exists (use --force to overwrite)", path.display())));
        }
        write_bytes(path, text.as_bytes())?;
    }
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    let suites: Vec<&str> = match &a.suite {
        Some(s) if s != "all" => vec![s.as_str()],
        _ => SUITES.to_vec(),
    };
    let mut opts = GradcheckOptions::new(a.seed);
    opts.flip_sign = a.flip_sign.clone();
    let mut failed = Vec::new();
    for s in suites {
        let r = run_suite(s, &opts)?;
        println!(
            "{}: max relative error {:.3e} (tolerance {:.0e}) {}",
            r.suite,
            r.max_rel_error,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
        for op in &r.ops {
            println!("  {}: {:.3e} over {} entries", op.op, op.max_rel_error, op.entries);
        }
        if !r.passed {
            let worst = r.worst().map(|o| o.op.clone()).unwrap_or_default();
            failed.push(format!("{} ({worst})", r.suite));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("gradient check failed: {}", failed.join(", "))))
    }
}
