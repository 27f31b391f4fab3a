use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Inverse rendering from multi-view images: recover a mesh from
/// silhouettes, then its textures and lighting with a differentiable path
/// tracer.
#[derive(Debug, Parser)]
#[command(name = "invren", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic multi-view dataset from a ground-truth scene
    /// description.
    Synth(SynthArgs),
    /// Run geometry and/or reflectance optimization for a scene config.
    Optimize(OptimizeArgs),
    /// Render novel views of an optimized scene, optionally relit or with
    /// edited specular albedo.
    Render(RenderArgs),
    /// Compare two directories of images with PSNR and SSIM.
    Metrics(MetricsArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random decision of the command.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Ground-truth scene description (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub views: usize,
    /// Override the samples per pixel of the ground-truth renders.
    #[arg(long)]
    pub spp: Option<u32>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Geometry,
    Reflectance,
    Both,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Scene config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Phases to run; defaults to the config's setting.
    #[arg(long, value_enum)]
    pub phase: Option<PhaseArg>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Directory with mesh.obj, diffuse.pfm, specular.pfm, roughness.pfm
    /// and envmap.pfm.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Camera file to render; without it, `--views` novel viewpoints are
    /// placed on the upper hemisphere.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub views: usize,
    /// Image size for generated viewpoints.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 64)]
    pub spp: u32,
    /// Replace the lighting with this lat-long PFM.
    #[arg(long)]
    pub envmap: Option<PathBuf>,
    /// Multiply the specular albedo by this factor (clamped to [0, 1]).
    #[arg(long)]
    pub scale_specular: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Directory of rendered images.
    pub dir_a: PathBuf,
    /// Directory of reference images.
    pub dir_b: PathBuf,
    /// Also write the report to this JSON file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Suite to run (softras, pbrt, losses); all when omitted.
    pub suite: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negate the analytic gradient of one op, to confirm the harness
    /// catches it.
    #[arg(long, hide = true)]
    pub flip_sign: Option<String>,
}

/// Exit status of a failed command.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<invren::Error> for Failure {
    fn from(e: invren::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
pub fn prepare_output(dir: &Path, force: bool) -> Result<(), Failure> {
    if let Ok(mut entries) = std::fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(Failure::Validation(format!("output directory {} is not empty (use --force to overwrite)", dir.display())));
        }
    } else if dir.exists() {
        return Err(Failure::Validation(format!("{} exists and is not a directory", dir.display())));
    }
    std::fs::create_dir_all(dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Render(a) => commands::render(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
