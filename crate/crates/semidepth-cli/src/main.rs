//! `semidepth` binary: reproducible stereo inverse-depth experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid configuration or input,
//! 3 numeric failure (non-finite values, divergence, failed gradient check).

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use semidepth::error::Result;
use semidepth::eval::CropKind;

use config::{ExperimentConfig, GtChoice, SceneSource};

#[derive(Parser, Debug)]
#[command(name = "semidepth", about = "Stereo inverse-depth experiments", version)]
struct Cli {
    /// JSON experiment config; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random choice in the run (overrides the config's).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for commands that can parallelize.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic stereo scene and its ground truth to a directory.
    Synth(SynthArgs),
    /// Optimize an inverse-depth pair for the configured sample.
    Optimize(OptimizeArgs),
    /// Score a predicted depth file against a ground-truth depth file.
    Eval(EvalArgs),
    /// Project a binary point cloud into a sparse depth PNG.
    LidarProject(LidarProjectArgs),
    /// Remove occlusion leaks from a sparse depth PNG.
    LidarFilter(LidarFilterArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the 2x2 ground-truth/consistency ablation grid.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Built-in scene name ("default" or "lidar-benchmark").
    #[arg(long)]
    scene: Option<String>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Built-in scene name ("default" or "lidar-benchmark").
    #[arg(long)]
    scene: Option<String>,
    /// Ground-truth variant for the supervised term.
    #[arg(long, value_enum)]
    gt: Option<GtChoice>,
    /// Total optimization steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr0: Option<f64>,
    /// Reconstruction weight.
    #[arg(long)]
    lambda1: Option<f64>,
    /// Left-right consistency weight.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Supervised weight.
    #[arg(long)]
    lambda3: Option<f64>,
    /// Smoothness weight.
    #[arg(long)]
    lambda4: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted depth map (16-bit PNG or PFM).
    pred: PathBuf,
    /// Ground-truth depth map (16-bit PNG or PFM).
    gt: PathBuf,
    /// Depth cap in meters.
    #[arg(long)]
    cap: Option<f64>,
    /// Evaluation crop.
    #[arg(long, value_enum)]
    crop: Option<CropArg>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum CropArg {
    Garg,
    None,
}

impl From<CropArg> for CropKind {
    fn from(c: CropArg) -> Self {
        match c {
            CropArg::Garg => CropKind::Garg,
            CropArg::None => CropKind::None,
        }
    }
}

#[derive(Args, Debug)]
struct LidarProjectArgs {
    /// Little-endian float32 x,y,z,reflectance point cloud (.bin).
    cloud: PathBuf,
    /// Sensor origin offset "x,y,z" in camera coordinates.
    #[arg(long, default_value = "0,0,0", value_parser = parse_offset, allow_hyphen_values = true)]
    offset: Offset,
    /// Focal length in pixels (overrides the configured rig).
    #[arg(long)]
    focal: Option<f64>,
    /// Stereo baseline in meters (overrides the configured rig).
    #[arg(long)]
    baseline: Option<f64>,
    /// Frame width in pixels (overrides the configured rig).
    #[arg(long)]
    width: Option<usize>,
    /// Frame height in pixels (overrides the configured rig).
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Clone, Debug)]
struct Offset([f64; 3]);

fn parse_offset(s: &str) -> std::result::Result<Offset, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected \"x,y,z\", got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad offset component {part:?}: {e}"))?;
    }
    Ok(Offset(out))
}

#[derive(Args, Debug)]
struct LidarFilterArgs {
    /// Sparse depth map to clean (16-bit PNG or PFM).
    depth: PathBuf,
    /// Odd square neighborhood size in pixels.
    #[arg(long, default_value_t = commands::FILTER_WINDOW)]
    window: usize,
    /// Relative depth gap that marks a leaked background return.
    #[arg(long, default_value_t = commands::FILTER_REL_TOL)]
    rel_tol: f64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Number of coordinate probes.
    #[arg(long, default_value_t = 64)]
    probes: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    /// Maximum acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Built-in scene name ("default" or "lidar-benchmark").
    #[arg(long)]
    scene: Option<String>,
    /// Total optimization steps per run.
    #[arg(long)]
    steps: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr0: Option<f64>,
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}

fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                3
            } else {
                2
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    match cli.command {
        Command::Synth(args) => {
            if let Some(name) = args.scene {
                cfg.scene = SceneSource::Named(name);
            }
            cfg.validate()?;
            commands::synth(&cfg)?;
            Ok(0)
        }
        Command::Optimize(args) => {
            if let Some(name) = args.scene {
                cfg.scene = SceneSource::Named(name);
            }
            if let Some(gt) = args.gt {
                cfg.gt = gt;
            }
            if let Some(steps) = args.steps {
                cfg.adam.total_steps = steps;
                cfg.adam.plateau_steps = cfg.adam.plateau_steps.min(steps);
            }
            if let Some(lr0) = args.lr0 {
                cfg.adam.lr0 = lr0;
            }
            for (slot, flag) in [
                (&mut cfg.weights.lambda1, args.lambda1),
                (&mut cfg.weights.lambda2, args.lambda2),
                (&mut cfg.weights.lambda3, args.lambda3),
                (&mut cfg.weights.lambda4, args.lambda4),
            ] {
                if let Some(v) = flag {
                    *slot = v;
                }
            }
            cfg.validate()?;
            commands::optimize(&cfg)?;
            Ok(0)
        }
        Command::Eval(args) => {
            if let Some(cap) = args.cap {
                cfg.eval.depth_cap = cap;
            }
            if let Some(crop) = args.crop {
                cfg.eval.crop = crop.into();
            }
            cfg.eval.validate()?;
            commands::eval(&cfg, &args.pred, &args.gt)?;
            Ok(0)
        }
        Command::LidarProject(args) => {
            let mut rig = match &cfg.scene {
                SceneSource::Files { rig, .. } => rig.clone(),
                _ => cfg.scene.resolve_spec()?.expect("synthetic source").rig,
            };
            if let Some(f) = args.focal {
                rig.focal_px = f;
            }
            if let Some(b) = args.baseline {
                rig.baseline_m = b;
            }
            if let Some(w) = args.width {
                rig.width = w;
            }
            if let Some(h) = args.height {
                rig.height = h;
            }
            rig.validate()?;
            commands::lidar_project(&cfg, &args.cloud, args.offset.0, &rig)?;
            Ok(0)
        }
        Command::LidarFilter(args) => {
            commands::lidar_filter(&cfg, &args.depth, args.window, args.rel_tol)?;
            Ok(0)
        }
        Command::Gradcheck(args) => {
            cfg.weights.validate()?;
            commands::gradcheck(&cfg, args.probes, args.step, args.threshold)
        }
        Command::Ablate(args) => {
            if let Some(name) = args.scene {
                cfg.scene = SceneSource::Named(name);
            }
            if let Some(steps) = args.steps {
                cfg.adam.total_steps = steps;
                cfg.adam.plateau_steps = cfg.adam.plateau_steps.min(steps);
            }
            if let Some(lr0) = args.lr0 {
                cfg.adam.lr0 = lr0;
            }
            cfg.validate()?;
            commands::ablate(&cfg, cli.threads)?;
            Ok(0)
        }
    }
}
