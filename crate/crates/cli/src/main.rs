//! `densegrasp`: batch front end for the grasp-annotation pipeline.

mod config;
mod library;
mod seeds;
mod stages;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};
use stages::{CliError, StageResult};

#[derive(Parser)]
#[command(name = "densegrasp", version, about = "Dense per-point grasp annotation for cluttered bin scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    objects: Option<usize>,
    #[arg(long, global = true)]
    scenes: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Dataset directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maximum finger opening in meters.
    #[arg(long, global = true)]
    gripper_width: Option<f64>,
    /// Friction coefficient for objects without their own.
    #[arg(long, global = true)]
    friction: Option<f64>,
    /// Label broadcast radius in meters.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Render without depth noise or dropout.
    #[arg(long, global = true)]
    no_noise: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Build the object library and sample single-object grasps.
    GenGrasps,
    /// Compose cluttered bin scenes.
    Compose,
    /// Render depth and write the cropped, downsampled clouds.
    Render,
    /// Filter in-scene grasps and broadcast per-point labels.
    Label,
    /// Encode bin/residual targets for positive points.
    Encode,
    /// Width histogram, mask coverage and quality summary.
    Stats,
    /// Colored PLY files with the best grasps drawn as wireframes.
    ExportViz,
    /// Re-check every file of a dataset.
    Validate,
    /// Run every stage in order.
    Pipeline,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            objects: self.objects,
            scenes: self.scenes,
            seed: self.seed,
            jobs: self.jobs,
            out: self.out.clone(),
            gripper_width: self.gripper_width,
            friction: self.friction,
            radius: self.radius,
            no_noise: self.no_noise,
        }
    }
}

/// Config file, else the manifest of an existing dataset for stages that
/// consume one, else defaults; flags on top.
fn resolve(common: &Common, command: Command) -> Result<RunConfig, CliError> {
    let o = common.overrides();
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    cfg.apply(&o);
    let fresh = matches!(command, Command::GenGrasps | Command::Pipeline);
    if common.config.is_none() && !fresh {
        let root = cfg.out_dir();
        if root.join(stages::MANIFEST_FILE).is_file() {
            let m = stages::read_manifest(&root).map_err(stages::config_err)?;
            cfg = serde_json::from_value(m.config).map_err(stages::config_err)?;
            cfg.apply(&o);
            cfg.paths.out = Some(root);
        }
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> StageResult {
    let cfg = resolve(&cli.common, cli.command)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(stages::config_err)?;
    }
    let root = cfg.out_dir();
    if cli.command == Command::Validate {
        let r = validate::validate(&root);
        for v in &r.violations {
            log::error!("{v}");
        }
        log::info!(
            "checked {} files, re-checked {} scene grasps, max penetration {:.6} m",
            r.files_checked,
            r.grasps_rechecked,
            r.max_penetration
        );
        return if r.violations.is_empty() {
            log::info!("no violations");
            Ok(())
        } else {
            Err(CliError::Failed(vec![format!("{} violations", r.violations.len())]))
        };
    }
    std::fs::create_dir_all(&root).map_err(|e| CliError::Config(format!("{}: {e}", root.display())))?;
    match cli.command {
        Command::GenGrasps => stages::gen_grasps(&cfg, &root)?,
        Command::Compose => stages::compose(&cfg, &root)?,
        Command::Render => stages::render(&cfg, &root)?,
        Command::Label => stages::label(&cfg, &root)?,
        Command::Encode => stages::encode(&cfg, &root)?,
        Command::Stats => stages::stats(&cfg, &root)?,
        Command::ExportViz => stages::export_viz(&cfg, &root)?,
        Command::Pipeline => return stages::pipeline(&cfg, &root),
        Command::Validate => unreachable!(),
    }
    stages::write_manifest(&cfg, &root)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(m) => log::error!("config error: {m}"),
                CliError::Failed(errs) => log::error!("failed: {}", errs.join("; ")),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
