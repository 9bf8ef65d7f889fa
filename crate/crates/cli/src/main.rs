//! `splatpush` command-line driver: data generation, splat fitting,
//! dynamics training, planning, evaluation and rendering.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use splatpush::sim::TaskKind;

use config::{extract_overrides, RunConfig};

/// Section values can be overridden with dotted flags such as
/// `--sim.n_particles=20` or `--plan.samples 8`.
#[derive(Parser, Debug)]
#[command(name = "splatpush", version, about)]
struct Cli {
    /// JSON configuration file with `sim`, `fit`, `train` and `plan` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every random stream in the run derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate demonstration trajectories and write them with observations.
    GenData,
    /// Reconstruct a splat scene for every frame of a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the dynamics model on fitted scenes.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Plan a push sequence from a scene toward a target scene.
    Plan {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run seeded closed-loop trials and report success and state error.
    Eval {
        /// Task to evaluate; repeat for several. Defaults to all tasks.
        #[arg(long = "task")]
        tasks: Vec<TaskKind>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render a scene from one camera to a PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        png: PathBuf,
    },
}

fn run() -> Result<()> {
    let (args, overrides) = extract_overrides(std::env::args().collect())?;
    let cli = Cli::try_parse_from(args)?;
    let mut config = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::GenData => commands::gen_data(&config),
        Command::Fit { data } => commands::fit(&config, &data),
        Command::Train { data } => commands::train_model(&config, &data),
        Command::Plan {
            scene,
            target,
            checkpoint,
        } => commands::plan_actions(&config, &scene, &target, &checkpoint),
        Command::Eval {
            tasks,
            trials,
            checkpoint,
        } => {
            let tasks = if tasks.is_empty() {
                vec![TaskKind::Collecting, TaskKind::Splitting, TaskKind::Redistributing]
            } else {
                tasks
            };
            commands::eval(&config, &tasks, trials, &checkpoint)
        }
        Command::Render { scene, camera, png } => commands::render_png(&config, &scene, &camera, &png),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                if !clap_err.use_stderr() {
                    print!("{clap_err}");
                    return ExitCode::SUCCESS;
                }
            }
            let line = format!("{err:#}").replace('\n', " ");
            eprintln!("error: {}", line.trim());
            ExitCode::FAILURE
        }
    }
}
