//! Subcommand implementations. Every command is a pure function of the
//! resolved configuration and its input files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splatpush::dynamics::{train, write_loss_csv, DynamicsModel, Transition};
use splatpush::math::derive_seed;
use splatpush::planner::{evaluate, plan, ActionSpace};
use splatpush::scene_init::{load_bundle, reconstruct};
use splatpush::sim::{camera_rig, save_dataset, Action, DatasetManifest, TaskKind};
use splatpush::splat::{render, CameraView, SplatScene};
use splatpush::Error;

use crate::config::RunConfig;

pub fn gen_data(config: &RunConfig) -> Result<()> {
    let rig = camera_rig(&config.sim.rig)?;
    std::fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    let manifest = save_dataset(&config.out, &config.sim, &rig, config.seed)?;
    eprintln!(
        "wrote {} trajectories x {} steps to {}",
        manifest.n_traj,
        manifest.steps_per_traj,
        config.out.display()
    );
    Ok(())
}

/// Per-frame record written next to each fitted scene.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct FrameFit {
    initial_loss: f64,
    final_loss: f64,
}

/// Sorted subdirectories of `dir` whose names start with `prefix`.
fn numbered_dirs(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let matches = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with(prefix));
        if matches && path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn relative_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn fit(config: &RunConfig, data: &Path) -> Result<()> {
    let manifest_path = data.join("manifest.json");
    let manifest: DatasetManifest = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path).map_err(|_| Error::MissingFrames(data.to_path_buf()))?,
    )
    .map_err(|e| Error::parse(&manifest_path, e))?;
    let mut frames = Vec::new();
    for traj in numbered_dirs(data, "traj_")? {
        let steps = numbered_dirs(&traj, "step_")?;
        if steps.is_empty() {
            return Err(Error::MissingFrames(traj).into());
        }
        for step in steps {
            frames.push((relative_name(&traj), relative_name(&step), step));
        }
    }
    if frames.is_empty() {
        return Err(Error::MissingFrames(data.to_path_buf()).into());
    }
    let fit_cfg = config.fit_config();
    let init_cfg = config.init_config();
    let records: Vec<FrameFit> = frames
        .par_iter()
        .enumerate()
        .map(|(index, (traj, step, src))| -> Result<FrameFit> {
            let dst = config.out.join(traj).join(step);
            let record_path = dst.join("fit.json");
            if record_path.exists() && dst.join("scene.json").exists() {
                let text = std::fs::read_to_string(&record_path)?;
                return Ok(serde_json::from_str(&text).map_err(|e| Error::parse(&record_path, e))?);
            }
            std::fs::create_dir_all(&dst).with_context(|| format!("creating {}", dst.display()))?;
            let obs = load_bundle(src)?;
            let seed = derive_seed(config.seed, index as u64);
            let (mut scene, report) = reconstruct(&obs, manifest.n_particles, &init_cfg, &fit_cfg, seed)?;
            scene.frame_id = step.trim_start_matches("step_").parse().unwrap_or(0);
            scene.save(&dst.join("scene.json"))?;
            let action = src.join("action.json");
            if action.exists() {
                Action::load(&action)?.save(&dst.join("action.json"))?;
            }
            let record = FrameFit {
                initial_loss: report.initial_loss,
                final_loss: report.final_loss,
            };
            std::fs::write(&record_path, serde_json::to_string(&record)?)?;
            Ok(record)
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("traj,step,initial_loss,final_loss\n");
    for ((traj, step, _), r) in frames.iter().zip(&records) {
        writeln!(csv, "{traj},{step},{},{}", r.initial_loss, r.final_loss)?;
    }
    let path = config.out.join("recon_loss.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("fitted {} frames into {}", frames.len(), config.out.display());
    Ok(())
}

/// Every `(Z_t, u_t, Z_t+1)` triple found under a fitted-scene directory.
pub fn load_transitions(dgs: &Path) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    for traj in numbered_dirs(dgs, "traj_")? {
        let steps = numbered_dirs(&traj, "step_")?;
        for pair in steps.windows(2) {
            let action = pair[0].join("action.json");
            let (now, next) = (pair[0].join("scene.json"), pair[1].join("scene.json"));
            if action.exists() && now.exists() && next.exists() {
                out.push(Transition {
                    scene: SplatScene::load(&now)?,
                    action: Action::load(&action)?,
                    next: SplatScene::load(&next)?,
                });
            }
        }
    }
    Ok(out)
}

pub fn train_model(config: &RunConfig, data: &Path) -> Result<()> {
    let transitions = load_transitions(data)?;
    if transitions.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let mut model = DynamicsModel::new(&config.model_config());
    let losses = train(&mut model, &transitions, &config.train_config())?;
    std::fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    model.save(&config.out.join("model.bin"))?;
    write_loss_csv(&config.out.join("train_loss.csv"), &losses)?;
    eprintln!(
        "trained on {} transitions; final loss {:.6}",
        transitions.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn plan_actions(config: &RunConfig, scene: &Path, target: &Path, checkpoint: &Path) -> Result<()> {
    let model = DynamicsModel::load(checkpoint)?;
    let scene = SplatScene::load(scene)?;
    let target = SplatScene::load(target)?;
    let space = ActionSpace {
        workspace: config.sim.workspace,
        bounds: config.sim.bounds,
    };
    let result = plan(&scene, &target, &model, &config.plan, &space, config.seed)?;
    std::fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    let path = config.out.join("plan.json");
    std::fs::write(&path, result.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn eval(config: &RunConfig, tasks: &[TaskKind], trials: usize, checkpoint: &Path) -> Result<()> {
    let model = DynamicsModel::load(checkpoint)?;
    let rig = camera_rig(&config.sim.rig)?;
    let mpc = config.mpc_config();
    std::fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    let mut summary = String::from("task,success_rate,state_error,n_trials\n");
    for &task in tasks {
        let dir = config.out.join(task.to_string());
        let seed = derive_seed(config.seed, task as u64);
        let (report, results) = evaluate(task, trials, &model, &config.sim, &mpc, &rig, seed, Some(&dir))?;
        let mut csv = String::from("trial,success,initial_error,final_error,iterations\n");
        for (k, r) in results.iter().enumerate() {
            writeln!(
                csv,
                "{k},{},{},{},{}",
                r.success, r.initial_error, r.final_error, r.iterations
            )?;
        }
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("trials.csv"), csv)?;
        let path = config.out.join(format!("report_{task}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        writeln!(
            summary,
            "{task},{},{},{}",
            fmt_opt(report.success_rate),
            fmt_opt(report.state_error),
            report.n_trials
        )?;
        eprintln!(
            "{task}: success {} state error {} over {} trials",
            fmt_opt(report.success_rate),
            fmt_opt(report.state_error),
            report.n_trials
        );
    }
    std::fs::write(config.out.join("report.csv"), summary)?;
    Ok(())
}

pub fn render_png(config: &RunConfig, scene: &Path, camera: &Path, png: &Path) -> Result<()> {
    let scene = SplatScene::load(scene)?;
    let view = CameraView::load(camera)?;
    if let Some(parent) = png.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    render(&scene, &view, config.sim.rig.table_color).save_png(png)?;
    Ok(())
}
