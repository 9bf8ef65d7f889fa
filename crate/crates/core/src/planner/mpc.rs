//! Closed-loop execution: observe, reconstruct, plan, execute the first push.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{plan, ActionSpace, PlanConfig};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::scene_init::{reconstruct, InitConfig};
use crate::sim::{observe, state_error, step, success, target_state, Action, ParticleState, SimConfig, TaskSpec};
use crate::splat::{render, CameraView, FitConfig, SplatScene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub plan: PlanConfig,
    pub init: InitConfig,
    /// Reconstruction settings used on every closed-loop observation.
    pub fit: FitConfig,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            plan: PlanConfig::default(),
            init: InitConfig::default(),
            fit: FitConfig {
                epochs: 200,
                ..FitConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcStep {
    pub iter: usize,
    /// Planned cost of the chosen sequence.
    pub cost: f64,
    /// State error against the goal layout after executing the push.
    pub chamfer: f64,
    pub success: bool,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<MpcStep>,
    pub initial_error: f64,
    pub final_error: f64,
    pub success: bool,
    pub final_state: ParticleState,
}

/// Goal layout for the task and the splat scene reconstructed from its
/// observations.
pub fn build_target(
    task: &TaskSpec,
    sim: &SimConfig,
    rig: &[CameraView],
    mpc: &MpcConfig,
    seed: u64,
) -> Result<(SplatScene, ParticleState)> {
    let goal = target_state(task, sim);
    let obs = observe(&goal, rig, &sim.rig);
    let (scene, _) = reconstruct(&obs, goal.len(), &mpc.init, &mpc.fit, seed)?;
    Ok((scene, goal))
}

/// Runs up to `max_mpc_iters` observe → reconstruct → plan → push cycles,
/// stopping as soon as the task is solved. With `render_dir`, writes the
/// reconstruction seen at every iteration from the first camera.
#[allow(clippy::too_many_arguments)]
pub fn mpc_execute(
    env_state: &ParticleState,
    task: &TaskSpec,
    target: &(SplatScene, ParticleState),
    model: &DynamicsModel,
    sim: &SimConfig,
    mpc: &MpcConfig,
    rig: &[CameraView],
    seed: u64,
    render_dir: Option<&Path>,
) -> Result<EpisodeLog> {
    let (target_scene, goal) = target;
    let space = ActionSpace {
        workspace: sim.workspace,
        bounds: sim.bounds,
    };
    let mut state = env_state.clone();
    let initial_error = state_error(&state, goal)?;
    let mut steps = Vec::new();
    if let Some(dir) = render_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for iter in 0..mpc.plan.max_mpc_iters {
        if success(&state, task) {
            break;
        }
        let obs = observe(&state, rig, &sim.rig);
        let (scene, _) = reconstruct(
            &obs,
            state.len(),
            &mpc.init,
            &mpc.fit,
            derive_seed(seed, 2 * iter as u64),
        )?;
        if scene.is_empty() {
            return Err(Error::EmptyScene);
        }
        if let (Some(dir), Some(view)) = (render_dir, rig.first()) {
            render(&scene, view, mpc.fit.background).save_png(&dir.join(format!("iter_{iter:03}.png")))?;
        }
        let result = plan(
            &scene,
            target_scene,
            model,
            &mpc.plan,
            &space,
            derive_seed(seed, 2 * iter as u64 + 1),
        )?;
        let action = result.actions[0];
        state = step(&state, &action, &sim.push, &sim.bounds)?;
        steps.push(MpcStep {
            iter,
            cost: result.costs[result.k_opt],
            chamfer: state_error(&state, goal)?,
            success: success(&state, task),
            action,
        });
    }
    Ok(EpisodeLog {
        steps,
        initial_error,
        final_error: state_error(&state, goal)?,
        success: success(&state, task),
        final_state: state,
    })
}

/// `iter,cost,chamfer,success` rows.
pub fn write_episode_csv(path: &Path, log: &EpisodeLog) -> Result<()> {
    let mut text = String::from("iter,cost,chamfer,success\n");
    for s in &log.steps {
        text.push_str(&format!("{},{},{},{}\n", s.iter, s.cost, s.chamfer, s.success));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
