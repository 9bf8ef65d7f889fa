//! Demonstration trajectories and their on-disk layout.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_task, observe, oracle_policy, random_state, step, Action, ParticleState, SimConfig, TaskSpec};
use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::scene_init::{load_bundle, save_bundle, RgbdObservation};
use crate::splat::CameraView;

/// One recorded time step. `action` is what was executed from this state; the
/// last step of a trajectory has none.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: ParticleState,
    pub observations: Vec<RgbdObservation>,
    pub action: Option<Action>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub task: TaskSpec,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n_traj: usize,
    pub steps_per_traj: usize,
    pub n_particles: usize,
    pub n_cameras: usize,
    pub seed: u64,
}

/// A valid push with uniform start, direction and length.
fn random_action(config: &SimConfig, rng: &mut impl Rng) -> Result<Action> {
    let ws = &config.workspace;
    for _ in 0..1000 {
        let start = [
            rng.gen_range(ws.min[0]..=ws.max[0]),
            rng.gen_range(ws.min[1]..=ws.max[1]),
        ];
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let len = rng.gen_range(config.bounds.min_push..=config.bounds.max_push);
        let a = Action {
            start,
            end: [start[0] + len * theta.cos(), start[1] + len * theta.sin()],
        };
        if config.bounds.validate(&a, ws).is_ok() {
            return Ok(a);
        }
    }
    Err(Error::NoValidActions("random push sampling exhausted".into()))
}

/// Rolls the demonstrator for one trajectory. Once the task is solved the
/// remaining steps use random pushes so every trajectory has the same length.
pub fn gen_trajectory(config: &SimConfig, rig: &[CameraView], seed: u64, index: usize) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
    let kind = config.task_mix[index % config.task_mix.len()];
    let task = generate_task(kind, config, &mut rng);
    let mut state = random_state(config, &mut rng);
    let mut steps = Vec::with_capacity(config.steps_per_traj + 1);
    for t in 0..=config.steps_per_traj {
        let observations = observe(&state, rig, &config.rig);
        if t == config.steps_per_traj {
            steps.push(Step {
                state,
                observations,
                action: None,
            });
            break;
        }
        let action = match oracle_policy(&state, &task, config, &mut rng) {
            Ok(a) => a,
            Err(Error::AlreadySolved | Error::InvalidAction(_)) => random_action(config, &mut rng)?,
            Err(e) => return Err(e),
        };
        let next = step(&state, &action, &config.push, &config.bounds)?;
        steps.push(Step {
            state,
            observations,
            action: Some(action),
        });
        state = next;
    }
    Ok(Trajectory { task, steps })
}

/// Every trajectory in memory. Use [`save_dataset`] for large runs.
pub fn gen_dataset(config: &SimConfig, rig: &[CameraView], seed: u64) -> Result<Vec<Trajectory>> {
    if config.task_mix.is_empty() {
        return Err(Error::InvalidConfig("task_mix is empty".into()));
    }
    (0..config.n_traj)
        .map(|i| gen_trajectory(config, rig, seed, i))
        .collect()
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    traj.task.save(&dir.join("task.json"))?;
    for (t, s) in traj.steps.iter().enumerate() {
        let step_dir = dir.join(format!("step_{t:03}"));
        save_bundle(&step_dir, &s.observations)?;
        s.state.save(&step_dir.join("particles.json"))?;
        if let Some(a) = &s.action {
            a.save(&step_dir.join("action.json"))?;
        }
    }
    Ok(())
}

/// Generates and writes `traj_XXXX/step_YYY/` directories one trajectory at a
/// time, plus `manifest.json`.
pub fn save_dataset(dir: &Path, config: &SimConfig, rig: &[CameraView], seed: u64) -> Result<DatasetManifest> {
    if config.task_mix.is_empty() {
        return Err(Error::InvalidConfig("task_mix is empty".into()));
    }
    for i in 0..config.n_traj {
        let traj = gen_trajectory(config, rig, seed, i)?;
        write_trajectory(&dir.join(format!("traj_{i:04}")), &traj)?;
    }
    let manifest = DatasetManifest {
        n_traj: config.n_traj,
        steps_per_traj: config.steps_per_traj,
        n_particles: config.n_particles,
        n_cameras: rig.len(),
        seed,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads one `traj_XXXX` directory back.
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let task = TaskSpec::load(&dir.join("task.json"))?;
    let mut steps = Vec::new();
    loop {
        let step_dir = dir.join(format!("step_{:03}", steps.len()));
        if !step_dir.is_dir() {
            break;
        }
        let action_path = step_dir.join("action.json");
        steps.push(Step {
            state: ParticleState::load(&step_dir.join("particles.json"))?,
            observations: load_bundle(&step_dir)?,
            action: if action_path.exists() {
                Some(Action::load(&action_path)?)
            } else {
                None
            },
        });
    }
    if steps.is_empty() {
        return Err(Error::MissingFrames(dir.to_path_buf()));
    }
    Ok(Trajectory { task, steps })
}
