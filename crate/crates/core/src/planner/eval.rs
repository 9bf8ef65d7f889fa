//! Seeded multi-trial evaluation of the closed-loop controller.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mpc::{build_target, mpc_execute, write_episode_csv, MpcConfig};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::sim::{generate_task, random_state, SimConfig, TaskKind};
use crate::splat::CameraView;

/// Aggregate metrics; the rates are `None` when no trial ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub success_rate: Option<f64>,
    /// Mean final state error.
    pub state_error: Option<f64>,
    pub n_trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub success: bool,
    pub initial_error: f64,
    pub final_error: f64,
    pub iterations: usize,
}

/// Runs `n_trials` episodes with per-trial derived seeds. With `out`, each
/// trial writes `trial_XXX/episode.csv` and its reconstruction renders.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    task: TaskKind,
    n_trials: usize,
    model: &DynamicsModel,
    sim: &SimConfig,
    mpc: &MpcConfig,
    rig: &[CameraView],
    seed: u64,
    out: Option<&Path>,
) -> Result<(EvalReport, Vec<TrialResult>)> {
    let trials: Vec<TrialResult> = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let trial_seed = derive_seed(seed, k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let spec = generate_task(task, sim, &mut rng);
            let state = random_state(sim, &mut rng);
            let target = build_target(&spec, sim, rig, mpc, derive_seed(trial_seed, 1))?;
            let dir = out.map(|o| o.join(format!("trial_{k:03}")));
            let log = mpc_execute(
                &state,
                &spec,
                &target,
                model,
                sim,
                mpc,
                rig,
                derive_seed(trial_seed, 2),
                dir.as_deref(),
            )?;
            if let Some(d) = &dir {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                write_episode_csv(&d.join("episode.csv"), &log)?;
            }
            Ok(TrialResult {
                success: log.success,
                initial_error: log.initial_error,
                final_error: log.final_error,
                iterations: log.steps.len(),
            })
        })
        .collect::<Result<_>>()?;
    let n = trials.len() as f64;
    let report = EvalReport {
        task,
        success_rate: (!trials.is_empty()).then(|| trials.iter().filter(|t| t.success).count() as f64 / n),
        state_error: (!trials.is_empty()).then(|| trials.iter().map(|t| t.final_error).sum::<f64>() / n),
        n_trials: trials.len(),
    };
    Ok((report, trials))
}
