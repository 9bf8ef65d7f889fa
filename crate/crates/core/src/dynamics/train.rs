//! Supervised training on single-step transitions and open-loop rollout.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{build_graph, SceneGraph};
use super::loss::{apply, apply_backward, chamfer_loss_grad, Matching};
use super::model::{flatten, DynamicsModel, ModelGrad};
use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::sim::Action;
use crate::splat::SplatScene;

/// (Z_t, u_t, Z_{t+1}).
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub scene: SplatScene,
    pub action: Action,
    pub next: SplatScene,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Transitions whose gradients are averaged per optimizer step.
    pub batch_size: usize,
    /// Rotation weight λ in the per-pair loss.
    pub lambda: f64,
    pub matching: Matching,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 100,
            batch_size: 16,
            lambda: 0.1,
            matching: Matching::Full,
            seed: 0,
        }
    }
}

/// Chamfer loss of one transition and its gradient on every weight.
pub fn transition_loss_grad(
    model: &DynamicsModel,
    graph: &SceneGraph,
    t: &Transition,
    lambda: f64,
    matching: Matching,
) -> Result<(f64, ModelGrad)> {
    let (deltas, tape) = model.forward_with_tape(graph, &t.action)?;
    let pred = apply(&t.scene, &deltas)?;
    let (loss, d_pos, d_rot) = chamfer_loss_grad(&pred, &t.next, lambda, matching)?;
    let back = apply_backward(&t.scene, &deltas, &d_pos, &d_rot);
    let mut grad = model.zero_grad();
    model.backward(graph, &tape, &back.d_dg, &back.d_dr, &mut grad);
    Ok((loss, grad))
}

/// Chamfer loss of one transition under the model.
pub fn transition_loss(model: &DynamicsModel, t: &Transition, lambda: f64, matching: Matching) -> Result<f64> {
    let graph = build_graph(&t.scene, model.omega)?;
    let pred = apply(&t.scene, &model.forward(&graph, &t.action)?)?;
    super::loss::chamfer_loss(&pred, &t.next, lambda, matching)
}

/// Adam on shuffled batches; returns the mean loss of every epoch, measured
/// on the fly as each transition is visited.
pub fn train(model: &mut DynamicsModel, data: &[Transition], config: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.lr < 0.0 || config.lambda < 0.0 {
        return Err(Error::InvalidConfig("lr and lambda must be non-negative".into()));
    }
    let graphs: Vec<SceneGraph> = data
        .iter()
        .map(|t| build_graph(&t.scene, model.omega))
        .collect::<Result<_>>()?;
    let mut adam = Adam::new(model.n_params(), config.lr);
    let mut params = model.params();
    let batch = config.batch_size.max(1);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64)));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let results: Vec<(f64, ModelGrad)> = chunk
                .par_iter()
                .map(|&i| transition_loss_grad(model, &graphs[i], &data[i], config.lambda, config.matching))
                .collect::<Result<_>>()?;
            let mut total = vec![0.0; params.len()];
            for (loss, grad) in &results {
                epoch_loss += loss;
                for (t, g) in total.iter_mut().zip(flatten(grad)) {
                    *t += g;
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            total.iter_mut().for_each(|g| *g *= scale);
            adam.update(&mut params, &total);
            model.set_params(&params);
        }
        curve.push(epoch_loss / data.len() as f64);
    }
    Ok(curve)
}

/// Open-loop prediction, rebuilding the graph before every step. Returns the
/// input scene followed by one scene per action.
pub fn rollout(model: &DynamicsModel, scene: &SplatScene, actions: &[Action]) -> Result<Vec<SplatScene>> {
    let mut out = Vec::with_capacity(actions.len() + 1);
    out.push(scene.clone());
    for a in actions {
        let cur = out.last().expect("non-empty");
        let graph = build_graph(cur, model.omega)?;
        let mut next = apply(cur, &model.forward(&graph, a)?)?;
        next.frame_id = cur.frame_id + 1;
        out.push(next);
    }
    Ok(out)
}

/// `epoch,mean_loss` rows.
pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,mean_loss\n");
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
