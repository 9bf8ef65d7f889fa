//! Gradient-refined sampling MPC on a density-field cost: sample K push
//! sequences, roll them through the learned dynamics with a frozen graph,
//! descend the cost with a backtracking line search, keep the best.

mod eval;
mod mpc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    apply, apply_backward, build_graph, Delta, DynamicsModel, SceneGraph, Tape, POSITION_OFFSET, ROTATION_OFFSET,
};
use crate::error::{Error, Result};
use crate::math::{derive_seed, Aabb, Vec3};
use crate::sim::{Action, ActionBounds};
use crate::splat::{density_backward, PreparedDensity, SplatGrad, SplatScene};

pub use eval::{evaluate, EvalReport, TrialResult};
pub use mpc::{build_target, mpc_execute, write_episode_csv, EpisodeLog, MpcConfig, MpcStep};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub horizon: usize,
    pub samples: usize,
    pub grad_steps: usize,
    pub action_lr: f64,
    /// Query grid resolution over the workspace footprint.
    pub grid: [usize; 2],
    /// Height of the query plane, meters.
    pub grid_z: f64,
    pub max_mpc_iters: usize,
    /// Start sampled pushes just behind a random splat instead of anywhere.
    pub biased_sampling: bool,
    /// Step halvings allowed when a gradient step raises the cost.
    pub max_halvings: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            horizon: 3,
            samples: 16,
            grad_steps: 10,
            action_lr: 0.01,
            grid: [32, 32],
            grid_z: 0.005,
            max_mpc_iters: 30,
            biased_sampling: false,
            max_halvings: 5,
        }
    }
}

/// Workspace footprint and push-length limits that every action must respect.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionSpace {
    pub workspace: Aabb,
    pub bounds: ActionBounds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    /// Best candidate's sequence.
    pub actions: Vec<Action>,
    /// Final cost of every candidate.
    pub costs: Vec<f64>,
    /// Cost of every candidate before refinement.
    pub initial_costs: Vec<f64>,
    /// Cost after every accepted refinement step, per candidate.
    pub histories: Vec<Vec<f64>>,
    pub k_opt: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct PlanFile<'a> {
    actions: Vec<[f64; 4]>,
    costs: &'a [f64],
    k_opt: usize,
    seed: u64,
}

impl PlanResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PlanFile {
            actions: self.actions.iter().map(Action::to_array).collect(),
            costs: &self.costs,
            k_opt: self.k_opt,
            seed: self.seed,
        })
        .expect("plan serializes")
    }
}

/// Cell-centered `nx × ny` grid over the workspace footprint at height `z`.
pub fn query_points(workspace: &Aabb, grid: [usize; 2], z: f64) -> Vec<Vec3> {
    let [nx, ny] = grid;
    let (w, h) = (workspace.max[0] - workspace.min[0], workspace.max[1] - workspace.min[1]);
    (0..ny)
        .flat_map(|j| {
            (0..nx).map(move |i| {
                Vec3::new(
                    workspace.min[0] + (i as f64 + 0.5) * w / nx as f64,
                    workspace.min[1] + (j as f64 + 0.5) * h / ny as f64,
                    z,
                )
            })
        })
        .collect()
}

fn densities(scene: &SplatScene, points: &[Vec3]) -> Vec<f64> {
    let prepared = PreparedDensity::new(scene);
    points.iter().map(|x| prepared.eval(x)).collect()
}

/// Mean squared density difference over the query points.
pub fn cost(current: &SplatScene, target: &SplatScene, points: &[Vec3]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    Ok(cost_against(current, &densities(target, points), points))
}

fn cost_against(current: &SplatScene, target_values: &[f64], points: &[Vec3]) -> f64 {
    densities(current, points)
        .iter()
        .zip(target_values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / points.len() as f64
}

/// Cost and its gradient on every splat of `current`.
pub fn cost_grad(current: &SplatScene, target: &SplatScene, points: &[Vec3]) -> Result<(f64, Vec<SplatGrad>)> {
    if points.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    Ok(cost_grad_against(current, &densities(target, points), points))
}

fn cost_grad_against(current: &SplatScene, target_values: &[f64], points: &[Vec3]) -> (f64, Vec<SplatGrad>) {
    let cur = densities(current, points);
    let n = points.len() as f64;
    let residual: Vec<f64> = cur.iter().zip(target_values).map(|(a, b)| a - b).collect();
    let value = residual.iter().map(|r| r * r).sum::<f64>() / n;
    let d_values: Vec<f64> = residual.iter().map(|r| 2.0 * r / n).collect();
    let mut grads = vec![SplatGrad::default(); current.len()];
    density_backward(current, points, &d_values, &mut grads);
    (value, grads)
}

/// Read-only inputs shared by every candidate of one planning call.
pub struct Objective<'a> {
    pub model: &'a DynamicsModel,
    pub scene: &'a SplatScene,
    /// Edge set used for every rollout step.
    pub topology: SceneGraph,
    pub points: Vec<Vec3>,
    pub target_values: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a DynamicsModel,
        scene: &'a SplatScene,
        target: &SplatScene,
        points: Vec<Vec3>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyQuerySet);
        }
        Ok(Objective {
            model,
            scene,
            topology: build_graph(scene, model.omega)?,
            target_values: densities(target, &points),
            points,
        })
    }

    /// Forward pass keeping every step's inputs and tape, plus the final scene.
    #[allow(clippy::type_complexity)]
    fn roll(&self, actions: &[Action]) -> Result<(Vec<(SplatScene, SceneGraph, Vec<Delta>, Tape)>, SplatScene)> {
        let mut steps = Vec::with_capacity(actions.len());
        let mut cur = self.scene.clone();
        for a in actions {
            let graph = self.topology.with_features(&cur)?;
            let (deltas, tape) = self.model.forward_with_tape(&graph, a)?;
            let next = apply(&cur, &deltas)?;
            steps.push((cur, graph, deltas, tape));
            cur = next;
        }
        Ok((steps, cur))
    }

    /// Scene predicted after the whole sequence, with the frozen topology.
    pub fn predict(&self, actions: &[Action]) -> Result<SplatScene> {
        let mut cur = self.scene.clone();
        for a in actions {
            let graph = self.topology.with_features(&cur)?;
            cur = apply(&cur, &self.model.forward(&graph, a)?)?;
        }
        Ok(cur)
    }

    pub fn cost(&self, actions: &[Action]) -> Result<f64> {
        Ok(cost_against(&self.predict(actions)?, &self.target_values, &self.points))
    }

    /// Cost and its gradient on each action's (x_s, y_s, x_e, y_e).
    pub fn cost_grad(&self, actions: &[Action]) -> Result<(f64, Vec<[f64; 4]>)> {
        let (steps, last) = self.roll(actions)?;
        let (value, grads) = cost_grad_against(&last, &self.target_values, &self.points);
        let mut d_pos: Vec<Vec3> = grads.iter().map(|g| g.position).collect();
        let mut d_rot: Vec<[f64; 4]> = grads.iter().map(|g| g.rotation).collect();
        let mut out = vec![[0.0; 4]; actions.len()];
        let mut scratch = self.model.zero_grad();
        for (t, (scene, graph, deltas, tape)) in steps.iter().enumerate().rev() {
            let back = apply_backward(scene, deltas, &d_pos, &d_rot);
            let d_in = self.model.backward(graph, tape, &back.d_dg, &back.d_dr, &mut scratch);
            d_pos = back.d_position;
            d_rot = back.d_rotation;
            for i in 0..scene.len() {
                for k in 0..3 {
                    d_pos[i][k] += d_in[[i, POSITION_OFFSET + k]];
                }
                for k in 0..4 {
                    d_rot[i][k] += d_in[[i, ROTATION_OFFSET + k]];
                    out[t][k] += d_in[[i, crate::dynamics::NODE_FEATURES + k]];
                }
            }
        }
        Ok((value, out))
    }
}

/// One uniformly random valid push, or one starting just behind a random
/// splat when `biased`.
pub fn sample_action(scene: &SplatScene, space: &ActionSpace, biased: bool, rng: &mut impl Rng) -> Result<Action> {
    let ws = &space.workspace;
    for _ in 0..1000 {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let len = rng.gen_range(space.bounds.min_push..=space.bounds.max_push);
        let dir = [theta.cos(), theta.sin()];
        let start = if biased && !scene.is_empty() {
            let s = &scene.splats[rng.gen_range(0..scene.len())];
            let back = rng.gen_range(0.0..=0.03);
            [s.position.x - dir[0] * back, s.position.y - dir[1] * back]
        } else {
            [
                rng.gen_range(ws.min[0]..=ws.max[0]),
                rng.gen_range(ws.min[1]..=ws.max[1]),
            ]
        };
        let a = Action {
            start,
            end: [start[0] + dir[0] * len, start[1] + dir[1] * len],
        };
        if space.bounds.validate(&a, ws).is_ok() {
            return Ok(a);
        }
    }
    Err(Error::NoValidActions("no valid push found after 1000 draws".into()))
}

struct Candidate {
    actions: Vec<Action>,
    initial: f64,
    history: Vec<f64>,
}

fn refine(
    objective: &Objective,
    mut actions: Vec<Action>,
    config: &PlanConfig,
    space: &ActionSpace,
) -> Result<Candidate> {
    let (mut value, mut grad) = objective.cost_grad(&actions)?;
    let initial = value;
    let mut history = vec![value];
    if config.action_lr > 0.0 {
        for _ in 0..config.grad_steps {
            let mut step = config.action_lr;
            let mut accepted = None;
            for _ in 0..=config.max_halvings {
                let trial: Vec<Action> = actions
                    .iter()
                    .zip(&grad)
                    .map(|(a, g)| {
                        let raw = a.to_array();
                        let moved = Action::from_array(std::array::from_fn(|k| raw[k] - step * g[k]));
                        space.bounds.project(&moved, &space.workspace).unwrap_or(*a)
                    })
                    .collect();
                let c = objective.cost(&trial)?;
                if c <= value {
                    accepted = Some(trial);
                    break;
                }
                step *= 0.5;
            }
            let Some(next) = accepted else {
                break;
            };
            actions = next;
            (value, grad) = objective.cost_grad(&actions)?;
            history.push(value);
        }
    }
    Ok(Candidate {
        actions,
        initial,
        history,
    })
}

/// Samples `samples` sequences of `horizon` pushes, refines each, and
/// returns the lowest-cost one (ties to the lowest index).
pub fn plan(
    scene: &SplatScene,
    target: &SplatScene,
    model: &DynamicsModel,
    config: &PlanConfig,
    space: &ActionSpace,
    seed: u64,
) -> Result<PlanResult> {
    if config.horizon == 0 || config.samples == 0 || config.grad_steps == 0 {
        return Err(Error::InvalidConfig(
            "horizon, samples and grad_steps must be at least 1".into(),
        ));
    }
    let points = query_points(&space.workspace, config.grid, config.grid_z);
    let objective = Objective::new(model, scene, target, points)?;
    let candidates: Vec<Candidate> = (0..config.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let actions = (0..config.horizon)
                .map(|_| sample_action(scene, space, config.biased_sampling, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            refine(&objective, actions, config, space)
        })
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = candidates
        .iter()
        .map(|c| *c.history.last().expect("non-empty"))
        .collect();
    let mut k_opt = 0;
    for (k, c) in costs.iter().enumerate() {
        if *c < costs[k_opt] {
            k_opt = k;
        }
    }
    Ok(PlanResult {
        actions: candidates[k_opt].actions.clone(),
        initial_costs: candidates.iter().map(|c| c.initial).collect(),
        histories: candidates.into_iter().map(|c| c.history).collect(),
        costs,
        k_opt,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModelConfig;
    use crate::splat::Splat;

    fn space() -> ActionSpace {
        ActionSpace {
            workspace: Aabb::new([-0.1, -0.1, 0.0], [0.1, 0.1, 0.05]),
            bounds: ActionBounds::default(),
        }
    }

    fn scene(offset: f64) -> SplatScene {
        SplatScene::new(
            0,
            (0..4)
                .map(|i| {
                    Splat::isotropic(
                        Vec3::new(0.02 * i as f64 + offset, -0.01 * i as f64, 0.005),
                        0.01,
                        0.9,
                        Vec3::new(0.8, 0.5, 0.2),
                    )
                })
                .collect(),
        )
    }

    fn model() -> DynamicsModel {
        let mut m = DynamicsModel::new(&ModelConfig {
            hidden: 8,
            seed: 1,
            ..ModelConfig::default()
        });
        let dec = &mut m.layers[4];
        let mut k = 0.0f64;
        for v in dec.w_self.iter_mut().chain(dec.w_neigh.iter_mut()) {
            k += 1.0;
            *v = 0.2 * (k * 1.37).sin();
        }
        m
    }

    #[test]
    fn cost_examples() {
        let p = query_points(&space().workspace, [8, 8], 0.005);
        let s = scene(0.0);
        assert_eq!(cost(&s, &s, &p).unwrap(), 0.0);
        let empty = SplatScene::new(0, vec![]);
        assert_eq!(cost(&empty, &empty, &p).unwrap(), 0.0);
        let x = [Vec3::new(0.01, 0.0, 0.005)];
        let (a, b) = (
            crate::splat::density(&s, &x[0]),
            crate::splat::density(&scene(0.01), &x[0]),
        );
        assert!((cost(&s, &scene(0.01), &x).unwrap() - (a - b).powi(2)).abs() < 1e-15);
        assert!(matches!(cost(&s, &s, &[]), Err(Error::EmptyQuerySet)));
    }

    #[test]
    fn grid_is_cell_centered() {
        let p = query_points(&space().workspace, [4, 2], 0.005);
        assert_eq!(p.len(), 8);
        assert!((p[0] - Vec3::new(-0.075, -0.05, 0.005)).norm() < 1e-15);
        assert!((p[7] - Vec3::new(0.075, 0.05, 0.005)).norm() < 1e-15);
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let m = model();
        let s = scene(-0.03);
        let t = scene(0.0);
        let obj = Objective::new(&m, &s, &t, query_points(&space().workspace, [16, 16], 0.005)).unwrap();
        let actions = [
            Action {
                start: [-0.05, 0.01],
                end: [0.03, -0.02],
            },
            Action {
                start: [0.02, 0.04],
                end: [-0.03, 0.0],
            },
        ];
        let (_, g) = obj.cost_grad(&actions).unwrap();
        let h = 1e-6;
        for t in 0..2 {
            for k in 0..4 {
                let shifted = |d: f64| {
                    let mut a = actions;
                    let mut raw = a[t].to_array();
                    raw[k] += d;
                    a[t] = Action::from_array(raw);
                    obj.cost(&a).unwrap()
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                let err = (numeric - g[t][k]).abs() / numeric.abs().max(g[t][k].abs()).max(1e-6);
                assert!(err < 1e-3, "t {t} k {k}: {numeric} vs {}", g[t][k]);
            }
        }
    }

    #[test]
    fn zero_rate_is_random_shooting() {
        let cfg = PlanConfig {
            horizon: 1,
            samples: 6,
            grad_steps: 1,
            action_lr: 0.0,
            grid: [8, 8],
            ..PlanConfig::default()
        };
        let r = plan(&scene(-0.03), &scene(0.0), &model(), &cfg, &space(), 5).unwrap();
        assert_eq!(r.costs, r.initial_costs);
        let min = r.costs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.costs[r.k_opt], min);
    }

    #[test]
    fn refinement_never_increases_cost_and_is_deterministic() {
        let cfg = PlanConfig {
            horizon: 2,
            samples: 4,
            grad_steps: 4,
            action_lr: 1.0,
            grid: [8, 8],
            ..PlanConfig::default()
        };
        let a = plan(&scene(-0.03), &scene(0.0), &model(), &cfg, &space(), 9).unwrap();
        for (h, init) in a.histories.iter().zip(&a.initial_costs) {
            assert!(h.windows(2).all(|w| w[1] <= w[0]));
            assert!(*h.last().unwrap() <= *init);
        }
        for act in &a.actions {
            space().bounds.validate(act, &space().workspace).unwrap();
        }
        let b = plan(&scene(-0.03), &scene(0.0), &model(), &cfg, &space(), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.to_json().contains("\"k_opt\""));
    }

    #[test]
    fn identity_model_on_solved_scene_costs_nothing() {
        let m = DynamicsModel::new(&ModelConfig {
            hidden: 8,
            ..ModelConfig::default()
        });
        let s = scene(0.0);
        let r = plan(
            &s,
            &s,
            &m,
            &PlanConfig {
                horizon: 1,
                samples: 3,
                grid: [8, 8],
                ..PlanConfig::default()
            },
            &space(),
            0,
        )
        .unwrap();
        assert!(r.costs[r.k_opt].abs() < 1e-15);
    }
}
