//! Desk-scale quasi-static pushing simulator: disk particles on a table, a
//! line pusher, a ring of RGBD cameras, task generators with a greedy
//! demonstrator, and the evaluation metrics.

mod dataset;
mod physics;
mod rig;
mod task;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

pub use dataset::{gen_dataset, gen_trajectory, load_trajectory, save_dataset, DatasetManifest, Step, Trajectory};
pub use physics::{step, PushParams};
pub use rig::{camera_rig, observe, RigConfig};
pub use task::{
    generate_task, oracle_policy, random_state, success, target_state, DensityPattern, Disk, TaskKind, TaskSpec,
};

/// Planar particle configuration. Every center sits at z = radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleState {
    pub radius: f64,
    pub workspace: Aabb,
    #[serde(with = "vec3_list")]
    pub positions: Vec<Vec3>,
}

impl ParticleState {
    pub fn new(radius: f64, workspace: Aabb, xy: &[[f64; 2]]) -> Self {
        ParticleState {
            radius,
            workspace,
            positions: xy.iter().map(|p| Vec3::new(p[0], p[1], radius)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn xy(&self) -> Vec<[f64; 2]> {
        self.positions.iter().map(|p| [p.x, p.y]).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("particle state serializes")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

mod vec3_list {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 3]> = v.iter().map(|p| [p.x, p.y, p.z]).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        let rows = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(rows.into_iter().map(Vec3::from).collect())
    }
}

/// A planar push from `start` to `end`, both in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Action {
    pub fn from_array(a: [f64; 4]) -> Self {
        Action {
            start: [a[0], a[1]],
            end: [a[2], a[3]],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.start[0], self.start[1], self.end[0], self.end[1]]
    }

    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("action serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

/// Admissible push lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionBounds {
    pub min_push: f64,
    pub max_push: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        ActionBounds {
            min_push: 0.02,
            max_push: 0.2,
        }
    }
}

const ACTION_SLACK: f64 = 1e-9;

impl ActionBounds {
    /// Checks endpoints against the workspace footprint and the length range.
    pub fn validate(&self, action: &Action, workspace: &Aabb) -> Result<()> {
        for p in [action.start, action.end] {
            let inside =
                (0..2).all(|k| p[k] >= workspace.min[k] - ACTION_SLACK && p[k] <= workspace.max[k] + ACTION_SLACK);
            if !inside || !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidAction(format!("endpoint {p:?} outside the workspace")));
            }
        }
        let len = action.length();
        if len < self.min_push - ACTION_SLACK || len > self.max_push + ACTION_SLACK {
            return Err(Error::InvalidAction(format!(
                "push length {len} outside [{}, {}]",
                self.min_push, self.max_push
            )));
        }
        Ok(())
    }

    /// Pulls an arbitrary action back into the valid set, keeping its
    /// direction. Returns `None` if no valid action along that direction
    /// fits the workspace.
    pub fn project(&self, action: &Action, workspace: &Aabb) -> Option<Action> {
        let clamp = |p: [f64; 2]| -> [f64; 2] {
            [
                p[0].clamp(workspace.min[0], workspace.max[0]),
                p[1].clamp(workspace.min[1], workspace.max[1]),
            ]
        };
        let mut start = clamp(action.start);
        let raw = [action.end[0] - action.start[0], action.end[1] - action.start[1]];
        let len = raw[0].hypot(raw[1]);
        let dir = if len > 1e-12 {
            [raw[0] / len, raw[1] / len]
        } else {
            [1.0, 0.0]
        };
        let mut want = len.clamp(self.min_push, self.max_push);
        for _ in 0..4 {
            let end = clamp([start[0] + dir[0] * want, start[1] + dir[1] * want]);
            let got = (end[0] - start[0]).hypot(end[1] - start[1]);
            if got >= self.min_push - ACTION_SLACK {
                let out = Action { start, end };
                return self.validate(&out, workspace).is_ok().then_some(out);
            }
            // Too short after clipping at the wall: back the start away from it.
            start = clamp([end[0] - dir[0] * self.min_push, end[1] - dir[1] * self.min_push]);
            want = self.min_push;
        }
        None
    }
}

/// Symmetric Chamfer distance over particle centers with squared terms.
pub fn state_error(state: &ParticleState, target: &ParticleState) -> Result<f64> {
    if state.is_empty() || target.is_empty() {
        return Err(Error::EmptySet);
    }
    let one_way = |a: &[Vec3], b: &[Vec3]| -> f64 {
        a.iter()
            .map(|p| b.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / a.len() as f64
    };
    Ok(one_way(&state.positions, &target.positions) + one_way(&target.positions, &state.positions))
}

/// Every simulator knob, with desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_particles: usize,
    pub radius: f64,
    pub workspace: Aabb,
    pub push: PushParams,
    pub bounds: ActionBounds,
    pub rig: RigConfig,
    pub n_traj: usize,
    pub steps_per_traj: usize,
    pub task_mix: Vec<TaskKind>,
    /// Radius of a Collecting target disk.
    pub target_radius: f64,
    /// Fraction of each target disk's radius covered by the goal layer.
    pub target_fill: f64,
    /// Radius of each Splitting target disk.
    pub split_radius: f64,
    /// Slack on disk membership, meters.
    pub tolerance: f64,
    /// Redistributing grid cell edge, meters.
    pub cell_size: f64,
    /// Redistributing per-cell count slack as a fraction of the target count.
    pub count_tolerance: f64,
    /// Half-width of the demonstrator's uniform endpoint noise, meters.
    pub oracle_noise: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_particles: 50,
            radius: 0.005,
            workspace: Aabb::new([-0.1, -0.1, 0.0], [0.1, 0.1, 0.05]),
            push: PushParams::default(),
            bounds: ActionBounds::default(),
            rig: RigConfig::default(),
            n_traj: 100,
            steps_per_traj: 8,
            task_mix: vec![TaskKind::Collecting, TaskKind::Splitting, TaskKind::Redistributing],
            target_radius: 0.06,
            target_fill: 0.65,
            split_radius: 0.04,
            tolerance: 0.005,
            cell_size: 0.05,
            count_tolerance: 0.25,
            oracle_noise: 0.003,
        }
    }
}
