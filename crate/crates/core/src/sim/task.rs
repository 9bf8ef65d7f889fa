//! Task definitions, target layouts, success tests and the greedy
//! demonstrator.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, ParticleState, SimConfig};
use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Collecting,
    Splitting,
    Redistributing,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collecting" => Ok(TaskKind::Collecting),
            "splitting" => Ok(TaskKind::Splitting),
            "redistributing" => Ok(TaskKind::Redistributing),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Collecting => "collecting",
            TaskKind::Splitting => "splitting",
            TaskKind::Redistributing => "redistributing",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Target particle counts on a square grid anchored at `origin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityPattern {
    pub origin: [f64; 2],
    pub cell_size: f64,
    /// (cell index, target count), cells listed once.
    pub cells: Vec<([i64; 2], usize)>,
    /// Allowed count deviation as a fraction of each cell's target.
    pub count_tolerance: f64,
}

impl DensityPattern {
    pub fn cell_of(&self, x: f64, y: f64) -> [i64; 2] {
        [
            ((x - self.origin[0]) / self.cell_size).floor() as i64,
            ((y - self.origin[1]) / self.cell_size).floor() as i64,
        ]
    }

    pub fn cell_center(&self, cell: [i64; 2]) -> [f64; 2] {
        [
            self.origin[0] + (cell[0] as f64 + 0.5) * self.cell_size,
            self.origin[1] + (cell[1] as f64 + 0.5) * self.cell_size,
        ]
    }

    fn counts(&self, state: &ParticleState) -> BTreeMap<[i64; 2], usize> {
        let mut counts = BTreeMap::new();
        for p in &state.positions {
            *counts.entry(self.cell_of(p.x, p.y)).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Target disks for Collecting (one) and Splitting (two or more).
    pub disks: Vec<Disk>,
    /// Target grid for Redistributing.
    pub pattern: Option<DensityPattern>,
    /// Slack on disk membership, meters.
    pub tolerance: f64,
}

impl TaskSpec {
    pub fn collecting(center: [f64; 2], radius: f64, tolerance: f64) -> Self {
        TaskSpec {
            kind: TaskKind::Collecting,
            disks: vec![Disk { center, radius }],
            pattern: None,
            tolerance,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("task serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

fn in_disks(p: &Vec3, task: &TaskSpec) -> bool {
    task.disks
        .iter()
        .any(|d| (p.x - d.center[0]).hypot(p.y - d.center[1]) <= d.radius + task.tolerance)
}

/// Whether the state satisfies the task. An empty state always does.
pub fn success(state: &ParticleState, task: &TaskSpec) -> bool {
    match &task.pattern {
        Some(pattern) => {
            let counts = pattern.counts(state);
            pattern.cells.iter().all(|(cell, target)| {
                let have = counts.get(cell).copied().unwrap_or(0) as f64;
                (have - *target as f64).abs() <= pattern.count_tolerance * *target as f64
            })
        }
        None => state.positions.iter().all(|p| in_disks(p, task)),
    }
}

/// Seeded task of the given kind that fits inside the workspace.
pub fn generate_task(kind: TaskKind, config: &SimConfig, rng: &mut impl Rng) -> TaskSpec {
    let ws = &config.workspace;
    let mid = [0.5 * (ws.min[0] + ws.max[0]), 0.5 * (ws.min[1] + ws.max[1])];
    let half = [0.5 * (ws.max[0] - ws.min[0]), 0.5 * (ws.max[1] - ws.min[1])];
    match kind {
        TaskKind::Collecting => {
            let slack = [
                (half[0] - config.target_radius).max(0.0),
                (half[1] - config.target_radius).max(0.0),
            ];
            let center = [
                mid[0] + rng.gen_range(-1.0..=1.0) * slack[0],
                mid[1] + rng.gen_range(-1.0..=1.0) * slack[1],
            ];
            TaskSpec::collecting(center, config.target_radius, config.tolerance)
        }
        TaskKind::Splitting => {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let reach = (half[0].min(half[1]) - config.split_radius).max(0.0) * std::f64::consts::FRAC_1_SQRT_2
                + config.split_radius * 0.25;
            let offset = [reach * theta.cos(), reach * theta.sin()];
            TaskSpec {
                kind,
                disks: [1.0, -1.0]
                    .into_iter()
                    .map(|s| Disk {
                        center: [mid[0] + s * offset[0], mid[1] + s * offset[1]],
                        radius: config.split_radius,
                    })
                    .collect(),
                pattern: None,
                tolerance: config.tolerance,
            }
        }
        TaskKind::Redistributing => {
            let pattern_origin = [ws.min[0], ws.min[1]];
            let nx = ((ws.max[0] - ws.min[0]) / config.cell_size).floor().max(1.0) as i64;
            let ny = ((ws.max[1] - ws.min[1]) / config.cell_size).floor().max(1.0) as i64;
            let mut all: Vec<[i64; 2]> = (0..nx).flat_map(|i| (0..ny).map(move |j| [i, j])).collect();
            let m = rng.gen_range(2..=4usize).min(all.len()).min(config.n_particles.max(1));
            let mut cells = Vec::with_capacity(m);
            for _ in 0..m {
                let k = rng.gen_range(0..all.len());
                cells.push(all.swap_remove(k));
            }
            cells.sort();
            let base = config.n_particles / m;
            let extra = config.n_particles % m;
            TaskSpec {
                kind,
                disks: Vec::new(),
                pattern: Some(DensityPattern {
                    origin: pattern_origin,
                    cell_size: config.cell_size,
                    cells: cells
                        .into_iter()
                        .enumerate()
                        .map(|(i, c)| (c, base + usize::from(i < extra)))
                        .collect(),
                    count_tolerance: config.count_tolerance,
                }),
                tolerance: config.tolerance,
            }
        }
    }
}

/// Uniform non-overlapping scatter of `config.n_particles` particles.
pub fn random_state(config: &SimConfig, rng: &mut impl Rng) -> ParticleState {
    let r = config.radius;
    let m = super::physics::wall_margin(r);
    let ws = config.workspace;
    let mut xy: Vec<[f64; 2]> = Vec::with_capacity(config.n_particles);
    let mut attempts = 0usize;
    while xy.len() < config.n_particles {
        let p = [
            rng.gen_range(ws.min[0] + m..=ws.max[0] - m),
            rng.gen_range(ws.min[1] + m..=ws.max[1] - m),
        ];
        attempts += 1;
        let clear = xy.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= 2.0 * r);
        // A crowded workspace eventually accepts overlaps rather than spin.
        if clear || attempts > 10_000 * config.n_particles {
            xy.push(p);
        }
    }
    ParticleState::new(r, ws, &xy)
}

/// Hexagonal lattice sites of pitch `2r` ordered by distance from `center`.
fn hex_sites(center: [f64; 2], r: f64, reach: f64) -> Vec<[f64; 2]> {
    let pitch = 2.0 * r;
    let row = pitch * 3f64.sqrt() / 2.0;
    let n = (reach / row).ceil() as i64 + 1;
    let mut sites = Vec::new();
    for j in -n..=n {
        let shift = if j.rem_euclid(2) == 1 { 0.5 * pitch } else { 0.0 };
        let m = (reach / pitch).ceil() as i64 + 1;
        for i in -m..=m {
            let p = [center[0] + i as f64 * pitch + shift, center[1] + j as f64 * row];
            if (p[0] - center[0]).hypot(p[1] - center[1]) <= reach + 1e-12 {
                sites.push(p);
            }
        }
    }
    sites.sort_by(|a, b| {
        let da = (a[0] - center[0]).hypot(a[1] - center[1]);
        let db = (b[0] - center[0]).hypot(b[1] - center[1]);
        da.total_cmp(&db)
            .then(a[1].total_cmp(&b[1]))
            .then(a[0].total_cmp(&b[0]))
    });
    sites
}

/// Goal configuration used for target observations and state error. Disk
/// tasks get a close-packed layer covering the central `target_fill` fraction
/// of each disk's radius (at least as many sites as particles assigned to the
/// disk); Redistributing gets each cell's count close-packed at its center.
pub fn target_state(task: &TaskSpec, config: &SimConfig) -> ParticleState {
    let r = config.radius;
    let mut xy = Vec::new();
    match &task.pattern {
        Some(pattern) => {
            for (cell, count) in &pattern.cells {
                let center = pattern.cell_center(*cell);
                let inner = 0.5 * pattern.cell_size - r;
                xy.extend(
                    hex_sites(center, r, pattern.cell_size)
                        .into_iter()
                        .filter(|p| (p[0] - center[0]).abs() <= inner && (p[1] - center[1]).abs() <= inner)
                        .take(*count),
                );
            }
        }
        None => {
            let m = task.disks.len().max(1);
            for (k, d) in task.disks.iter().enumerate() {
                let reach = (config.target_fill * d.radius - r).max(0.0);
                let sites = hex_sites(d.center, r, reach);
                // Never fewer sites than the particles assigned to this disk.
                let count = config.n_particles / m + usize::from(k < config.n_particles % m);
                if sites.len() >= count {
                    xy.extend(sites);
                } else {
                    xy.extend(hex_sites(d.center, r, d.radius).into_iter().take(count));
                }
            }
        }
    }
    ParticleState::new(r, config.workspace, &xy)
}

/// Greedy demonstrator: pushes the particle farthest from its nearest target
/// region toward that region, with uniform endpoint noise.
pub fn oracle_policy(state: &ParticleState, task: &TaskSpec, config: &SimConfig, rng: &mut impl Rng) -> Result<Action> {
    if success(state, task) {
        return Err(Error::AlreadySolved);
    }
    // (distance to region, particle, region center, region reach)
    let mut best: Option<(f64, Vec3, [f64; 2], f64)> = None;
    let mut consider = |p: &Vec3, center: [f64; 2], reach: f64| {
        let dist = (p.x - center[0]).hypot(p.y - center[1]) - reach;
        if best.as_ref().is_none_or(|b| dist > b.0) {
            best = Some((dist, *p, center, reach));
        }
    };
    match &task.pattern {
        Some(pattern) => {
            let counts = pattern.counts(state);
            let target: BTreeMap<[i64; 2], usize> = pattern.cells.iter().copied().collect();
            let deficits: Vec<[i64; 2]> = pattern
                .cells
                .iter()
                .filter(|(c, t)| counts.get(c).copied().unwrap_or(0) < *t)
                .map(|(c, _)| *c)
                .collect();
            for p in &state.positions {
                let cell = pattern.cell_of(p.x, p.y);
                let have = counts.get(&cell).copied().unwrap_or(0);
                if have <= target.get(&cell).copied().unwrap_or(0) {
                    continue;
                }
                let nearest = deficits.iter().map(|c| pattern.cell_center(*c)).min_by(|a, b| {
                    let da = (p.x - a[0]).hypot(p.y - a[1]);
                    let db = (p.x - b[0]).hypot(p.y - b[1]);
                    da.total_cmp(&db)
                });
                if let Some(center) = nearest {
                    consider(p, center, 0.0);
                }
            }
        }
        None => {
            for p in state.positions.iter().filter(|p| !in_disks(p, task)) {
                let nearest = task.disks.iter().min_by(|a, b| {
                    let da = (p.x - a.center[0]).hypot(p.y - a.center[1]) - a.radius;
                    let db = (p.x - b.center[0]).hypot(p.y - b.center[1]) - b.radius;
                    da.total_cmp(&db)
                });
                if let Some(d) = nearest {
                    consider(p, d.center, d.radius);
                }
            }
        }
    }
    let Some((_, p, center, _)) = best else {
        return Err(Error::AlreadySolved);
    };
    let to = [center[0] - p.x, center[1] - p.y];
    let len = to[0].hypot(to[1]).max(1e-12);
    let dir = [to[0] / len, to[1] / len];
    let r = state.radius;
    let back = 2.0 * r;
    let noise = config.oracle_noise;
    let mut jitter = || {
        if noise > 0.0 {
            rng.gen_range(-noise..=noise)
        } else {
            0.0
        }
    };
    let raw = Action {
        start: [p.x - dir[0] * back + jitter(), p.y - dir[1] * back + jitter()],
        end: [center[0] - dir[0] * r + jitter(), center[1] - dir[1] * r + jitter()],
    };
    config
        .bounds
        .project(&raw, &state.workspace)
        .ok_or_else(|| Error::InvalidAction("no valid push toward the target".into()))
}
