//! Quasi-static sweep of a line pusher through disk particles.

use serde::{Deserialize, Serialize};

use super::{Action, ActionBounds, ParticleState};
use crate::error::Result;
use crate::math::Vec3;

/// Allowed residual overlap between two particles after a step.
pub const CONTACT_TOLERANCE: f64 = 1e-5;

/// Number of extra resolver sweeps allowed when settling the final state.
const SETTLE_ITERS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushParams {
    /// Pusher segment length, perpendicular to the push direction.
    pub pusher_len: f64,
    pub substeps: usize,
    pub resolver_iters: usize,
}

impl Default for PushParams {
    fn default() -> Self {
        PushParams {
            pusher_len: 0.1,
            substeps: 20,
            resolver_iters: 10,
        }
    }
}

struct Pusher {
    center: [f64; 2],
    dir: [f64; 2],
    normal: [f64; 2],
    half_len: f64,
}

impl Pusher {
    /// Coordinates of `p` along the push direction and along the pusher.
    fn local(&self, p: &Vec3) -> (f64, f64) {
        let d = [p.x - self.center[0], p.y - self.center[1]];
        (
            d[0] * self.dir[0] + d[1] * self.dir[1],
            d[0] * self.normal[0] + d[1] * self.normal[1],
        )
    }

    /// Moves every particle overlapping the pusher face to rest against its
    /// front side. `prev` is the pusher one substep earlier; particles that were
    /// already fully behind it are left alone.
    fn push(&self, prev: &Pusher, positions: &mut [Vec3], radius: f64) {
        for p in positions.iter_mut() {
            let (a, b) = self.local(p);
            if b.abs() > self.half_len || a >= radius {
                continue;
            }
            let (a_prev, _) = prev.local(p);
            if a_prev <= -radius {
                continue;
            }
            let shift = radius - a;
            p.x += shift * self.dir[0];
            p.y += shift * self.dir[1];
        }
    }
}

fn resolve_pairs(positions: &mut [Vec3], radius: f64) -> f64 {
    let min_sep = 2.0 * radius;
    let mut worst = 0.0f64;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let dx = positions[j].x - positions[i].x;
            let dy = positions[j].y - positions[i].y;
            let dist = dx.hypot(dy);
            if dist >= min_sep {
                continue;
            }
            worst = worst.max(min_sep - dist);
            // Coincident centers separate along a fixed index-dependent axis.
            let (ux, uy) = if dist > 1e-12 {
                (dx / dist, dy / dist)
            } else {
                let t = (i * 31 + j * 17) as f64;
                (t.cos(), t.sin())
            };
            let half = 0.5 * (min_sep - dist);
            positions[i].x -= half * ux;
            positions[i].y -= half * uy;
            positions[j].x += half * ux;
            positions[j].y += half * uy;
        }
    }
    worst
}

/// Particle centers stay one diameter inside the workspace edge, leaving room
/// for the pusher to get behind a particle resting against a wall.
pub fn wall_margin(radius: f64) -> f64 {
    2.0 * radius
}

fn clamp_to_workspace(state: &mut ParticleState) {
    let m = wall_margin(state.radius);
    let ws = state.workspace;
    for p in state.positions.iter_mut() {
        p.x = p.x.clamp(ws.min[0] + m, ws.max[0] - m);
        p.y = p.y.clamp(ws.min[1] + m, ws.max[1] - m);
        p.z = state.radius;
    }
}

/// Sweeps the pusher from `action.start` to `action.end` and returns the
/// settled state.
pub fn step(
    state: &ParticleState,
    action: &Action,
    params: &PushParams,
    bounds: &ActionBounds,
) -> Result<ParticleState> {
    bounds.validate(action, &state.workspace)?;
    let mut next = state.clone();
    let len = action.length();
    let dir = [
        (action.end[0] - action.start[0]) / len,
        (action.end[1] - action.start[1]) / len,
    ];
    let pusher_at = |t: f64| Pusher {
        center: [action.start[0] + t * len * dir[0], action.start[1] + t * len * dir[1]],
        dir,
        normal: [-dir[1], dir[0]],
        half_len: 0.5 * params.pusher_len,
    };
    let substeps = params.substeps.max(1);
    let mut prev = pusher_at(0.0);
    prev.push(&prev, &mut next.positions, next.radius);
    for k in 1..=substeps {
        let cur = pusher_at(k as f64 / substeps as f64);
        cur.push(&prev, &mut next.positions, next.radius);
        for _ in 0..params.resolver_iters {
            resolve_pairs(&mut next.positions, next.radius);
            cur.push(&cur, &mut next.positions, next.radius);
            clamp_to_workspace(&mut next);
        }
        prev = cur;
    }
    // The pusher is withdrawn; settle any remaining overlaps.
    for _ in 0..SETTLE_ITERS {
        let worst = resolve_pairs(&mut next.positions, next.radius);
        clamp_to_workspace(&mut next);
        if worst <= CONTACT_TOLERANCE && min_overlap_ok(&next) {
            break;
        }
    }
    Ok(next)
}

fn min_overlap_ok(state: &ParticleState) -> bool {
    let min_sep = 2.0 * state.radius - CONTACT_TOLERANCE;
    let p = &state.positions;
    (0..p.len()).all(|i| (i + 1..p.len()).all(|j| (p[i].xy() - p[j].xy()).norm() >= min_sep))
}
