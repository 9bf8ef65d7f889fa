//! Applying predicted deltas to a scene and the Chamfer training loss.

use serde::{Deserialize, Serialize};

use super::model::Delta;
use crate::error::{Error, Result};
use crate::math::{normalize_backward, quat_mul_backward, Vec3};
use crate::splat::SplatScene;

/// ĝ = g + Δg, r̂ = normalize(Δr ⊗ r); color, opacity and scale untouched.
pub fn apply(scene: &SplatScene, deltas: &[Delta]) -> Result<SplatScene> {
    if deltas.len() != scene.len() {
        return Err(Error::LengthMismatch {
            expected: scene.len(),
            actual: deltas.len(),
        });
    }
    let mut out = scene.clone();
    for (s, d) in out.splats.iter_mut().zip(deltas) {
        s.position += d.dg;
        s.rotation = d.dr.mul(&s.rotation).normalized();
    }
    Ok(out)
}

/// Gradient of a loss through [`apply`]. Takes gradients on the output
/// positions and (raw) rotations and returns gradients on Δg, Δr, and the
/// input positions and rotations.
pub struct ApplyGrad {
    pub d_dg: Vec<Vec3>,
    pub d_dr: Vec<[f64; 4]>,
    pub d_position: Vec<Vec3>,
    pub d_rotation: Vec<[f64; 4]>,
}

pub fn apply_backward(scene: &SplatScene, deltas: &[Delta], d_position: &[Vec3], d_rotation: &[[f64; 4]]) -> ApplyGrad {
    let mut g = ApplyGrad {
        d_dg: d_position.to_vec(),
        d_dr: Vec::with_capacity(scene.len()),
        d_position: d_position.to_vec(),
        d_rotation: Vec::with_capacity(scene.len()),
    };
    for ((s, d), dr_out) in scene.splats.iter().zip(deltas).zip(d_rotation) {
        let product = d.dr.mul(&s.rotation);
        let d_product = normalize_backward(&product.0, dr_out);
        let (d_delta, d_rot) = quat_mul_backward(&d.dr.0, &s.rotation.0, &d_product);
        g.d_dr.push(d_delta);
        g.d_rotation.push(d_rot);
    }
    g
}

/// How nearest neighbors are chosen inside the Chamfer loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Minimize the full per-pair term.
    #[default]
    Full,
    /// Match on position distance only; the full term is still charged.
    Position,
}

fn pair_term(pred: &SplatScene, i: usize, gt: &SplatScene, j: usize, lambda: f64) -> (f64, f64) {
    let a = &pred.splats[i];
    let b = &gt.splats[j];
    let dist = (a.position - b.position).norm();
    (dist, dist + lambda * rotation_gap(a.rotation.dot(&b.rotation)))
}

/// 1 − |r·r̂|, floored at zero so rounding on unit quaternions never yields a
/// negative term.
fn rotation_gap(dot: f64) -> f64 {
    (1.0 - dot.abs()).max(0.0)
}

fn nearest(
    pred: &SplatScene,
    gt: &SplatScene,
    lambda: f64,
    matching: Matching,
    from_pred: bool,
    k: usize,
) -> (usize, f64) {
    let m = if from_pred { gt.len() } else { pred.len() };
    let mut best = (0, f64::INFINITY, f64::INFINITY);
    for other in 0..m {
        let (i, j) = if from_pred { (k, other) } else { (other, k) };
        let (dist, full) = pair_term(pred, i, gt, j, lambda);
        let key = match matching {
            Matching::Full => full,
            Matching::Position => dist,
        };
        if key < best.1 {
            best = (other, key, full);
        }
    }
    (best.0, best.2)
}

/// Symmetric Chamfer over (position, rotation) with per-pair term
/// |g − ĝ| + λ·(1 − |r·r̂|), each direction averaged over its source set.
pub fn chamfer_loss(pred: &SplatScene, gt: &SplatScene, lambda: f64, matching: Matching) -> Result<f64> {
    Ok(chamfer_loss_grad(pred, gt, lambda, matching)?.0)
}

/// Loss with gradients on the predicted positions and rotations. Nearest
/// neighbors are held fixed.
pub fn chamfer_loss_grad(
    pred: &SplatScene,
    gt: &SplatScene,
    lambda: f64,
    matching: Matching,
) -> Result<(f64, Vec<Vec3>, Vec<[f64; 4]>)> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut d_pos = vec![Vec3::zeros(); pred.len()];
    let mut d_rot = vec![[0.0; 4]; pred.len()];
    let mut loss = 0.0;
    let mut charge = |i: usize, j: usize, weight: f64, loss: &mut f64| {
        let a = &pred.splats[i];
        let b = &gt.splats[j];
        let diff = a.position - b.position;
        let dist = diff.norm();
        let dot = a.rotation.dot(&b.rotation);
        *loss += weight * (dist + lambda * rotation_gap(dot));
        if dist > 0.0 {
            d_pos[i] += weight * diff / dist;
        }
        let sign = if dot.abs() >= 1.0 {
            0.0
        } else if dot > 0.0 {
            1.0
        } else if dot < 0.0 {
            -1.0
        } else {
            0.0
        };
        for (d, r) in d_rot[i].iter_mut().zip(b.rotation.0) {
            *d -= weight * lambda * sign * r;
        }
    };
    let wp = 1.0 / pred.len() as f64;
    for i in 0..pred.len() {
        let (j, _) = nearest(pred, gt, lambda, matching, true, i);
        charge(i, j, wp, &mut loss);
    }
    let wg = 1.0 / gt.len() as f64;
    for j in 0..gt.len() {
        let (i, _) = nearest(pred, gt, lambda, matching, false, j);
        charge(i, j, wg, &mut loss);
    }
    Ok((loss, d_pos, d_rot))
}
