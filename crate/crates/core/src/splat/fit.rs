//! Multi-view reconstruction: Adam over every splat parameter with the
//! L1 + SSIM loss summed across views.

use serde::{Deserialize, Serialize};

use super::{recon_loss, recon_loss_grad, render, render_backward, CameraView, Image, SplatGrad, SplatScene};
use crate::adam::Adam;
use crate::error::{Error, Result};

/// Parameters per splat in the optimizer's flat vector:
/// position 3, raw quaternion 4, log-scale 3, opacity 1, color 3.
const PARAMS_PER_SPLAT: usize = 14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lr: f64,
    pub epochs: usize,
    pub ssim_weight: f64,
    pub background: [f64; 3],
    pub min_scale: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr: 1e-3,
            epochs: 2000,
            ssim_weight: super::DEFAULT_SSIM_WEIGHT,
            background: [0.0; 3],
            min_scale: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss at the start of every epoch.
    pub losses: Vec<f64>,
}

/// Summed reconstruction loss of `scene` over all views.
pub fn total_loss(scene: &SplatScene, views: &[(Image, CameraView)], config: &FitConfig) -> Result<f64> {
    let mut total = 0.0;
    for (gt, view) in views {
        total += recon_loss(&render(scene, view, config.background), gt, config.ssim_weight)?;
    }
    Ok(total)
}

/// Summed loss and its gradient with respect to every splat parameter.
pub fn total_loss_grad(
    scene: &SplatScene,
    views: &[(Image, CameraView)],
    config: &FitConfig,
) -> Result<(f64, Vec<SplatGrad>)> {
    let mut total = 0.0;
    let mut grads = vec![SplatGrad::default(); scene.len()];
    for (gt, view) in views {
        let img = render(scene, view, config.background);
        let (loss, d_img) = recon_loss_grad(&img, gt, config.ssim_weight)?;
        total += loss;
        for (acc, g) in grads
            .iter_mut()
            .zip(render_backward(scene, view, config.background, &d_img))
        {
            acc.add_assign(&g);
        }
    }
    Ok((total, grads))
}

/// Optimizes all splat parameters against the given views and returns the
/// lowest-loss scene seen, so the result never scores worse than `init`.
pub fn fit_scene(
    views: &[(Image, CameraView)],
    init: &SplatScene,
    config: &FitConfig,
) -> Result<(SplatScene, FitReport)> {
    if views.is_empty() {
        return Err(Error::NoViews);
    }
    if init.is_empty() {
        return Err(Error::EmptyScene);
    }
    for (img, view) in views {
        if img.dims() != (view.width, view.height) {
            return Err(Error::DimensionMismatch {
                left: img.dims(),
                right: (view.width, view.height),
            });
        }
    }
    let mut scene = init.clone();
    let mut adam = Adam::new(PARAMS_PER_SPLAT * scene.len(), config.lr);
    let mut report = FitReport::default();
    let mut best = (f64::INFINITY, scene.clone());
    let mut flat = vec![0.0; PARAMS_PER_SPLAT * scene.len()];

    for _ in 0..config.epochs {
        let (loss, grads) = total_loss_grad(&scene, views, config)?;
        report.losses.push(loss);
        if loss < best.0 {
            best = (loss, scene.clone());
        }
        for (i, (g, s)) in grads.iter().zip(&scene.splats).enumerate() {
            let o = &mut flat[i * PARAMS_PER_SPLAT..(i + 1) * PARAMS_PER_SPLAT];
            o[0..3].copy_from_slice(g.position.as_slice());
            o[3..7].copy_from_slice(&g.rotation);
            // Scales move multiplicatively: the gradient is taken in log space.
            for k in 0..3 {
                o[7 + k] = g.scale[k] * s.scale[k];
            }
            o[10] = g.opacity;
            o[11..14].copy_from_slice(g.color.as_slice());
        }
        let deltas = adam.deltas(&flat);
        for (i, s) in scene.splats.iter_mut().enumerate() {
            let d = &deltas[i * PARAMS_PER_SPLAT..(i + 1) * PARAMS_PER_SPLAT];
            for k in 0..3 {
                s.position[k] += d[k];
                s.scale[k] = (s.scale[k] * d[7 + k].exp()).max(config.min_scale);
                s.color[k] = (s.color[k] + d[11 + k]).clamp(0.0, 1.0);
            }
            for k in 0..4 {
                s.rotation.0[k] += d[3 + k];
            }
            if (s.rotation.norm() - 1.0).abs() > 1e-12 {
                s.rotation = s.rotation.normalized();
            }
            s.opacity = (s.opacity + d[10]).clamp(0.0, 1.0);
        }
    }

    let last = total_loss(&scene, views, config)?;
    if report.losses.is_empty() {
        report.losses.push(last);
    }
    if last < best.0 {
        best = (last, scene);
    }
    report.initial_loss = report.losses[0];
    report.final_loss = best.0;
    Ok((best.1, report))
}
