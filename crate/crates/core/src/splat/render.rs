//! CPU splat rasterizer: depth-sorted front-to-back alpha compositing with a
//! 3σ screen-space cutoff, plus the matching reverse-mode pass.

use nalgebra::{Matrix2, Matrix2x3, Vector2};

use super::covariance::{
    covariance_backward, jacobian_backward, screen_covariance, screen_covariance_backward, NEAR_PLANE,
};
use super::{build_covariance, CameraView, Image, SplatGrad, SplatScene};
use crate::math::{Mat3, Vec3};

/// Squared screen-space Mahalanobis radius beyond which a splat contributes
/// nothing (3 standard deviations).
pub const CUTOFF_MAHALANOBIS_SQ: f64 = 9.0;

struct Projected {
    index: usize,
    cam: Vec3,
    mean: Vector2<f64>,
    jac: Matrix2x3<f64>,
    sigma3: Mat3,
    conic: Matrix2<f64>,
}

/// Per-pixel contribution lists in depth order, stored CSR style.
struct Raster {
    projected: Vec<Projected>,
    offsets: Vec<usize>,
    /// (index into `projected`, exp(-q/2), q-space offset from the mean)
    entries: Vec<(u32, f64, Vector2<f64>)>,
}

fn rasterize(scene: &SplatScene, view: &CameraView) -> Raster {
    let mut projected: Vec<(f64, Projected)> = Vec::with_capacity(scene.len());
    for (index, splat) in scene.splats.iter().enumerate() {
        let cam = view.to_camera(&splat.position);
        if cam.z <= NEAR_PLANE {
            continue;
        }
        let jac = view.projection_jacobian(&cam);
        let sigma3 = build_covariance(splat);
        let cov2 = screen_covariance(&jac, &view.rotation, &sigma3);
        let Some(conic) = cov2.try_inverse() else {
            continue;
        };
        projected.push((
            cam.z,
            Projected {
                index,
                cam,
                mean: view.project_camera(&cam),
                jac,
                sigma3,
                conic,
            },
        ));
    }
    // Stable sort keeps index order among equal depths.
    projected.sort_by(|a, b| a.0.total_cmp(&b.0));
    let projected: Vec<Projected> = projected.into_iter().map(|(_, p)| p).collect();

    let (w, h) = (view.width, view.height);
    let mut hits: Vec<(u32, u32, f64, Vector2<f64>)> = Vec::new();
    let mut counts = vec![0usize; w * h];
    for (pi, p) in projected.iter().enumerate() {
        let cov = p.conic.try_inverse().unwrap_or_else(Matrix2::zeros);
        let mid = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        let lambda = mid + (mid * mid - det).max(0.0).sqrt();
        let radius = CUTOFF_MAHALANOBIS_SQ.sqrt() * lambda.max(0.0).sqrt();
        let x0 = (p.mean.x - radius).ceil().max(0.0);
        let x1 = (p.mean.x + radius).floor().min(w as f64 - 1.0);
        let y0 = (p.mean.y - radius).ceil().max(0.0);
        let y1 = (p.mean.y + radius).floor().min(h as f64 - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            continue;
        }
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                let d = Vector2::new(x as f64, y as f64) - p.mean;
                let q = (d.transpose() * p.conic * d)[(0, 0)];
                if q > CUTOFF_MAHALANOBIS_SQ {
                    continue;
                }
                let pix = y * w + x;
                counts[pix] += 1;
                hits.push((pix as u32, pi as u32, (-0.5 * q).exp(), d));
            }
        }
    }
    let mut offsets = vec![0usize; w * h + 1];
    for i in 0..w * h {
        offsets[i + 1] = offsets[i] + counts[i];
    }
    let mut cursor = offsets.clone();
    let mut entries = vec![(0u32, 0.0, Vector2::zeros()); hits.len()];
    // `hits` is already in depth order per pixel.
    for (pix, pi, g, d) in hits {
        let slot = &mut cursor[pix as usize];
        entries[*slot] = (pi, g, d);
        *slot += 1;
    }
    Raster {
        projected,
        offsets,
        entries,
    }
}

/// Renders `scene` from `view`; leftover transmittance shows `background`.
pub fn render(scene: &SplatScene, view: &CameraView, background: [f64; 3]) -> Image {
    let raster = rasterize(scene, view);
    let bg = Vec3::from(background);
    let mut img = Image::filled(view.width, view.height, background);
    for pix in 0..view.width * view.height {
        let list = &raster.entries[raster.offsets[pix]..raster.offsets[pix + 1]];
        if list.is_empty() {
            continue;
        }
        let mut color = Vec3::zeros();
        let mut trans = 1.0;
        for &(pi, g, _) in list {
            let splat = &scene.splats[raster.projected[pi as usize].index];
            let alpha = splat.opacity * g;
            color += splat.color * (alpha * trans);
            trans *= 1.0 - alpha;
        }
        color += bg * trans;
        img.rgb[pix] = color.into();
    }
    img
}

/// Reverse-mode pass of [`render`]: given dL/d(pixel rgb), returns dL/d(splat
/// parameters) for every splat in `scene` (zero for culled splats).
pub fn render_backward(
    scene: &SplatScene,
    view: &CameraView,
    background: [f64; 3],
    d_image: &[[f64; 3]],
) -> Vec<SplatGrad> {
    assert_eq!(d_image.len(), view.width * view.height);
    let raster = rasterize(scene, view);
    let bg = Vec3::from(background);
    let n = raster.projected.len();
    let mut d_opacity = vec![0.0; n];
    let mut d_color = vec![Vec3::zeros(); n];
    let mut d_mean = vec![Vector2::<f64>::zeros(); n];
    let mut d_conic = vec![Matrix2::<f64>::zeros(); n];
    let mut trans_before: Vec<f64> = Vec::new();

    for (pix, d_pix) in d_image.iter().enumerate() {
        let list = &raster.entries[raster.offsets[pix]..raster.offsets[pix + 1]];
        if list.is_empty() {
            continue;
        }
        let d_c = Vec3::from(*d_pix);
        trans_before.clear();
        let mut trans = 1.0;
        for &(pi, g, _) in list {
            trans_before.push(trans);
            let alpha = scene.splats[raster.projected[pi as usize].index].opacity * g;
            trans *= 1.0 - alpha;
        }
        // `behind` is the color seen just behind the current splat.
        let mut behind = bg;
        for (k, &(pi, g, d)) in list.iter().enumerate().rev() {
            let pi = pi as usize;
            let splat = &scene.splats[raster.projected[pi].index];
            let alpha = splat.opacity * g;
            let t = trans_before[k];
            d_color[pi] += d_c * (alpha * t);
            let d_alpha = t * d_c.dot(&(splat.color - behind));
            d_opacity[pi] += d_alpha * g;
            // α = σ·exp(-q/2), q = dᵀ A d, d = p - μ.
            let d_q = -0.5 * alpha * d_alpha;
            let conic = &raster.projected[pi].conic;
            d_mean[pi] += -2.0 * d_q * (conic * d);
            d_conic[pi] += d_q * (d * d.transpose());
            behind = splat.color * alpha + behind * (1.0 - alpha);
        }
    }

    let mut grads = vec![SplatGrad::default(); scene.len()];
    for (pi, p) in raster.projected.iter().enumerate() {
        let splat = &scene.splats[p.index];
        let d_cov2 = -(p.conic * d_conic[pi] * p.conic);
        let (d_sigma3, d_jac) = screen_covariance_backward(&p.jac, &view.rotation, &p.sigma3, &d_cov2);
        // The mean's Jacobian with respect to the camera-frame point is J.
        let d_cam = p.jac.transpose() * d_mean[pi] + jacobian_backward(view, &p.cam, &d_jac);
        let (d_rot, d_scale) = covariance_backward(splat, &d_sigma3);
        grads[p.index] = SplatGrad {
            position: view.rotation.transpose() * d_cam,
            rotation: d_rot,
            scale: d_scale,
            opacity: d_opacity[pi],
            color: d_color[pi],
        };
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;
    use crate::splat::{Intrinsics, Splat};

    const RED: [f64; 3] = [1.0, 0.0, 0.0];
    const BLUE: [f64; 3] = [0.0, 0.0, 1.0];

    fn view(size: usize) -> CameraView {
        CameraView::new(
            Mat3::identity(),
            Vec3::zeros(),
            Intrinsics {
                fx: 20.0,
                fy: 20.0,
                cx: 8.0,
                cy: 8.0,
            },
            size,
            size,
        )
        .unwrap()
    }

    fn splat_at(px: f64, py: f64, z: f64, opacity: f64, color: [f64; 3]) -> Splat {
        let v = view(16);
        let world = v.unproject(px, py, z);
        Splat::isotropic(world, 0.05, opacity, Vec3::from(color))
    }

    #[test]
    fn empty_scene_is_background() {
        let img = render(&SplatScene::default(), &view(16), [0.1, 0.2, 0.3]);
        assert!(img.rgb.iter().all(|p| *p == [0.1, 0.2, 0.3]));
    }

    #[test]
    fn opaque_splat_center_takes_splat_color() {
        let scene = SplatScene::new(0, vec![splat_at(5.0, 7.0, 2.0, 1.0, RED)]);
        let img = render(&scene, &view(16), [0.0, 1.0, 0.0]);
        assert_eq!(img.pixel(5, 7), RED);
    }

    #[test]
    fn two_layer_blend() {
        // front: α=0.5 red; back: α=1 blue → 0.5·red + 0.5·1·blue.
        let front = splat_at(8.0, 8.0, 2.0, 0.5, RED);
        let back = splat_at(8.0, 8.0, 3.0, 1.0, BLUE);
        let scene = SplatScene::new(0, vec![back, front]);
        let img = render(&scene, &view(16), [0.0, 1.0, 0.0]);
        let p = img.pixel(8, 8);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn splats_behind_camera_are_skipped() {
        let mut s = splat_at(8.0, 8.0, 2.0, 1.0, RED);
        s.position.z = -2.0;
        let img = render(&SplatScene::new(0, vec![s]), &view(16), [0.0; 3]);
        assert!(img.rgb.iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn cutoff_beyond_three_sigma() {
        // Screen std = f·s/z = 20·0.05/2 = 0.5 px, so 3σ = 1.5 px.
        let scene = SplatScene::new(0, vec![splat_at(8.0, 8.0, 2.0, 1.0, RED)]);
        let img = render(&scene, &view(16), [0.0; 3]);
        assert!(img.pixel(9, 8)[0] > 0.0);
        assert_eq!(img.pixel(10, 8), [0.0; 3]);
    }

    #[test]
    fn equal_depth_ties_follow_index_order() {
        let a = splat_at(8.0, 8.0, 2.0, 1.0, RED);
        let b = splat_at(8.0, 8.0, 2.0, 1.0, BLUE);
        let img = render(&SplatScene::new(0, vec![a.clone(), b.clone()]), &view(16), [0.0; 3]);
        assert_eq!(img.pixel(8, 8), RED);
        let img = render(&SplatScene::new(0, vec![b, a]), &view(16), [0.0; 3]);
        assert_eq!(img.pixel(8, 8), BLUE);
    }

    #[test]
    fn rotated_anisotropic_splat_renders_symmetric_footprint() {
        let mut s = splat_at(8.0, 8.0, 2.0, 1.0, RED);
        s.scale = Vec3::new(0.2, 0.05, 0.05);
        s.rotation = Quat::from_axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_4);
        let img = render(&SplatScene::new(0, vec![s]), &view(16), [0.0; 3]);
        // Point symmetry about the center for a centered Gaussian.
        assert!((img.pixel(10, 10)[0] - img.pixel(6, 6)[0]).abs() < 1e-12);
        assert!(img.pixel(10, 10)[0] > img.pixel(10, 6)[0]);
    }
}
