use super::{ssim, ssim_grad, Image};
use crate::error::Result;

/// Weight of the (1 - SSIM) term in the reconstruction loss.
pub const DEFAULT_SSIM_WEIGHT: f64 = 0.25;

/// Mean absolute error over pixels and channels.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_dims(b)?;
    let sum: f64 = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .map(|(p, q)| (0..3).map(|k| (p[k] - q[k]).abs()).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.rgb.len()) as f64)
}

/// L1 + β·(1 − SSIM).
pub fn recon_loss(recon: &Image, gt: &Image, ssim_weight: f64) -> Result<f64> {
    Ok(l1(recon, gt)? + ssim_weight * (1.0 - ssim(recon, gt)?))
}

/// Reconstruction loss together with its gradient with respect to `recon`.
pub fn recon_loss_grad(recon: &Image, gt: &Image, ssim_weight: f64) -> Result<(f64, Vec<[f64; 3]>)> {
    let l1_value = l1(recon, gt)?;
    let (s, d_ssim) = ssim_grad(recon, gt)?;
    let scale = 1.0 / (3 * recon.rgb.len()) as f64;
    let grad = recon
        .rgb
        .iter()
        .zip(&gt.rgb)
        .zip(&d_ssim)
        .map(|((p, q), ds)| {
            let mut g = [0.0; 3];
            for k in 0..3 {
                let diff = p[k] - q[k];
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                g[k] = sign * scale - ssim_weight * ds[k];
            }
            g
        })
        .collect();
    Ok((l1_value + ssim_weight * (1.0 - s), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::{SSIM_C1, SSIM_C2};

    #[test]
    fn identical_images_have_zero_loss() {
        let mut a = Image::filled(10, 10, [0.2, 0.5, 0.7]);
        a.rgb[13] = [1.0, 0.0, 0.3];
        assert_eq!(recon_loss(&a, &a, DEFAULT_SSIM_WEIGHT).unwrap(), 0.0);
    }

    #[test]
    fn white_against_black() {
        // Constant windows: SSIM = (2·1·0 + c1)/(1 + 0 + c1) and the
        // contrast term is c2/c2.
        let gt = Image::filled(16, 16, [0.0; 3]);
        let recon = Image::filled(16, 16, [1.0; 3]);
        let s = SSIM_C1 / (1.0 + SSIM_C1) * (SSIM_C2 / SSIM_C2);
        let expected = 1.0 + 0.25 * (1.0 - s);
        assert!((recon_loss(&recon, &gt, 0.25).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_pure_l1() {
        let gt = Image::filled(9, 9, [0.1, 0.2, 0.3]);
        let recon = Image::filled(9, 9, [0.4, 0.2, 0.0]);
        let expected = (0.3 + 0.0 + 0.3) / 3.0;
        assert!((recon_loss(&recon, &gt, 0.0).unwrap() - expected).abs() < 1e-12);
        assert!((l1(&recon, &gt).unwrap() - expected).abs() < 1e-12);
    }
}
