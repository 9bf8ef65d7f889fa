//! Windowed SSIM over RGB images with uniform window statistics.

use super::Image;
use crate::error::Result;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Window origins and extent along one axis. Axes shorter than the window
/// use a single window covering the whole axis.
fn windows(len: usize) -> (Vec<usize>, usize) {
    if len <= SSIM_WINDOW {
        return (vec![0], len);
    }
    ((0..=len - SSIM_WINDOW).step_by(SSIM_STRIDE).collect(), SSIM_WINDOW)
}

struct WindowStats {
    mu_x: f64,
    mu_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

impl WindowStats {
    fn ssim(&self) -> f64 {
        let a1 = 2.0 * self.mu_x * self.mu_y + SSIM_C1;
        let a2 = 2.0 * self.cov + SSIM_C2;
        let b1 = self.mu_x * self.mu_x + self.mu_y * self.mu_y + SSIM_C1;
        let b2 = self.var_x + self.var_y + SSIM_C2;
        a1 * a2 / (b1 * b2)
    }
}

fn stats(a: &Image, b: &Image, x0: usize, y0: usize, wx: usize, wy: usize, ch: usize) -> WindowStats {
    let n = (wx * wy) as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in y0..y0 + wy {
        for x in x0..x0 + wx {
            let i = a.index(x, y);
            sx += a.rgb[i][ch];
            sy += b.rgb[i][ch];
        }
    }
    let (mu_x, mu_y) = (sx / n, sy / n);
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for y in y0..y0 + wy {
        for x in x0..x0 + wx {
            let i = a.index(x, y);
            let dx = a.rgb[i][ch] - mu_x;
            let dy = b.rgb[i][ch] - mu_y;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    WindowStats {
        mu_x,
        mu_y,
        var_x: vx / n,
        var_y: vy / n,
        cov: cxy / n,
    }
}

/// Mean SSIM over all windows and color channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_dims(b)?;
    let (xs, wx) = windows(a.width);
    let (ys, wy) = windows(a.height);
    let mut total = 0.0;
    for &y0 in &ys {
        for &x0 in &xs {
            for ch in 0..3 {
                total += stats(a, b, x0, y0, wx, wy, ch).ssim();
            }
        }
    }
    Ok(total / (xs.len() * ys.len() * 3) as f64)
}

/// SSIM and its gradient with respect to the pixels of `a`.
#[allow(clippy::needless_range_loop)]
pub fn ssim_grad(a: &Image, b: &Image) -> Result<(f64, Vec<[f64; 3]>)> {
    a.check_same_dims(b)?;
    let (xs, wx) = windows(a.width);
    let (ys, wy) = windows(a.height);
    let count = (xs.len() * ys.len() * 3) as f64;
    let n = (wx * wy) as f64;
    let mut grad = vec![[0.0; 3]; a.rgb.len()];
    let mut total = 0.0;
    for &y0 in &ys {
        for &x0 in &xs {
            for ch in 0..3 {
                let st = stats(a, b, x0, y0, wx, wy, ch);
                let a1 = 2.0 * st.mu_x * st.mu_y + SSIM_C1;
                let a2 = 2.0 * st.cov + SSIM_C2;
                let b1 = st.mu_x * st.mu_x + st.mu_y * st.mu_y + SSIM_C1;
                let b2 = st.var_x + st.var_y + SSIM_C2;
                let s = a1 * a2 / (b1 * b2);
                total += s;
                let d_mu = 2.0 * st.mu_y * a2 / (b1 * b2) - s * 2.0 * st.mu_x / b1;
                let d_cov = 2.0 * a1 / (b1 * b2);
                let d_var = -s / b2;
                for y in y0..y0 + wy {
                    for x in x0..x0 + wx {
                        let i = a.index(x, y);
                        let dx = a.rgb[i][ch] - st.mu_x;
                        let dy = b.rgb[i][ch] - st.mu_y;
                        grad[i][ch] += (d_mu + 2.0 * d_var * dx + d_cov * dy) / (n * count);
                    }
                }
            }
        }
    }
    Ok((total / count, grad))
}
