//! Image similarity metrics used for matching and alignment scoring.

use super::ExtractError;
use crate::raster::{luma, RasterImage};

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn same_size(a: &RasterImage, b: &RasterImage) -> Result<(), ExtractError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(ExtractError::InvalidInput(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn luma_plane(img: &RasterImage) -> Vec<f64> {
    img.data()
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect()
}

/// Mean SSIM over every 8×8 window (stride 1) of the BT.601 luma planes.
///
/// Window statistics use the unbiased (N−1) variance and covariance.
/// Images smaller than the window in either direction are treated as one
/// window covering the whole image.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64, ExtractError> {
    same_size(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let x = luma_plane(a);
    let y = luma_plane(b);
    let (ww, wh) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let n = (ww * wh) as f64;
    let nx = w - ww + 1;
    let ny = h - wh + 1;

    // Column sums over `wh` rows for the current window row, then slide
    // horizontally; five statistics per window.
    let mut col = vec![[0f64; 5]; w];
    let mut total = 0.0;
    for wy in 0..ny {
        for (cx, c) in col.iter_mut().enumerate() {
            let mut s = [0f64; 5];
            for r in wy..wy + wh {
                let i = r * w + cx;
                let (p, q) = (x[i], y[i]);
                s[0] += p;
                s[1] += q;
                s[2] += p * p;
                s[3] += q * q;
                s[4] += p * q;
            }
            *c = s;
        }
        for wx in 0..nx {
            let mut s = [0f64; 5];
            for c in &col[wx..wx + ww] {
                for k in 0..5 {
                    s[k] += c[k];
                }
            }
            total += window_ssim(&s, n);
        }
    }
    Ok(total / (nx * ny) as f64)
}

fn window_ssim(s: &[f64; 5], n: f64) -> f64 {
    let mx = s[0] / n;
    let my = s[1] / n;
    let denom = if n > 1.0 { n - 1.0 } else { 1.0 };
    let vx = ((s[2] - n * mx * mx) / denom).max(0.0);
    let vy = ((s[3] - n * my * my) / denom).max(0.0);
    let cov = (s[4] - n * mx * my) / denom;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Relative average spectral error of `b` against reference `a`.
///
/// `RASE = 100/μ · sqrt(mean over bands of RMSE_band²)`, μ being the mean of
/// `a` over all bands.
pub fn rase(a: &RasterImage, b: &RasterImage) -> Result<f64, ExtractError> {
    same_size(a, b)?;
    let pixels = (a.width() as f64) * (a.height() as f64);
    let mut sq = [0f64; 3];
    let mut sum_a = 0f64;
    for (pa, pb) in a.data().chunks_exact(3).zip(b.data().chunks_exact(3)) {
        for c in 0..3 {
            let d = pa[c] as f64 - pb[c] as f64;
            sq[c] += d * d;
            sum_a += pa[c] as f64;
        }
    }
    let mu = sum_a / (3.0 * pixels);
    if mu == 0.0 {
        return Err(ExtractError::UndefinedMetric(
            "reference image mean is zero".into(),
        ));
    }
    let mean_mse = sq.iter().map(|s| s / pixels).sum::<f64>() / 3.0;
    Ok(100.0 / mu * mean_mse.sqrt())
}
