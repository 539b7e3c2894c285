use serde::{Deserialize, Serialize};

use super::{TactileError, TactileImage};

pub const PSNR_CAP_DB: f64 = 100.0;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub ssim: f64,
    /// Mean absolute luma difference on [0, 1].
    pub mae: f64,
    /// dB, peak 1, capped at 100.
    pub psnr: f64,
}

/// BT.601 luma on [0, 1].
pub fn luma(img: &TactileImage) -> Vec<f64> {
    img.pixels.iter().map(|p| (299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32) as f64 / 255_000.0).collect()
}

fn gaussian_window() -> [f64; WINDOW] {
    let c = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (k, v) in w.iter_mut().enumerate() {
        let d = k as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable 11×11 Gaussian filter over the valid region only.
fn filter(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let g = gaussian_window();
    let (ow, oh) = (w + 1 - WINDOW, h + 1 - WINDOW);
    let mut rows = vec![0.0; ow * h];
    for j in 0..h {
        for i in 0..ow {
            rows[j * ow + i] = (0..WINDOW).map(|k| g[k] * img[j * w + i + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for j in 0..oh {
        for i in 0..ow {
            out[j * ow + i] = (0..WINDOW).map(|k| g[k] * rows[(j + k) * ow + i]).sum();
        }
    }
    out
}

fn ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter(a, w, h);
    let mu_b = filter(b, w, h);
    let aa = filter(&prod(a, a), w, h);
    let bb = filter(&prod(b, b), w, h);
    let ab = filter(&prod(a, b), w, h);
    let n = mu_a.len();
    let mut total = 0.0;
    for k in 0..n {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let va = aa[k] - ma * ma;
        let vb = bb[k] - mb * mb;
        let cov = ab[k] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    total / n as f64
}

/// SSIM, MAE and PSNR between two images of equal size on their luma.
pub fn image_metrics(a: &TactileImage, b: &TactileImage) -> Result<ImageMetrics, TactileError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(TactileError::DimensionMismatch { expected: (a.width, a.height), found: (b.width, b.height) });
    }
    if a.width < WINDOW || a.height < WINDOW {
        return Err(TactileError::InvalidSpec(format!("images must be at least {WINDOW}×{WINDOW} pixels")));
    }
    let (ya, yb) = (luma(a), luma(b));
    let n = ya.len() as f64;
    let mae = ya.iter().zip(&yb).map(|(p, q)| (p - q).abs()).sum::<f64>() / n;
    let mse = ya.iter().zip(&yb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n;
    let psnr = if mse == 0.0 { PSNR_CAP_DB } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB) };
    Ok(ImageMetrics { ssim: ssim(&ya, &yb, a.width, a.height), mae, psnr })
}
