//! Image quality metrics on real (magnitude) images.

use crate::error::{Error, Result};
use crate::image::RealImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shapes(pred: &RealImage, gt: &RealImage) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            expected: gt.shape(),
            actual: pred.shape(),
        });
    }
    Ok(())
}

fn resolve_range(gt: &RealImage, data_range: Option<f64>) -> Result<f64> {
    let r = data_range.unwrap_or_else(|| gt.max());
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!("data range must be positive, got {r}")));
    }
    Ok(r)
}

/// `10 log10(range^2 / MSE)`; `range` defaults to `max(gt)`. Identical
/// images give `f64::INFINITY`.
pub fn psnr(pred: &RealImage, gt: &RealImage, data_range: Option<f64>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let r = resolve_range(gt, data_range)?;
    let mse = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / gt.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (r * r / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filtering over the valid region.
fn filter_valid(data: &[f64], h: usize, w: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = win.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|j| win[j] * data[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|j| win[j] * rows[(r + j) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// averaged over all fully contained windows.
pub fn ssim(pred: &RealImage, gt: &RealImage, data_range: Option<f64>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (h, w) = gt.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let r = resolve_range(gt, data_range)?;
    let c1 = (SSIM_K1 * r).powi(2);
    let c2 = (SSIM_K2 * r).powi(2);
    let win = gaussian_window();
    let x = pred.data();
    let y = gt.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mx, _, _) = filter_valid(x, h, w, &win);
    let (my, _, _) = filter_valid(y, h, w, &win);
    let (sxx, _, _) = filter_valid(&xx, h, w, &win);
    let (syy, _, _) = filter_valid(&yy, h, w, &win);
    let (sxy, _, _) = filter_valid(&xy, h, w, &win);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let vx = sxx[i] - a * a;
            let vy = syy[i] - b * b;
            let cov = sxy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}
