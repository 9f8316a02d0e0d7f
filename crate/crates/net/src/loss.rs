//! Training loss on magnitude averages: L1 plus a weighted perceptual term.
//!
//! The perceptual term is pluggable. The default proxy compares Sobel
//! gradient-magnitude maps at scales 1, 1/2 and 1/4, which penalizes blur
//! far more than a pixel-wise L1 does.

use pfrecon_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub perceptual: f64,
    pub total: f64,
}

/// A differentiable image distance on real images.
pub trait Perceptual {
    /// Returns the distance and its gradient with respect to `pred`.
    fn value_and_grad(&self, pred: &[f64], gt: &[f64], h: usize, w: usize) -> (f64, Vec<f64>);

    fn value(&self, pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
        self.value_and_grad(pred, gt, h, w).0
    }
}

/// Multi-scale Sobel gradient-magnitude L1 distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobelProxy {
    pub scales: usize,
    /// Smoothing inside the gradient-magnitude square root.
    pub eps: f64,
}

impl Default for SobelProxy {
    fn default() -> Self {
        Self { scales: 3, eps: 1e-8 }
    }
}

fn pool2(data: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = 0.25
                * (data[2 * r * w + 2 * c] + data[2 * r * w + 2 * c + 1] + data[(2 * r + 1) * w + 2 * c] + data[(2 * r + 1) * w + 2 * c + 1]);
        }
    }
    (out, oh, ow)
}

fn pool2_adjoint(grad: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for r in 0..oh {
        for c in 0..ow {
            let g = 0.25 * grad[r * ow + c];
            out[2 * r * w + 2 * c] += g;
            out[2 * r * w + 2 * c + 1] += g;
            out[(2 * r + 1) * w + 2 * c] += g;
            out[(2 * r + 1) * w + 2 * c + 1] += g;
        }
    }
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Sobel responses at interior pixels, `(h - 2) x (w - 2)`.
fn sobel(data: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let (ih, iw) = (h - 2, w - 2);
    let mut gx = vec![0.0; ih * iw];
    let mut gy = vec![0.0; ih * iw];
    for r in 0..ih {
        for c in 0..iw {
            let (mut sx, mut sy) = (0.0, 0.0);
            for dy in 0..3 {
                for dx in 0..3 {
                    let v = data[(r + dy) * w + c + dx];
                    sx += SOBEL_X[dy][dx] * v;
                    sy += SOBEL_Y[dy][dx] * v;
                }
            }
            gx[r * iw + c] = sx;
            gy[r * iw + c] = sy;
        }
    }
    (gx, gy)
}

fn sobel_adjoint(dgx: &[f64], dgy: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let (ih, iw) = (h - 2, w - 2);
    for r in 0..ih {
        for c in 0..iw {
            let (a, b) = (dgx[r * iw + c], dgy[r * iw + c]);
            for dy in 0..3 {
                for dx in 0..3 {
                    out[(r + dy) * w + c + dx] += SOBEL_X[dy][dx] * a + SOBEL_Y[dy][dx] * b;
                }
            }
        }
    }
}

impl SobelProxy {
    /// Distance and gradient at one scale; `None` if the image has no
    /// interior pixels.
    fn level(&self, p: &[f64], g: &[f64], h: usize, w: usize) -> Option<(f64, Vec<f64>)> {
        if h < 3 || w < 3 {
            return None;
        }
        let (px, py) = sobel(p, h, w);
        let (gx, gy) = sobel(g, h, w);
        let m = px.len() as f64;
        let mut value = 0.0;
        let mut dpx = vec![0.0; px.len()];
        let mut dpy = vec![0.0; px.len()];
        for i in 0..px.len() {
            let mp = (px[i] * px[i] + py[i] * py[i] + self.eps).sqrt();
            let mg = (gx[i] * gx[i] + gy[i] * gy[i] + self.eps).sqrt();
            let d = mp - mg;
            value += d.abs();
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            dpx[i] = s * px[i] / (mp * m);
            dpy[i] = s * py[i] / (mp * m);
        }
        let mut grad = vec![0.0; h * w];
        sobel_adjoint(&dpx, &dpy, h, w, &mut grad);
        Some((value / m, grad))
    }
}

impl Perceptual for SobelProxy {
    fn value_and_grad(&self, pred: &[f64], gt: &[f64], h: usize, w: usize) -> (f64, Vec<f64>) {
        let mut levels: Vec<(Vec<f64>, Vec<f64>, usize, usize)> = vec![(pred.to_vec(), gt.to_vec(), h, w)];
        for _ in 1..self.scales {
            let (p, g, lh, lw) = levels.last().expect("non-empty");
            if *lh < 2 || *lw < 2 {
                break;
            }
            let (pp, nh, nw) = pool2(p, *lh, *lw);
            let (gp, _, _) = pool2(g, *lh, *lw);
            levels.push((pp, gp, nh, nw));
        }
        let results: Vec<Option<(f64, Vec<f64>)>> = levels.iter().map(|(p, g, lh, lw)| self.level(p, g, *lh, *lw)).collect();
        let used = results.iter().filter(|r| r.is_some()).count();
        if used == 0 {
            return (0.0, vec![0.0; h * w]);
        }
        let scale = 1.0 / used as f64;
        let mut value = 0.0;
        // propagate from the coarsest level back to full resolution
        let mut carry: Vec<f64> = Vec::new();
        for (li, r) in results.iter().enumerate().rev() {
            let (_, _, lh, lw) = &levels[li];
            let mut grad = vec![0.0; lh * lw];
            if let Some((v, g)) = r {
                value += v * scale;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b * scale;
                }
            }
            if !carry.is_empty() {
                pool2_adjoint(&carry, *lh, *lw, &mut grad);
            }
            carry = grad;
        }
        (value, carry)
    }
}

/// `mean_b |x_b|` per pixel.
pub fn magnitude_average(reps: &[Vec<Complex64>]) -> Vec<f64> {
    let n = reps.first().map_or(0, Vec::len);
    let inv = 1.0 / reps.len().max(1) as f64;
    let mut out = vec![0.0; n];
    for r in reps {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v.norm() * inv;
        }
    }
    out
}

/// Pulls a gradient on the magnitude average back to each repetition.
/// The magnitude is non-differentiable at zero; that subgradient is 0.
pub fn magnitude_average_backward(reps: &[Vec<Complex64>], grad: &[f64]) -> Vec<Vec<Complex64>> {
    let inv = 1.0 / reps.len().max(1) as f64;
    reps.iter()
        .map(|r| {
            r.iter()
                .zip(grad)
                .map(|(v, &g)| {
                    let m = v.norm();
                    if m > 0.0 {
                        v * (g * inv / m)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// `mean |pred - gt| + w * perceptual(pred, gt)` and its gradient.
pub fn loss_with_grad(
    pred: &[f64],
    gt: &[f64],
    h: usize,
    w: usize,
    weight: f64,
    perceptual: &dyn Perceptual,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if pred.len() != h * w || gt.len() != h * w {
        return Err(Error::Core(pfrecon_core::Error::InvalidInput(format!(
            "loss inputs have {} and {} pixels, expected {}",
            pred.len(),
            gt.len(),
            h * w
        ))));
    }
    let n = pred.len() as f64;
    let mut l1 = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let d = p - g;
        l1 += d.abs();
        grad[i] = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    l1 /= n;
    let (perc, pgrad) = if weight != 0.0 {
        perceptual.value_and_grad(pred, gt, h, w)
    } else {
        (perceptual.value(pred, gt, h, w), vec![0.0; pred.len()])
    };
    for (a, b) in grad.iter_mut().zip(&pgrad) {
        *a += weight * b;
    }
    Ok((
        LossBreakdown {
            l1,
            perceptual: perc,
            total: l1 + weight * perc,
        },
        grad,
    ))
}

pub fn loss(pred: &[f64], gt: &[f64], h: usize, w: usize, weight: f64, perceptual: &dyn Perceptual) -> Result<LossBreakdown> {
    loss_with_grad(pred, gt, h, w, weight, perceptual).map(|(l, _)| l)
}
