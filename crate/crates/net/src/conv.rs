//! 3x3 convolutions with zero padding 1 over channel-major feature maps.
//!
//! A feature map with `c` channels over a batch geometry stores
//! `data[ch * n + idx]` with `n = batch * h * w` and
//! `idx = b * h * w + y * w + x`. Weights are row-major
//! `(c_out, c_in * 9)` with the column index `ci * 9 + ky * 3 + kx`.

use crate::real::{matmul, Mat, Real};

pub const KERNEL: usize = 3;
pub const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geom {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
}

impl Geom {
    pub fn new(batch: usize, h: usize, w: usize) -> Self {
        Self { batch, h, w }
    }

    /// Columns of a feature map: `batch * h * w`.
    pub fn n(&self) -> usize {
        self.batch * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds `input` (`c_in x n`) into `col` (`c_in * 9 x n`).
pub fn im2col<T: Real>(input: &[T], c_in: usize, g: Geom, col: &mut Vec<T>) {
    let n = g.n();
    debug_assert_eq!(input.len(), c_in * n);
    col.clear();
    col.resize(c_in * TAPS * n, T::ZERO);
    let (h, w) = (g.h, g.w);
    for ci in 0..c_in {
        let src_ch = &input[ci * n..(ci + 1) * n];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = ci * TAPS + ky * KERNEL + kx;
                let dst_row = &mut col[row * n..(row + 1) * n];
                for b in 0..g.batch {
                    let src = &src_ch[b * h * w..(b + 1) * h * w];
                    let dst = &mut dst_row[b * h * w..(b + 1) * h * w];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let drow = &mut dst[y * w..(y + 1) * w];
                        match kx {
                            0 => drow[1..].copy_from_slice(&srow[..w - 1]),
                            1 => drow.copy_from_slice(srow),
                            _ => drow[..w - 1].copy_from_slice(&srow[1..]),
                        }
                    }
                }
            }
        }
    }
}

/// Folds `col` (`c_in * 9 x n`) back and adds it into `out` (`c_in x n`).
/// Adjoint of [`im2col`].
pub fn col2im_add<T: Real>(col: &[T], c_in: usize, g: Geom, out: &mut [T]) {
    let n = g.n();
    debug_assert_eq!(col.len(), c_in * TAPS * n);
    debug_assert_eq!(out.len(), c_in * n);
    let (h, w) = (g.h, g.w);
    for ci in 0..c_in {
        let dst_ch = &mut out[ci * n..(ci + 1) * n];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = ci * TAPS + ky * KERNEL + kx;
                let src_row = &col[row * n..(row + 1) * n];
                for b in 0..g.batch {
                    let src = &src_row[b * h * w..(b + 1) * h * w];
                    let dst = &mut dst_ch[b * h * w..(b + 1) * h * w];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let crow = &src[y * w..(y + 1) * w];
                        let drow = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                        match kx {
                            0 => add_into(&mut drow[..w - 1], &crow[1..]),
                            1 => add_into(drow, crow),
                            _ => add_into(&mut drow[1..], &crow[..w - 1]),
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `out = weight * col + bias`, with `out` sized `c_out x n`.
pub fn conv_apply<T: Real>(weight: &[T], bias: Option<&[T]>, c_out: usize, k: usize, col: &[T], n: usize, out: &mut Vec<T>) {
    out.clear();
    out.resize(c_out * n, T::ZERO);
    if let Some(bias) = bias {
        for (row, &b) in out.chunks_mut(n).zip(bias) {
            row.fill(b);
        }
        matmul(Mat::new(weight, c_out, k), Mat::new(col, k, n), T::ONE, out);
    } else {
        matmul(Mat::new(weight, c_out, k), Mat::new(col, k, n), T::ZERO, out);
    }
}

/// Accumulates `dweight += dout * col^T` and `dbias += rowsum(dout)`.
pub fn conv_param_grads<T: Real>(dout: &[T], col: &[T], c_out: usize, k: usize, n: usize, dweight: &mut [T], dbias: Option<&mut [T]>) {
    matmul(Mat::new(dout, c_out, n), Mat::new(col, k, n).t(), T::ONE, dweight);
    if let Some(dbias) = dbias {
        for (row, db) in dout.chunks(n).zip(dbias.iter_mut()) {
            *db += row.iter().copied().sum::<T>();
        }
    }
}

/// `dcol = weight^T * dout`, sized `k x n`.
pub fn conv_input_grad_col<T: Real>(weight: &[T], dout: &[T], c_out: usize, k: usize, n: usize, dcol: &mut Vec<T>) {
    dcol.clear();
    dcol.resize(k * n, T::ZERO);
    matmul(Mat::new(weight, c_out, k).t(), Mat::new(dout, c_out, n), T::ZERO, dcol);
}

/// Full 3x3 convolution of a `c_in x n` input, returning `c_out x n`.
pub fn conv3x3<T: Real>(input: &[T], c_in: usize, weight: &[T], bias: Option<&[T]>, c_out: usize, g: Geom) -> Vec<T> {
    let mut col = Vec::new();
    im2col(input, c_in, g, &mut col);
    let mut out = Vec::new();
    conv_apply(weight, bias, c_out, c_in * TAPS, &col, g.n(), &mut out);
    out
}
