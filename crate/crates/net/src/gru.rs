//! Convolutional gated recurrent unit and the cell stack used as the
//! recurrent regularizer.
//!
//! Each cell keeps its hidden state across unrolled iterations:
//!
//! ```text
//! z  = sigmoid(conv_z[h; x])
//! r  = sigmoid(conv_r[h; x])
//! h~ = tanh(conv_c[r * h; x])
//! h' = (1 - z) * h + z * h~
//! ```
//!
//! The three kernels of a cell are stored as two matrices split by input
//! source: `wx` (`3 c_h x c_in * 9`) acting on `x` and `wh`
//! (`3 c_h x c_h * 9`) acting on the hidden state, rows ordered update,
//! reset, candidate; plus a `3 c_h` bias.

use crate::aggregate::{aggregate_backward, aggregate_forward, AggCache, Aggregation};
use crate::conv::{col2im_add, conv_input_grad_col, conv_param_grads, im2col, Geom, TAPS};
use crate::real::{matmul, Mat, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellDims {
    pub c_in: usize,
    pub c_hidden: usize,
}

impl CellDims {
    pub fn param_count(&self) -> usize {
        3 * ((self.c_in + self.c_hidden) * self.c_hidden * TAPS + self.c_hidden)
    }
}

/// Borrowed weights of one cell.
#[derive(Clone, Copy)]
pub struct CellWeights<'a, T> {
    pub wx: &'a [T],
    pub wh: &'a [T],
    pub bias: &'a [T],
}

/// Gradient buffers of one cell.
pub struct CellGrads<'a, T> {
    pub wx: &'a mut [T],
    pub wh: &'a mut [T],
    pub bias: &'a mut [T],
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CellCache<T> {
    x: Vec<T>,
    h_prev: Option<Vec<T>>,
    z: Vec<T>,
    r: Vec<T>,
    cand: Vec<T>,
}

/// One cell step. `h_prev = None` stands for the all-zero initial state.
pub fn cell_forward<T: Real>(
    dims: CellDims,
    w: CellWeights<'_, T>,
    x: &[T],
    h_prev: Option<&[T]>,
    g: Geom,
) -> (Vec<T>, CellCache<T>) {
    let CellDims { c_in, c_hidden: ch } = dims;
    let n = g.n();
    assert_eq!(x.len(), c_in * n, "cell input has wrong channel count");
    if let Some(h) = h_prev {
        assert_eq!(h.len(), ch * n, "hidden state has wrong channel count");
    }
    let kx = c_in * TAPS;
    let kh = ch * TAPS;

    let mut col = Vec::new();
    im2col(x, c_in, g, &mut col);
    // pre-activations of all three gates from x, plus bias
    let mut pre = vec![T::ZERO; 3 * ch * n];
    for (row, &b) in pre.chunks_mut(n).zip(w.bias) {
        row.fill(b);
    }
    matmul(Mat::new(w.wx, 3 * ch, kx), Mat::new(&col, kx, n), T::ONE, &mut pre);

    if let Some(h) = h_prev {
        im2col(h, ch, g, &mut col);
        matmul(Mat::new(&w.wh[..2 * ch * kh], 2 * ch, kh), Mat::new(&col, kh, n), T::ONE, &mut pre[..2 * ch * n]);
    }
    let (zr, cand_pre) = pre.split_at_mut(2 * ch * n);
    for v in zr.iter_mut() {
        *v = v.sigmoid();
    }
    let (z, r) = zr.split_at(ch * n);

    if let Some(h) = h_prev {
        let rh: Vec<T> = r.iter().zip(h).map(|(&a, &b)| a * b).collect();
        im2col(&rh, ch, g, &mut col);
        matmul(Mat::new(&w.wh[2 * ch * kh..], ch, kh), Mat::new(&col, kh, n), T::ONE, cand_pre);
    }
    for v in cand_pre.iter_mut() {
        *v = v.tanh();
    }
    let cand = &*cand_pre;

    let h_new: Vec<T> = match h_prev {
        Some(h) => (0..ch * n).map(|i| (T::ONE - z[i]) * h[i] + z[i] * cand[i]).collect(),
        None => (0..ch * n).map(|i| z[i] * cand[i]).collect(),
    };
    let cache = CellCache {
        x: x.to_vec(),
        h_prev: h_prev.map(<[T]>::to_vec),
        z: z.to_vec(),
        r: r.to_vec(),
        cand: cand.to_vec(),
    };
    (h_new, cache)
}

/// Backpropagates `dh_new` through one cell step. Returns the gradients
/// with respect to the input and to the previous hidden state.
pub fn cell_backward<T: Real>(
    dims: CellDims,
    w: CellWeights<'_, T>,
    grads: CellGrads<'_, T>,
    cache: &CellCache<T>,
    dh_new: &[T],
    g: Geom,
) -> (Vec<T>, Vec<T>) {
    let CellDims { c_in, c_hidden: ch } = dims;
    let n = g.n();
    let kx = c_in * TAPS;
    let kh = ch * TAPS;
    let m = ch * n;
    let CellCache { x, h_prev, z, r, cand } = cache;

    let mut da = vec![T::ZERO; 3 * m];
    let mut dh_prev = vec![T::ZERO; m];
    {
        let (da_z, rest) = da.split_at_mut(m);
        let (_, da_c) = rest.split_at_mut(m);
        for i in 0..m {
            let hp = h_prev.as_ref().map_or(T::ZERO, |h| h[i]);
            let d = dh_new[i];
            let dz = d * (cand[i] - hp);
            da_z[i] = dz * z[i] * (T::ONE - z[i]);
            da_c[i] = d * z[i] * (T::ONE - cand[i] * cand[i]);
            dh_prev[i] = d * (T::ONE - z[i]);
        }
    }

    let mut col = Vec::new();
    let mut dcol = Vec::new();
    if let Some(h) = h_prev {
        // candidate path through r * h
        let rh: Vec<T> = r.iter().zip(h).map(|(&a, &b)| a * b).collect();
        im2col(&rh, ch, g, &mut col);
        let da_c = &da[2 * m..];
        conv_param_grads(da_c, &col, ch, kh, n, &mut grads.wh[2 * ch * kh..], None);
        conv_input_grad_col(&w.wh[2 * ch * kh..], da_c, ch, kh, n, &mut dcol);
        let mut drh = vec![T::ZERO; m];
        col2im_add(&dcol, ch, g, &mut drh);
        let (_, rest) = da.split_at_mut(m);
        let (da_r, _) = rest.split_at_mut(m);
        for i in 0..m {
            dh_prev[i] += drh[i] * r[i];
            da_r[i] = drh[i] * h[i] * r[i] * (T::ONE - r[i]);
        }
    }

    // x path: all three gates
    im2col(x, c_in, g, &mut col);
    conv_param_grads(&da, &col, 3 * ch, kx, n, grads.wx, Some(grads.bias));
    conv_input_grad_col(w.wx, &da, 3 * ch, kx, n, &mut dcol);
    let mut dx = vec![T::ZERO; c_in * n];
    col2im_add(&dcol, c_in, g, &mut dx);

    if let Some(h) = h_prev {
        // hidden path of the update and reset gates
        im2col(h, ch, g, &mut col);
        conv_param_grads(&da[..2 * m], &col, 2 * ch, kh, n, &mut grads.wh[..2 * ch * kh], None);
        conv_input_grad_col(&w.wh[..2 * ch * kh], &da[..2 * m], 2 * ch, kh, n, &mut dcol);
        col2im_add(&dcol, ch, g, &mut dh_prev);
    }
    (dx, dh_prev)
}

/// Shape of a cell stack: `depth` cells, all of width `width` except the
/// last which has 2 channels (real and imaginary output).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackDims {
    pub depth: usize,
    pub width: usize,
}

impl StackDims {
    pub fn cell(&self, index: usize) -> CellDims {
        CellDims {
            c_in: if index == 0 { 2 } else { self.width },
            c_hidden: if index + 1 == self.depth { 2 } else { self.width },
        }
    }

    /// Cells after which the batch aggregation is applied.
    pub fn aggregation_after(&self) -> usize {
        self.depth / 2
    }

    pub fn param_count(&self) -> usize {
        (0..self.depth).map(|i| self.cell(i).param_count()).sum()
    }
}

/// Per-iteration record of a stack pass.
#[derive(Debug, Clone)]
pub struct StackCache<T> {
    cells: Vec<CellCache<T>>,
    agg: AggCache,
}

impl<T> StackCache<T> {
    pub fn agg(&self) -> &AggCache {
        &self.agg
    }
}

/// Runs the stack once. `hidden[i]` is the state of cell `i` from the
/// previous iteration (`None` before the first) and is replaced by the new
/// state. Returns the output of the last cell.
pub fn stack_forward<T: Real>(
    dims: StackDims,
    weights: &[CellWeights<'_, T>],
    aggregation: Aggregation,
    input: &[T],
    hidden: &mut [Option<Vec<T>>],
    g: Geom,
) -> (Vec<T>, StackCache<T>) {
    let mut caches = Vec::with_capacity(dims.depth);
    let mut agg = AggCache::default();
    let mut x = input.to_vec();
    for i in 0..dims.depth {
        let cd = dims.cell(i);
        let (h_new, cache) = cell_forward(cd, weights[i], &x, hidden[i].as_deref(), g);
        caches.push(cache);
        x = h_new.clone();
        hidden[i] = Some(h_new);
        if i + 1 == dims.aggregation_after() {
            agg = aggregate_forward(aggregation, &mut x, cd.c_hidden, g);
        }
    }
    (x, StackCache { cells: caches, agg })
}

/// Backpropagates one stack pass.
///
/// `d_out` is the gradient with respect to the last cell's output at this
/// iteration; `d_hidden[i]` carries the gradient with respect to the state
/// of cell `i` produced here (from its use at the next iteration) and is
/// replaced by the gradient with respect to the state consumed here.
/// Returns the gradient with respect to the stack input.
pub fn stack_backward<T: Real>(
    dims: StackDims,
    weights: &[CellWeights<'_, T>],
    grads: &mut [CellGrads<'_, T>],
    aggregation: Aggregation,
    cache: &StackCache<T>,
    d_out: &[T],
    d_hidden: &mut [Option<Vec<T>>],
    g: Geom,
) -> Vec<T> {
    let mut d = d_out.to_vec();
    for i in (0..dims.depth).rev() {
        let cd = dims.cell(i);
        if i + 1 == dims.aggregation_after() {
            aggregate_backward(aggregation, &cache.agg, &mut d, cd.c_hidden, g);
        }
        if let Some(dh) = &d_hidden[i] {
            for (a, &b) in d.iter_mut().zip(dh) {
                *a += b;
            }
        }
        let gr = &mut grads[i];
        let (dx, dh_prev) = cell_backward(
            cd,
            weights[i],
            CellGrads {
                wx: &mut *gr.wx,
                wh: &mut *gr.wh,
                bias: &mut *gr.bias,
            },
            &cache.cells[i],
            &d,
            g,
        );
        d_hidden[i] = if cache.cells[i].h_prev.is_some() {
            Some(dh_prev)
        } else {
            None
        };
        d = dx;
    }
    d
}
