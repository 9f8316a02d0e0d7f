//! Residual CNN regularizer used by the weight-sharing and cascading
//! ablations: input conv, `depth` residual blocks, output conv.
//!
//! ```text
//! a_0 = relu(conv_in x)
//! a_i = relu(a_{i-1} + conv2(relu(conv1 a_{i-1})))
//! out = conv_out a_G
//! ```
//!
//! Batch aggregation is applied to the output of block `depth / 2`.

use crate::aggregate::{aggregate_backward, aggregate_forward, AggCache, Aggregation};
use crate::conv::{col2im_add, conv_apply, conv_input_grad_col, conv_param_grads, im2col, Geom, TAPS};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResNetDims {
    pub depth: usize,
    pub width: usize,
}

impl ResNetDims {
    /// Number of convolutions: input, two per block, output.
    pub fn conv_count(&self) -> usize {
        2 * self.depth + 2
    }

    /// `(c_in, c_out)` of convolution `i` in storage order.
    pub fn conv(&self, i: usize) -> (usize, usize) {
        let f = self.width;
        if i == 0 {
            (2, f)
        } else if i == self.conv_count() - 1 {
            (f, 2)
        } else {
            (f, f)
        }
    }

    pub fn aggregation_after(&self) -> usize {
        self.depth / 2
    }

    pub fn param_count(&self) -> usize {
        (0..self.conv_count())
            .map(|i| {
                let (ci, co) = self.conv(i);
                co * ci * TAPS + co
            })
            .sum()
    }
}

/// Borrowed weights of one convolution.
#[derive(Clone, Copy)]
pub struct ConvWeights<'a, T> {
    pub weight: &'a [T],
    pub bias: &'a [T],
}

pub struct ConvGrads<'a, T> {
    pub weight: &'a mut [T],
    pub bias: &'a mut [T],
}

/// Activations of one pass, enough to recompute every im2col in backward.
#[derive(Debug, Clone)]
pub struct ResNetCache<T> {
    x: Vec<T>,
    /// `a_0 .. a_G` after the ReLU and before aggregation.
    acts: Vec<Vec<T>>,
    /// Inner activation `relu(conv1 a)` of each block.
    inner: Vec<Vec<T>>,
    /// Block output after aggregation, if aggregation ran.
    aggregated: Option<Vec<T>>,
    agg: AggCache,
}

impl<T: Real> ResNetCache<T> {
    pub fn agg(&self) -> &AggCache {
        &self.agg
    }

    /// Hash of every ReLU on/off decision.
    pub fn hash_relu(&self, state: &mut u64) {
        for v in self.acts.iter().chain(&self.inner) {
            for chunk in v.chunks(64) {
                let bits = chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &x)| acc | (((x > T::ZERO) as u64) << i));
                *state = state.rotate_left(7) ^ bits.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            }
        }
    }
}

fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v {
        if !(*x > T::ZERO) {
            *x = T::ZERO;
        }
    }
}

pub fn resnet_forward<T: Real>(
    dims: ResNetDims,
    convs: &[ConvWeights<'_, T>],
    aggregation: Aggregation,
    x: &[T],
    g: Geom,
) -> (Vec<T>, ResNetCache<T>) {
    assert_eq!(convs.len(), dims.conv_count());
    let n = g.n();
    let f = dims.width;
    let mut col = Vec::new();
    let mut out = Vec::new();

    im2col(x, 2, g, &mut col);
    conv_apply(convs[0].weight, Some(convs[0].bias), f, 2 * TAPS, &col, n, &mut out);
    relu_inplace(&mut out);
    let mut acts = vec![out.clone()];
    let mut inner = Vec::with_capacity(dims.depth);
    let mut aggregated = None;
    let mut agg = AggCache::default();
    let mut a = out.clone();
    for i in 0..dims.depth {
        let c1 = convs[1 + 2 * i];
        let c2 = convs[2 + 2 * i];
        im2col(&a, f, g, &mut col);
        let mut t = Vec::new();
        conv_apply(c1.weight, Some(c1.bias), f, f * TAPS, &col, n, &mut t);
        relu_inplace(&mut t);
        im2col(&t, f, g, &mut col);
        conv_apply(c2.weight, Some(c2.bias), f, f * TAPS, &col, n, &mut out);
        for (o, &s) in out.iter_mut().zip(&a) {
            *o += s;
        }
        relu_inplace(&mut out);
        inner.push(t);
        acts.push(out.clone());
        a.copy_from_slice(&out);
        if i + 1 == dims.aggregation_after() && aggregation != Aggregation::None {
            agg = aggregate_forward(aggregation, &mut a, f, g);
            aggregated = Some(a.clone());
        }
    }
    let last = convs[dims.conv_count() - 1];
    im2col(&a, f, g, &mut col);
    conv_apply(last.weight, Some(last.bias), 2, f * TAPS, &col, n, &mut out);
    let cache = ResNetCache {
        x: x.to_vec(),
        acts,
        inner,
        aggregated,
        agg,
    };
    (out, cache)
}

/// Backpropagates `d_out` (`2 x n`), accumulating parameter gradients and
/// returning the gradient with respect to the input.
pub fn resnet_backward<T: Real>(
    dims: ResNetDims,
    convs: &[ConvWeights<'_, T>],
    grads: &mut [ConvGrads<'_, T>],
    aggregation: Aggregation,
    cache: &ResNetCache<T>,
    d_out: &[T],
    g: Geom,
) -> Vec<T> {
    let n = g.n();
    let f = dims.width;
    let k = f * TAPS;
    let last = dims.conv_count() - 1;
    let mut col = Vec::new();
    let mut dcol = Vec::new();

    // input of the output conv
    let block_in = |i: usize| -> &[T] {
        // activation consumed by block i (0-based), or by the output conv for i = depth
        if i == dims.aggregation_after() && i > 0 {
            if let Some(a) = &cache.aggregated {
                return a;
            }
        }
        &cache.acts[i]
    };

    im2col(block_in(dims.depth), f, g, &mut col);
    conv_param_grads(d_out, &col, 2, k, n, grads[last].weight, Some(&mut *grads[last].bias));
    conv_input_grad_col(convs[last].weight, d_out, 2, k, n, &mut dcol);
    let mut da = vec![T::ZERO; f * n];
    col2im_add(&dcol, f, g, &mut da);

    for i in (0..dims.depth).rev() {
        if i + 1 == dims.aggregation_after() {
            aggregate_backward(aggregation, &cache.agg, &mut da, f, g);
        }
        // through the final relu of block i
        for (d, &a) in da.iter_mut().zip(&cache.acts[i + 1]) {
            if !(a > T::ZERO) {
                *d = T::ZERO;
            }
        }
        let t = &cache.inner[i];
        let (j1, j2) = (1 + 2 * i, 2 + 2 * i);
        im2col(t, f, g, &mut col);
        conv_param_grads(&da, &col, f, k, n, grads[j2].weight, Some(&mut *grads[j2].bias));
        conv_input_grad_col(convs[j2].weight, &da, f, k, n, &mut dcol);
        let mut dt = vec![T::ZERO; f * n];
        col2im_add(&dcol, f, g, &mut dt);
        for (d, &v) in dt.iter_mut().zip(t) {
            if !(v > T::ZERO) {
                *d = T::ZERO;
            }
        }
        let a_in = block_in(i);
        im2col(a_in, f, g, &mut col);
        conv_param_grads(&dt, &col, f, k, n, grads[j1].weight, Some(&mut *grads[j1].bias));
        conv_input_grad_col(convs[j1].weight, &dt, f, k, n, &mut dcol);
        // skip connection keeps `da`, conv1 path adds to it
        col2im_add(&dcol, f, g, &mut da);
    }

    for (d, &a) in da.iter_mut().zip(&cache.acts[0]) {
        if !(a > T::ZERO) {
            *d = T::ZERO;
        }
    }
    im2col(&cache.x, 2, g, &mut col);
    conv_param_grads(&da, &col, f, 2 * TAPS, n, grads[0].weight, Some(&mut *grads[0].bias));
    conv_input_grad_col(convs[0].weight, &da, f, 2 * TAPS, n, &mut dcol);
    let mut dx = vec![T::ZERO; 2 * n];
    col2im_add(&dcol, 2, g, &mut dx);
    dx
}
