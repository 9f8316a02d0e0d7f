//! Permutation-equivariant feature update across a repetition batch:
//! `f~_b = f_b + aggr({f_1, ..., f_B})`.

use serde::{Deserialize, Serialize};

use crate::conv::Geom;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    None,
    Mean,
    Max,
}

impl Aggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Mean => "mean",
            Self::Max => "max",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            _ => Err(format!("unknown aggregation {s:?}")),
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// State needed to backpropagate through one aggregation.
#[derive(Debug, Clone, Default)]
pub struct AggCache {
    /// Batch index of the maximum per `(channel, pixel)`, max mode only.
    argmax: Vec<u32>,
}

/// Applies the residual aggregation update in place on a `c x n` map.
///
/// The mean is summed in sorted order so the result does not depend on the
/// storage order of the batch; max is order-independent already.
pub fn aggregate_forward<T: Real>(mode: Aggregation, feat: &mut [T], c: usize, g: Geom) -> AggCache {
    let plane = g.plane();
    let n = g.n();
    let mut cache = AggCache::default();
    if mode == Aggregation::None {
        return cache;
    }
    if mode == Aggregation::Max {
        cache.argmax = vec![0; c * plane];
    }
    let inv_b = T::from_f64(1.0 / g.batch as f64);
    let mut vals: Vec<T> = Vec::with_capacity(g.batch);
    for ch in 0..c {
        let chan = &mut feat[ch * n..(ch + 1) * n];
        for p in 0..plane {
            let agg = match mode {
                Aggregation::Max => {
                    let mut best = 0;
                    for b in 1..g.batch {
                        if chan[b * plane + p] > chan[best * plane + p] {
                            best = b;
                        }
                    }
                    cache.argmax[ch * plane + p] = best as u32;
                    chan[best * plane + p]
                }
                Aggregation::Mean => {
                    vals.clear();
                    vals.extend((0..g.batch).map(|b| chan[b * plane + p]));
                    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                    vals.iter().copied().sum::<T>() * inv_b
                }
                Aggregation::None => unreachable!(),
            };
            for b in 0..g.batch {
                chan[b * plane + p] += agg;
            }
        }
    }
    cache
}

/// Converts the gradient with respect to the updated features into the
/// gradient with respect to the inputs, in place.
pub fn aggregate_backward<T: Real>(mode: Aggregation, cache: &AggCache, grad: &mut [T], c: usize, g: Geom) {
    let plane = g.plane();
    let n = g.n();
    if mode == Aggregation::None {
        return;
    }
    let inv_b = T::from_f64(1.0 / g.batch as f64);
    for ch in 0..c {
        let chan = &mut grad[ch * n..(ch + 1) * n];
        for p in 0..plane {
            let total: T = (0..g.batch).map(|b| chan[b * plane + p]).sum();
            match mode {
                Aggregation::Max => {
                    let best = cache.argmax[ch * plane + p] as usize;
                    chan[best * plane + p] += total;
                }
                Aggregation::Mean => {
                    let share = total * inv_b;
                    for b in 0..g.batch {
                        chan[b * plane + p] += share;
                    }
                }
                Aggregation::None => unreachable!(),
            }
        }
    }
}

/// Folds the branch decisions of an aggregation into a hash.
pub fn hash_cache(cache: &AggCache, state: &mut u64) {
    for &i in &cache.argmax {
        *state = state.rotate_left(5) ^ (i as u64).wrapping_mul(0x100_0000_01B3);
    }
}
