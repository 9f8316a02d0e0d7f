//! Location of the strongest phase-encode line in fully sampled k-space.

use pfrecon_core::{fft2c, make_pf_mask, ComplexImage, Pff, RepetitionSet};
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmaxHistogram {
    /// `counts[j]`: repetitions whose maximum lies on PE line `j`
    /// (centered ordering, DC at `W / 2`).
    pub counts: Vec<usize>,
    pub total: usize,
    /// Repetitions whose maximum lies on a line the mask does not acquire.
    pub out_of_region: usize,
    pub out_of_region_fraction: f64,
}

/// PE line holding the largest `|k|` (first one on ties).
pub fn pe_argmax(img: &ComplexImage) -> Result<usize> {
    let k = fft2c(img)?;
    let (h, w) = k.shape();
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..w {
        let m = (0..h).map(|r| k.get(r, j).norm()).fold(f64::NEG_INFINITY, f64::max);
        if m > best.1 {
            best = (j, m);
        }
    }
    Ok(best.0)
}

pub fn max_freq_histogram(sets: &[RepetitionSet<ComplexImage>], pff: Pff) -> Result<KmaxHistogram> {
    let w = sets.first().map_or(0, |s| s.shape().1);
    let mut counts = vec![0; w];
    if sets.is_empty() {
        return Ok(KmaxHistogram {
            counts,
            total: 0,
            out_of_region: 0,
            out_of_region_fraction: 0.0,
        });
    }
    let mask = make_pf_mask(w, pff)?;
    let (mut total, mut out) = (0, 0);
    for set in sets {
        for img in set.iter() {
            let j = pe_argmax(img)?;
            counts[j] += 1;
            total += 1;
            if !mask.is_acquired(j) {
                out += 1;
            }
        }
    }
    Ok(KmaxHistogram {
        counts,
        total,
        out_of_region: out,
        out_of_region_fraction: out as f64 / total as f64,
    })
}
