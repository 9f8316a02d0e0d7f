//! Conventional partial-Fourier reconstructions.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{centered_fft2_inplace, ifft2c};
use crate::image::{ComplexImage, KSpaceData, RealImage};
use crate::model::data_consistency;

/// Low-resolution phase map in radians, values in `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    phase: RealImage,
}

impl PhaseEstimate {
    pub fn phase(&self) -> &RealImage {
        &self.phase
    }

    fn unit_phasors(&self) -> Vec<Complex64> {
        self.phase.data().iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
    }
}

/// How the phase constraint is enforced in each POCS round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseStep {
    /// `|x| e^{i phi}`: the classic POCS step.
    #[default]
    Magnitude,
    /// `Re(x e^{-i phi}) e^{i phi}`: orthogonal projection onto the set of
    /// images whose phase is `phi` up to sign.
    RealPart,
}

pub fn zero_fill(y: &KSpaceData) -> Result<ComplexImage> {
    ifft2c(y)
}

/// Per-line weights of the phase-estimation filter over the symmetric band.
fn band_window(y: &KSpaceData, apodize: bool) -> Result<Vec<f64>> {
    let mask = y.mask();
    let w = mask.pe_size();
    let band = mask.symmetric_band();
    if band.len() < 2 {
        return Err(Error::DegenerateBand(band.len()));
    }
    let c = mask.center() as f64;
    let half = (mask.acquired_count() - mask.center()) as f64;
    Ok((0..w)
        .map(|j| {
            if !band.contains(&j) {
                0.0
            } else if apodize {
                // Hann window centered on DC, vanishing at distance `half`
                let t = (j as f64 - c) / half;
                (std::f64::consts::FRAC_PI_2 * t).cos().powi(2)
            } else {
                1.0
            }
        })
        .collect())
}

/// Phase of the image reconstructed from the symmetric band only.
pub fn lowres_phase(y: &KSpaceData, apodize: bool) -> Result<PhaseEstimate> {
    let weights = band_window(y, apodize)?;
    let (h, w) = y.shape();
    let mut buf: Vec<Complex64> = y
        .samples()
        .chunks(w)
        .flat_map(|row| row.iter().zip(&weights).map(|(v, &wt)| v * wt))
        .collect();
    centered_fft2_inplace(&mut buf, h, w, true);
    let phase = buf.iter().map(|z| z.arg()).collect();
    Ok(PhaseEstimate {
        phase: RealImage::from_raw(h, w, phase),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PocsOptions {
    pub iters: usize,
    pub apodize: bool,
    pub step: PhaseStep,
}

impl Default for PocsOptions {
    fn default() -> Self {
        Self {
            iters: 5,
            apodize: true,
            step: PhaseStep::Magnitude,
        }
    }
}

/// POCS with the default options and `iters` rounds.
pub fn pocs(y: &KSpaceData, iters: usize) -> Result<ComplexImage> {
    pocs_with(y, &PocsOptions { iters, ..Default::default() })
}

/// Alternates the phase-constraint step with hard data consistency,
/// starting from the zero-filled image. The last operation of each round is
/// the data projection, so the output always honours the measurements.
pub fn pocs_with(y: &KSpaceData, opts: &PocsOptions) -> Result<ComplexImage> {
    let phi = lowres_phase(y, opts.apodize)?;
    let phasors = phi.unit_phasors();
    let mut x = zero_fill(y)?;
    for _ in 0..opts.iters {
        for (v, p) in x.data_mut().iter_mut().zip(&phasors) {
            *v = match opts.step {
                PhaseStep::Magnitude => p * v.norm(),
                PhaseStep::RealPart => p * (*v * p.conj()).re,
            };
        }
        x = data_consistency(&x, y, 0.0)?;
    }
    Ok(x)
}

/// PE-axis homodyne pre-weighting: 2 on one-sided lines, a linear ramp from
/// 2 to 0 across the symmetric band, 0 on missing lines; `w(j) +
/// w(mirror(j)) = 2` for every line. A full mask yields all ones.
pub fn homodyne_weights(y: &KSpaceData) -> Vec<f64> {
    let mask = y.mask();
    let w = mask.pe_size();
    if mask.is_full() {
        return vec![1.0; w];
    }
    let c = mask.center() as f64;
    let half = (mask.acquired_count() - mask.center()) as f64;
    (0..w)
        .map(|j| {
            if mask.mirror(j) == j {
                // self-paired line (DC, or Nyquist for even sizes)
                1.0
            } else {
                (1.0 - (j as f64 - c) / half).clamp(0.0, 2.0)
            }
        })
        .collect()
}

pub fn homodyne(y: &KSpaceData) -> Result<ComplexImage> {
    let phi = lowres_phase(y, true)?;
    let weights = homodyne_weights(y);
    let (h, w) = y.shape();
    let mut buf: Vec<Complex64> = y
        .samples()
        .chunks(w)
        .flat_map(|row| row.iter().zip(&weights).map(|(v, &wt)| v * wt))
        .collect();
    centered_fft2_inplace(&mut buf, h, w, true);
    for (v, &p) in buf.iter_mut().zip(phi.phase().data()) {
        let e = Complex64::from_polar(1.0, p);
        *v = e * (*v * e.conj()).re;
    }
    Ok(ComplexImage::from_raw(h, w, buf))
}

/// Completes the missing lines by Hermitian symmetry, exact for real
/// images. Used as a test oracle.
pub fn conjugate_symmetry_oracle(y: &KSpaceData) -> Result<ComplexImage> {
    let (h, w) = y.shape();
    let mask = y.mask();
    let mut k = y.samples().to_vec();
    let ch = h / 2;
    for r in 0..h {
        let mr = (2 * ch + h - r) % h;
        for c in mask.acquired_count()..w {
            let mc = mask.mirror(c);
            debug_assert!(mask.is_acquired(mc));
            k[r * w + c] = y.get(mr, mc).conj();
        }
    }
    centered_fft2_inplace(&mut k, h, w, true);
    Ok(ComplexImage::from_raw(h, w, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{make_pf_mask, Pff, SamplingMask};
    use crate::model::forward;

    fn disk(h: usize, w: usize, offset: f64) -> ComplexImage {
        ComplexImage::from_fn(h, w, |r, c| {
            let dy = (r as f64 - h as f64 / 2.0) / (h as f64 * 0.35);
            let dx = (c as f64 - w as f64 / 2.0) / (w as f64 * 0.3);
            let v = if dx * dx + dy * dy < 1.0 { 0.8 } else { 0.0 };
            Complex64::new(v + offset, 0.0)
        })
        .unwrap()
    }

    fn max_err(a: &ComplexImage, b: &ComplexImage) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_fill_full_mask_is_exact() {
        let x = disk(16, 16, 0.0);
        let y = forward(&x, &SamplingMask::full(16).unwrap()).unwrap();
        assert!(max_err(&zero_fill(&y).unwrap(), &x) < 1e-12);
    }

    #[test]
    fn zero_fill_blurs_only_along_pe() {
        // features vary along PE only in the first half of the rows; rows in
        // the second half are flat
        let (h, w) = (32, 32);
        let x = ComplexImage::from_fn(h, w, |r, c| {
            let v = if r < h / 2 && (10..20).contains(&c) { 1.0 } else { 0.3 };
            Complex64::new(v, 0.0)
        })
        .unwrap();
        let mask = make_pf_mask(w, Pff::FIVE_EIGHTHS).unwrap();
        let zf = zero_fill(&forward(&x, &mask).unwrap()).unwrap();
        // a row without PE structure is reproduced exactly
        for c in 0..w {
            assert!((zf.get(24, c) - x.get(24, c)).norm() < 1e-8);
        }
        // a row crossing the edges is blurred
        let row_err: f64 = (0..w).map(|c| (zf.get(4, c) - x.get(4, c)).norm()).sum();
        assert!(row_err > 1e-2);
    }

    #[test]
    fn zero_kspace_reconstructs_to_zero() {
        let mask = make_pf_mask(16, Pff::FIVE_EIGHTHS).unwrap();
        let y = KSpaceData::new(16, 16, vec![Complex64::new(0.0, 0.0); 256], mask).unwrap();
        assert!(zero_fill(&y).unwrap().data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn lowres_phase_recovers_constant_phase() {
        let theta = 1.1;
        let x = disk(32, 32, 0.2).scale(1.0);
        let x = ComplexImage::from_fn(32, 32, |r, c| x.get(r, c) * Complex64::from_polar(1.0, theta)).unwrap();
        let y = forward(&x, &make_pf_mask(32, Pff::FIVE_EIGHTHS).unwrap()).unwrap();
        let phi = lowres_phase(&y, true).unwrap();
        for &p in phi.phase().data() {
            assert!((p - theta).abs() < 1e-6);
        }
    }

    #[test]
    fn lowres_phase_of_positive_image_is_zero() {
        let x = disk(32, 40, 0.2);
        let y = forward(&x, &make_pf_mask(40, Pff::FIVE_EIGHTHS).unwrap()).unwrap();
        let phi = lowres_phase(&y, true).unwrap();
        assert!(phi.phase().data().iter().all(|p| p.abs() < 1e-6));
    }

    #[test]
    fn lowres_phase_rejects_degenerate_band() {
        // W = 9, pff = 5/8: M = 6, band [3, 6) has 3 lines; pff = 9/16: M = 6 too.
        // W = 8 with pff = 9/16 gives M = 5 and a 2-line band, still valid;
        // W = 9 with pff = 5/9 gives M = 5 and a single line.
        let mask = make_pf_mask(9, Pff::new(5, 9).unwrap()).unwrap();
        let y = KSpaceData::new(8, 9, vec![Complex64::new(1.0, 0.0); 72], mask).unwrap();
        assert!(matches!(lowres_phase(&y, true), Err(Error::DegenerateBand(1))));
    }

    #[test]
    fn pocs_zero_iterations_is_zero_fill() {
        let x = disk(16, 16, 0.0);
        let y = forward(&x, &make_pf_mask(16, Pff::FIVE_EIGHTHS).unwrap()).unwrap();
        assert_eq!(pocs(&y, 0).unwrap(), zero_fill(&y).unwrap());
    }

    #[test]
    fn pocs_output_is_data_consistent() {
        let x = ComplexImage::from_fn(16, 16, |r, c| Complex64::from_polar(1.0 + r as f64 * 0.1, (c * r) as f64 * 0.3)).unwrap();
        let mask = make_pf_mask(16, Pff::FIVE_EIGHTHS).unwrap();
        let y = forward(&x, &mask).unwrap();
        let out = forward(&pocs(&y, 3).unwrap(), &mask).unwrap();
        for (a, b) in out.samples().iter().zip(y.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn homodyne_full_mask_is_identity() {
        let x = disk(16, 16, 0.1);
        let x = ComplexImage::from_fn(16, 16, |r, c| x.get(r, c) * Complex64::from_polar(1.0, 0.4)).unwrap();
        let y = forward(&x, &SamplingMask::full(16).unwrap()).unwrap();
        assert!(homodyne_weights(&y).iter().all(|&w| w == 1.0));
        assert!(max_err(&homodyne(&y).unwrap(), &x) < 1e-8);
    }

    #[test]
    fn homodyne_weights_pair_to_two() {
        for w in [16usize, 17, 64, 108] {
            for pff in [Pff::FIVE_EIGHTHS, Pff::SIX_EIGHTHS, Pff::SEVEN_EIGHTHS] {
                let mask = make_pf_mask(w, pff).unwrap();
                let y = KSpaceData::new(8, w, vec![Complex64::new(0.0, 0.0); 8 * w], mask.clone()).unwrap();
                let wt = homodyne_weights(&y);
                for j in 0..w {
                    assert!((wt[j] + wt[mask.mirror(j)] - 2.0).abs() < 1e-12, "w={w} j={j}");
                    if !mask.is_acquired(j) {
                        assert_eq!(wt[j], 0.0);
                    }
                }
                for j in 1..mask.symmetric_band().start {
                    assert_eq!(wt[j], 2.0);
                }
            }
        }
    }

    #[test]
    fn oracle_exact_for_real_images() {
        for w in [16usize, 17] {
            let x = disk(16, w, 0.0);
            for pff in [Pff::FIVE_EIGHTHS, Pff::SIX_EIGHTHS, Pff::SEVEN_EIGHTHS, Pff::FULL] {
                let y = forward(&x, &make_pf_mask(w, pff).unwrap()).unwrap();
                assert!(max_err(&conjugate_symmetry_oracle(&y).unwrap(), &x) < 1e-8);
            }
        }
    }

    #[test]
    fn oracle_fails_on_complex_images() {
        let x = ComplexImage::from_fn(16, 16, |r, c| Complex64::from_polar(1.0, (r + 2 * c) as f64 * 0.2)).unwrap();
        let y = forward(&x, &make_pf_mask(16, Pff::FIVE_EIGHTHS).unwrap()).unwrap();
        assert!(max_err(&conjugate_symmetry_oracle(&y).unwrap(), &x) > 1e-2);
    }
}
