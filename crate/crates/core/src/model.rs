//! Measurement model `y = A x + n` and the data-consistency proximal step.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fft::{centered_fft2_inplace, fft2c, ifft2c};
use crate::image::{apply_mask, ComplexImage, KSpaceData};
use crate::mask::SamplingMask;

/// Noiseless PF acquisition: `fft2c` followed by masking.
pub fn forward(img: &ComplexImage, mask: &SamplingMask) -> Result<KSpaceData> {
    check_mask(img.shape(), mask)?;
    let k = fft2c(img)?;
    let (h, w) = k.shape();
    let mut samples = k.into_samples();
    apply_mask(&mut samples, w, mask);
    Ok(KSpaceData::from_raw(h, w, samples, mask.clone()))
}

/// PF acquisition with additive complex Gaussian noise; `sigma` is the
/// standard deviation of each of the real and imaginary parts.
pub fn forward_noisy<R: Rng + ?Sized>(
    img: &ComplexImage,
    mask: &SamplingMask,
    sigma: f64,
    rng: &mut R,
) -> Result<KSpaceData> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sigma {sigma}")));
    }
    check_mask(img.shape(), mask)?;
    let k = fft2c(img)?;
    let (h, w) = k.shape();
    let mut samples = k.into_samples();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        for v in samples.iter_mut() {
            *v += Complex64::new(normal.sample(rng), normal.sample(rng));
        }
    }
    apply_mask(&mut samples, w, mask);
    Ok(KSpaceData::from_raw(h, w, samples, mask.clone()))
}

fn check_mask(shape: (usize, usize), mask: &SamplingMask) -> Result<()> {
    if mask.pe_size() != shape.1 {
        return Err(Error::ShapeMismatch {
            expected: (shape.0, mask.pe_size()),
            actual: shape,
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda {lambda}")));
    }
    Ok(())
}

/// Proximal step on the data term:
/// `z - 1/(1+lambda) A^*(A z - y)`.
///
/// In k-space, acquired lines become `(lambda * k_z + y) / (1 + lambda)` and
/// the rest keep `k_z`; `lambda = 0` is the hard projection onto the
/// measurements.
pub fn data_consistency(z: &ComplexImage, y: &KSpaceData, lambda: f64) -> Result<ComplexImage> {
    check_lambda(lambda)?;
    if z.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: y.shape(),
            actual: z.shape(),
        });
    }
    if !z.is_finite() {
        return Err(Error::InvalidInput("non-finite image".into()));
    }
    let (h, w) = z.shape();
    let mut buf = z.data().to_vec();
    data_consistency_inplace(&mut buf, h, w, y, lambda);
    Ok(ComplexImage::from_raw(h, w, buf))
}

/// Buffer-level data consistency used by the unrolled network. `buf` holds
/// a row-major image on entry and the projected image on exit.
pub fn data_consistency_inplace(buf: &mut [Complex64], h: usize, w: usize, y: &KSpaceData, lambda: f64) {
    debug_assert_eq!(y.shape(), (h, w));
    centered_fft2_inplace(buf, h, w, false);
    let m = y.mask().acquired_count();
    let keep = lambda / (1.0 + lambda);
    let take = 1.0 / (1.0 + lambda);
    for (row, meas) in buf.chunks_mut(w).zip(y.samples().chunks(w)) {
        for (v, s) in row[..m].iter_mut().zip(&meas[..m]) {
            *v = if lambda == 0.0 { *s } else { *v * keep + *s * take };
        }
    }
    centered_fft2_inplace(buf, h, w, true);
}

/// Adjoint of the linear part of [`data_consistency_inplace`] with respect
/// to its image input. The map is `F^H D F` with a real diagonal `D`, so it
/// is self-adjoint; gradients propagate through the same structure.
pub fn data_consistency_adjoint_inplace(grad: &mut [Complex64], h: usize, w: usize, mask: &SamplingMask, lambda: f64) {
    centered_fft2_inplace(grad, h, w, false);
    let m = mask.acquired_count();
    let keep = lambda / (1.0 + lambda);
    for row in grad.chunks_mut(w) {
        for v in &mut row[..m] {
            *v = if lambda == 0.0 { Complex64::new(0.0, 0.0) } else { *v * keep };
        }
    }
    centered_fft2_inplace(grad, h, w, true);
}

/// `x0 = A^* y`.
pub fn adjoint(y: &KSpaceData) -> Result<ComplexImage> {
    ifft2c(y)
}
