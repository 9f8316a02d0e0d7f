//! Centered, orthonormal 2-D DFT.
//!
//! `fft2c` places DC at `(H / 2, W / 2)` and scales by `1 / sqrt(H * W)`, so
//! it is unitary and its adjoint equals `ifft2c`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::image::{ComplexImage, KSpaceData};
use crate::mask::SamplingMask;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction))
}

/// Centered transform of one contiguous line, in place.
fn centered_line(line: &mut [Complex64], fft: &dyn Fft<f64>, scratch: &mut [Complex64]) {
    let n = line.len();
    let c = n / 2;
    // ifftshift: element at the center index moves to 0
    line.rotate_left(c);
    fft.process_with_scratch(line, scratch);
    // fftshift: element 0 moves to the center index
    line.rotate_right(c);
    let s = 1.0 / (n as f64).sqrt();
    for v in line.iter_mut() {
        *v *= s;
    }
}

/// Applies the centered orthonormal transform along both axes of a
/// row-major `(h, w)` buffer.
pub fn centered_fft2_inplace(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    assert_eq!(data.len(), h * w);
    let dir = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    let row_fft = plan(w, dir);
    let col_fft = plan(h, dir);
    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

    for row in data.chunks_mut(w) {
        centered_line(row, row_fft.as_ref(), &mut scratch);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for col in 0..w {
        for (r, v) in column.iter_mut().enumerate() {
            *v = data[r * w + col];
        }
        centered_line(&mut column, col_fft.as_ref(), &mut scratch);
        for (r, v) in column.iter().enumerate() {
            data[r * w + col] = *v;
        }
    }
}

pub fn fft2c(img: &ComplexImage) -> Result<KSpaceData> {
    if !img.is_finite() {
        return Err(Error::InvalidInput("non-finite image".into()));
    }
    let (h, w) = img.shape();
    let mut data = img.data().to_vec();
    centered_fft2_inplace(&mut data, h, w, false);
    Ok(KSpaceData::from_raw(h, w, data, SamplingMask::full(w)?))
}

/// Inverse (and adjoint) of [`fft2c`]. Samples outside the mask are zero by
/// the `KSpaceData` invariant, so this is also the zero-filled image.
pub fn ifft2c(k: &KSpaceData) -> Result<ComplexImage> {
    if !k.is_finite() {
        return Err(Error::InvalidInput("non-finite k-space".into()));
    }
    let (h, w) = k.shape();
    let mut data = k.samples().to_vec();
    centered_fft2_inplace(&mut data, h, w, true);
    Ok(ComplexImage::from_raw(h, w, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ComplexImage {
        ComplexImage::from_fn(h, w, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn constant_image_maps_to_center_delta() {
        let (h, w) = (12, 10);
        let c = Complex64::new(0.7, -0.2);
        let img = ComplexImage::from_fn(h, w, |_, _| c).unwrap();
        let k = fft2c(&img).unwrap();
        let scale = ((h * w) as f64).sqrt();
        for r in 0..h {
            for col in 0..w {
                let v = k.get(r, col);
                if r == h / 2 && col == w / 2 {
                    assert!((v - c * scale).norm() < 1e-12);
                } else {
                    assert!(v.norm() < 1e-12, "({r},{col}) = {v}");
                }
            }
        }
    }

    #[test]
    fn centered_delta_inverts_to_ones() {
        for (h, w) in [(8, 8), (9, 11), (16, 10)] {
            let mask = SamplingMask::full(w).unwrap();
            let mut s = vec![Complex64::new(0.0, 0.0); h * w];
            s[(h / 2) * w + w / 2] = Complex64::new(((h * w) as f64).sqrt(), 0.0);
            let k = KSpaceData::new(h, w, s, mask).unwrap();
            let img = ifft2c(&k).unwrap();
            for v in img.data() {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_kspace_gives_zero_image() {
        let k = KSpaceData::new(8, 8, vec![Complex64::new(0.0, 0.0); 64], SamplingMask::full(8).unwrap()).unwrap();
        assert!(ifft2c(&k).unwrap().data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn unitary_and_invertible_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let h = rng.random_range(8..=256);
            let w = rng.random_range(8..=256);
            let x = random_image(&mut rng, h, w);
            let k = fft2c(&x).unwrap();
            let back = ifft2c(&k).unwrap();
            assert!(rel_err(back.data(), x.data()) < 1e-10);
            let e_img = x.norm().powi(2);
            let e_k: f64 = k.samples().iter().map(|v| v.norm_sqr()).sum();
            assert!(((e_k - e_img) / e_img).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (h, w) in [(8, 8), (17, 12), (32, 45)] {
            let x = random_image(&mut rng, h, w);
            let y_img = random_image(&mut rng, h, w);
            let y = KSpaceData::new(h, w, y_img.data().to_vec(), SamplingMask::full(w).unwrap()).unwrap();
            let fx = fft2c(&x).unwrap();
            let lhs: Complex64 = fx.samples().iter().zip(y.samples()).map(|(a, b)| a * b.conj()).sum();
            let ify = ifft2c(&y).unwrap();
            let rhs: Complex64 = x.data().iter().zip(ify.data()).map(|(a, b)| a * b.conj()).sum();
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = ComplexImage::zeros(8, 8).unwrap();
        x.data_mut()[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(fft2c(&x), Err(Error::InvalidInput(_))));
    }
}
