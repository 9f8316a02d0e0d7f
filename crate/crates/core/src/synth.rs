//! Synthetic complex phantoms with controllable phase pathology.
//!
//! Magnitudes are piecewise-smooth ellipse mixtures shared by all
//! repetitions of a slice. Each repetition gets the shared smooth phase
//! plus its own localized high-frequency phase patches, so the signal lost
//! to partial-Fourier sampling differs between repetitions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ComplexImage, RealImage, RepetitionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    Constant,
    SmoothPoly,
    SmoothPlusPatches,
}

impl std::str::FromStr for PhaseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "smooth_poly" | "smooth-poly" => Ok(Self::SmoothPoly),
            "smooth_plus_patches" | "smooth-plus-patches" => Ok(Self::SmoothPlusPatches),
            _ => Err(Error::InvalidInput(format!("unknown phase mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub n_ellipses: usize,
    pub phase_mode: PhaseMode,
    /// Patches per repetition.
    pub patch_count: usize,
    /// Highest patch frequency along PE, cycles per field of view.
    pub patch_max_freq: f64,
    /// Lowest patch frequency; `None` means half of the maximum.
    pub patch_min_freq: Option<f64>,
    /// Peak phase excursion of a patch, radians.
    pub patch_amplitude: f64,
    /// Gaussian radius of a patch as a fraction of the PE size.
    pub patch_radius: f64,
    /// Peak coefficient of the shared polynomial phase, radians.
    pub poly_amplitude: f64,
    /// Standard deviation of the real and imaginary noise parts.
    pub noise_sigma: f64,
    pub n_repetitions: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            n_ellipses: 6,
            phase_mode: PhaseMode::SmoothPlusPatches,
            patch_count: 2,
            patch_max_freq: 16.0,
            patch_min_freq: None,
            patch_amplitude: 2.5,
            patch_radius: 0.07,
            poly_amplitude: 1.0,
            noise_sigma: 0.01,
            n_repetitions: 6,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.height < crate::image::MIN_SIZE || self.width < crate::image::MIN_SIZE {
            return bad("phantom smaller than 8x8");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if self.n_repetitions == 0 {
            return bad("n_repetitions must be at least 1");
        }
        if !(self.patch_max_freq >= 0.0) || !(self.patch_radius > 0.0) || !self.patch_amplitude.is_finite() {
            return bad("invalid patch parameters");
        }
        if let Some(lo) = self.patch_min_freq {
            if !(lo >= 0.0 && lo <= self.patch_max_freq) {
                return bad("patch_min_freq outside [0, patch_max_freq]");
            }
        }
        Ok(())
    }

    /// Seed of slice `index` in a multi-slice dataset.
    pub fn slice_seed(&self, index: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
            ^ 0x5851_F42D_4C95_7F2D
    }
}

/// A localized phase perturbation of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePatch {
    pub center: (f64, f64),
    pub radius: f64,
    pub amplitude: f64,
    /// Cycles per field of view along PE.
    pub frequency: f64,
    pub offset: f64,
}

impl PhasePatch {
    pub fn phase_at(&self, row: usize, col: usize, pe_size: usize) -> f64 {
        let dr = row as f64 - self.center.0;
        let dc = col as f64 - self.center.1;
        let env = (-(dr * dr + dc * dc) / (2.0 * self.radius * self.radius)).exp();
        self.amplitude * env * (2.0 * PI * self.frequency * dc / pe_size as f64 + self.offset).sin()
    }

    /// Pixels within `scale` radii of the patch center.
    pub fn support(&self, h: usize, w: usize, scale: f64) -> Vec<bool> {
        let lim = (scale * self.radius).powi(2);
        (0..h * w)
            .map(|i| {
                let dr = (i / w) as f64 - self.center.0;
                let dc = (i % w) as f64 - self.center.1;
                dr * dr + dc * dc <= lim
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    /// Ground-truth repetitions.
    pub reps: RepetitionSet<ComplexImage>,
    /// Noise-free magnitude shared by the repetitions.
    pub magnitude: RealImage,
    /// Phase patches per repetition.
    pub patches: Vec<Vec<PhasePatch>>,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w) = (spec.height, spec.width);

    let magnitude = ellipse_magnitude(&mut rng, h, w, spec.n_ellipses);

    let shared_phase: Vec<f64> = match spec.phase_mode {
        PhaseMode::Constant => vec![rng.random_range(-PI..PI); h * w],
        PhaseMode::SmoothPoly | PhaseMode::SmoothPlusPatches => {
            let a = spec.poly_amplitude;
            let coef: [f64; 6] = std::array::from_fn(|_| rng.random_range(-a..a));
            (0..h * w)
                .map(|i| {
                    let u = 2.0 * (i / w) as f64 / h as f64 - 1.0;
                    let v = 2.0 * (i % w) as f64 / w as f64 - 1.0;
                    coef[0] + coef[1] * u + coef[2] * v + coef[3] * u * u + coef[4] * u * v + coef[5] * v * v
                })
                .collect()
        }
    };

    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut items = Vec::with_capacity(spec.n_repetitions);
    let mut patches = Vec::with_capacity(spec.n_repetitions);
    for _ in 0..spec.n_repetitions {
        let rep_patches = if spec.phase_mode == PhaseMode::SmoothPlusPatches {
            (0..spec.patch_count)
                .map(|_| random_patch(&mut rng, spec, &magnitude))
                .collect()
        } else {
            Vec::new()
        };
        let data = (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                let phase = shared_phase[i] + rep_patches.iter().map(|p: &PhasePatch| p.phase_at(r, c, w)).sum::<f64>();
                let mut v = Complex64::from_polar(magnitude.data()[i], phase);
                if spec.noise_sigma > 0.0 {
                    v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
                }
                v
            })
            .collect();
        items.push(ComplexImage::new(h, w, data)?);
        patches.push(rep_patches);
    }
    Ok(Phantom {
        reps: RepetitionSet::new(items)?,
        magnitude,
        patches,
    })
}

/// Generates `n_slices` phantoms with per-slice derived seeds.
pub fn generate_dataset(spec: &PhantomSpec, n_slices: usize) -> Result<Vec<Phantom>> {
    (0..n_slices)
        .map(|i| {
            generate_phantom(&PhantomSpec {
                seed: spec.slice_seed(i),
                ..spec.clone()
            })
        })
        .collect()
}

fn ellipse_magnitude(rng: &mut ChaCha8Rng, h: usize, w: usize, n_ellipses: usize) -> RealImage {
    let (hf, wf) = (h as f64, w as f64);
    // body outline
    let body = Ellipse {
        center: (hf / 2.0 + rng.random_range(-0.04..0.04) * hf, wf / 2.0 + rng.random_range(-0.04..0.04) * wf),
        axes: (rng.random_range(0.34..0.44) * hf, rng.random_range(0.32..0.42) * wf),
        angle: rng.random_range(-0.3..0.3),
    };
    let base = rng.random_range(0.5..0.7);
    let grad: (f64, f64) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let mut img = vec![0.0; h * w];
    for (i, v) in img.iter_mut().enumerate() {
        let (r, c) = ((i / w) as f64, (i % w) as f64);
        if body.contains(r, c) {
            *v = base + grad.0 * (r / hf - 0.5) + grad.1 * (c / wf - 0.5);
        }
    }
    for _ in 0..n_ellipses {
        let t = rng.random_range(0.0..2.0 * PI);
        let rad = rng.random_range(0.0..0.6);
        let e = Ellipse {
            center: (
                body.center.0 + rad * body.axes.0 * t.sin(),
                body.center.1 + rad * body.axes.1 * t.cos(),
            ),
            axes: (rng.random_range(0.04..0.16) * hf, rng.random_range(0.04..0.16) * wf),
            angle: rng.random_range(0.0..PI),
        };
        let delta = if rng.random_bool(0.5) {
            rng.random_range(0.15..0.4)
        } else {
            -rng.random_range(0.2..0.5)
        };
        for (i, v) in img.iter_mut().enumerate() {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            if e.contains(r, c) && body.contains(r, c) {
                *v += delta;
            }
        }
    }
    for v in &mut img {
        *v = v.clamp(0.0, 1.0);
    }
    RealImage::from_raw(h, w, img)
}

fn random_patch(rng: &mut ChaCha8Rng, spec: &PhantomSpec, magnitude: &RealImage) -> PhasePatch {
    let (h, w) = magnitude.shape();
    // place the patch on tissue
    let center = loop {
        let r = rng.random_range(0..h);
        let c = rng.random_range(0..w);
        if magnitude.get(r, c) > 0.2 {
            break (r as f64, c as f64);
        }
    };
    let hi = spec.patch_max_freq;
    let lo = spec.patch_min_freq.unwrap_or(hi / 2.0);
    PhasePatch {
        center,
        radius: spec.patch_radius * w as f64 * rng.random_range(0.8..1.25),
        amplitude: spec.patch_amplitude * rng.random_range(0.75..1.0),
        frequency: if hi > lo { rng.random_range(lo..hi) } else { hi },
        offset: rng.random_range(0.0..2.0 * PI),
    }
}

struct Ellipse {
    center: (f64, f64),
    axes: (f64, f64),
    angle: f64,
}

impl Ellipse {
    fn contains(&self, r: f64, c: f64) -> bool {
        let (dr, dc) = (r - self.center.0, c - self.center.1);
        let (s, co) = self.angle.sin_cos();
        let u = co * dr + s * dc;
        let v = -s * dr + co * dc;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }
}

/// Pixels inside the axis-aligned ellipse with the given center and
/// semi-axes (rows, cols).
pub fn ellipse_mask(h: usize, w: usize, center: (f64, f64), axes: (f64, f64)) -> Vec<bool> {
    let e = Ellipse {
        center,
        axes,
        angle: 0.0,
    };
    (0..h * w).map(|i| e.contains((i / w) as f64, (i % w) as f64)).collect()
}

/// Replaces an elliptical region with pure complex Gaussian noise, so the
/// magnitude there is Rayleigh (Rician with zero signal). Pixels outside the
/// ellipse are untouched.
pub fn inject_void<R: Rng + ?Sized>(
    img: &ComplexImage,
    center: (f64, f64),
    axes: (f64, f64),
    noise_sigma: f64,
    rng: &mut R,
) -> Result<ComplexImage> {
    let (h, w) = img.shape();
    if !(axes.0 > 0.0 && axes.1 > 0.0)
        || center.0 - axes.0 < 0.0
        || center.1 - axes.1 < 0.0
        || center.0 + axes.0 > (h - 1) as f64
        || center.1 + axes.1 > (w - 1) as f64
    {
        return Err(Error::InvalidInput(format!(
            "ellipse center {center:?} axes {axes:?} outside {h}x{w} image"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sigma {noise_sigma}")));
    }
    let inside = ellipse_mask(h, w, center, axes);
    let normal = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut out = img.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&inside) {
        if m {
            *v = if noise_sigma > 0.0 {
                Complex64::new(normal.sample(rng), normal.sample(rng))
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{conjugate_symmetry_oracle, lowres_phase};
    use crate::mask::{make_pf_mask, Pff};
    use crate::model::forward;

    #[test]
    fn deterministic_per_seed() {
        let spec = PhantomSpec {
            seed: 42,
            ..Default::default()
        };
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a.reps, b.reps);
        let c = generate_phantom(&PhantomSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.reps, c.reps);
    }

    #[test]
    fn constant_phase_is_real_up_to_global_phase() {
        let spec = PhantomSpec {
            phase_mode: PhaseMode::Constant,
            noise_sigma: 0.0,
            n_repetitions: 3,
            seed: 7,
            ..Default::default()
        };
        let ph = generate_phantom(&spec).unwrap();
        let items = ph.reps.items();
        assert_eq!(items[0], items[1]);
        assert_eq!(items[1], items[2]);
        let mask = make_pf_mask(64, Pff::FIVE_EIGHTHS).unwrap();
        for x in items {
            let rec = conjugate_symmetry_oracle_global_phase(x, &mask);
            let err = rec.data().iter().zip(x.data()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{err}");
        }
    }

    // remove the global phase, complete by symmetry, restore the phase
    fn conjugate_symmetry_oracle_global_phase(x: &ComplexImage, mask: &crate::mask::SamplingMask) -> ComplexImage {
        let theta = x.data().iter().find(|v| v.norm() > 0.0).unwrap().arg();
        let rot = Complex64::from_polar(1.0, -theta);
        let y = forward(&x.scale(1.0), mask).unwrap();
        let y_rot = crate::image::KSpaceData::new(64, 64, y.samples().iter().map(|v| v * rot).collect(), mask.clone()).unwrap();
        let rec = conjugate_symmetry_oracle(&y_rot).unwrap();
        ComplexImage::from_fn(64, 64, |r, c| rec.get(r, c) * rot.conj()).unwrap()
    }

    #[test]
    fn magnitudes_bounded_and_finite() {
        let spec = PhantomSpec {
            noise_sigma: 0.02,
            seed: 9,
            ..Default::default()
        };
        let ph = generate_phantom(&spec).unwrap();
        assert!(ph.magnitude.data().iter().all(|&m| (0.0..=1.0).contains(&m)));
        for x in ph.reps.iter() {
            assert!(x.is_finite());
            assert!(x.data().iter().all(|v| v.norm() <= 1.0 + 5.0 * 0.02 * 2f64.sqrt()));
        }
    }

    #[test]
    fn patches_above_band_defeat_lowres_phase() {
        let spec = PhantomSpec {
            noise_sigma: 0.0,
            patch_count: 1,
            patch_max_freq: 16.0,
            patch_min_freq: Some(12.0),
            n_repetitions: 4,
            seed: 11,
            ..Default::default()
        };
        // band cutoff at pff 5/8 on 64 lines: 64 * (5/8 - 1/2) = 8 cycles
        let ph = generate_phantom(&spec).unwrap();
        let mask = make_pf_mask(64, Pff::FIVE_EIGHTHS).unwrap();
        for (x, patches) in ph.reps.iter().zip(&ph.patches) {
            let phi = lowres_phase(&forward(x, &mask).unwrap(), true).unwrap();
            let support = patches[0].support(64, 64, 1.0);
            let mut worst: f64 = 0.0;
            for i in 0..64 * 64 {
                if support[i] && ph.magnitude.data()[i] > 0.2 {
                    let d = (x.data()[i].arg() - phi.phase().data()[i] + PI).rem_euclid(2.0 * PI) - PI;
                    worst = worst.max(d.abs());
                }
            }
            assert!(worst > 0.5, "max phase error {worst}");
        }
    }

    #[test]
    fn void_is_exactly_zero_without_noise() {
        let spec = PhantomSpec {
            seed: 5,
            n_repetitions: 1,
            ..Default::default()
        };
        let ph = generate_phantom(&spec).unwrap();
        let x = &ph.reps.items()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = inject_void(x, (30.0, 32.0), (5.0, 7.0), 0.0, &mut rng).unwrap();
        let inside = ellipse_mask(64, 64, (30.0, 32.0), (5.0, 7.0));
        let mut changed = 0;
        for i in 0..64 * 64 {
            if inside[i] {
                assert_eq!(out.data()[i].norm(), 0.0);
            } else {
                assert_eq!(out.data()[i], x.data()[i]);
            }
            if out.data()[i] != x.data()[i] {
                changed += 1;
            }
        }
        assert!(changed <= inside.iter().filter(|&&b| b).count());
        assert!(inject_void(x, (2.0, 32.0), (5.0, 7.0), 0.0, &mut rng).is_err());
    }

    #[test]
    fn void_noise_is_rayleigh() {
        let x = ComplexImage::from_fn(64, 64, |_, _| Complex64::new(0.5, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigma = 0.05;
        let out = inject_void(&x, (32.0, 32.0), (20.0, 20.0), sigma, &mut rng).unwrap();
        let inside = ellipse_mask(64, 64, (32.0, 32.0), (20.0, 20.0));
        let mags: Vec<f64> = out.data().iter().zip(&inside).filter(|(_, &m)| m).map(|(v, _)| v.norm()).collect();
        let mean = mags.iter().sum::<f64>() / mags.len() as f64;
        // Rayleigh mean: sigma * sqrt(pi / 2)
        assert!((mean / (sigma * (PI / 2.0).sqrt()) - 1.0).abs() < 0.05);
    }
}
