//! Partial-Fourier MRI measurement model and conventional reconstructions.
//!
//! The image grid is `(H, W)` with the readout axis along rows and the
//! phase-encode axis along columns. Only the phase-encode axis is
//! sub-sampled.

pub mod classical;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod image;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod synth;

pub use classical::{conjugate_symmetry_oracle, homodyne, lowres_phase, pocs, pocs_with, zero_fill, PhaseEstimate, PhaseStep, PocsOptions};
pub use error::{Error, Result};
pub use fft::{fft2c, ifft2c};
pub use image::{ComplexImage, KSpaceData, RealImage, RepetitionSet};
pub use mask::{make_pf_mask, Pff, SamplingMask};
pub use metrics::{psnr, ssim};
pub use model::{data_consistency, forward, forward_noisy};
pub use num_complex::Complex64;
