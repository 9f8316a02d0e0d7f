//! Image-domain and k-space containers.
//!
//! All grids are row-major with shape `(H, W)`: rows run along the fully
//! sampled readout axis, columns along the phase-encode (PE) axis.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mask::SamplingMask;

/// Smallest accepted edge length of an image grid.
pub const MIN_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    h: usize,
    w: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(h: usize, w: usize, data: Vec<Complex64>) -> Result<Self> {
        check_size(h, w)?;
        if data.len() != h * w {
            return Err(Error::InvalidInput(format!(
                "{} samples for a {h}x{w} grid",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(Self { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Result<Self> {
        check_size(h, w)?;
        Ok(Self {
            h,
            w,
            data: vec![Complex64::new(0.0, 0.0); h * w],
        })
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Self::new(h, w, data)
    }

    /// Builds an image without re-validating finiteness. Used on outputs of
    /// linear maps whose inputs were already validated.
    pub(crate) fn from_raw(h: usize, w: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), h * w);
        Self { h, w, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn rows(&self) -> usize {
        self.h
    }

    pub fn cols(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.w + col] = v;
    }

    pub fn magnitude(&self) -> RealImage {
        RealImage::from_raw(self.h, self.w, self.data.iter().map(|z| z.norm()).collect())
    }

    pub fn phase(&self) -> RealImage {
        RealImage::from_raw(self.h, self.w, self.data.iter().map(|z| z.arg()).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_raw(self.h, self.w, self.data.iter().map(|z| z * s).collect())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Mirror along the readout axis (reverses row order).
    pub fn flip_readout(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in (0..self.h).rev() {
            data.extend_from_slice(&self.data[row * self.w..(row + 1) * self.w]);
        }
        Self::from_raw(self.h, self.w, data)
    }
}

/// Real-valued grid, used for magnitude images, phase maps and metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl RealImage {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::InvalidInput(format!(
                "{} samples for a {h}x{w} grid",
                data.len()
            )));
        }
        Ok(Self { h, w, data })
    }

    pub(crate) fn from_raw(h: usize, w: usize, data: Vec<f64>) -> Self {
        Self { h, w, data }
    }

    pub fn filled(h: usize, w: usize, v: f64) -> Self {
        Self::from_raw(h, w, vec![v; h * w])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.w + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.h, self.w, self.data.iter().map(|&v| f(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceData {
    h: usize,
    w: usize,
    samples: Vec<Complex64>,
    mask: SamplingMask,
}

impl KSpaceData {
    /// Wraps raw samples, zeroing every line the mask does not acquire.
    pub fn new(h: usize, w: usize, mut samples: Vec<Complex64>, mask: SamplingMask) -> Result<Self> {
        check_size(h, w)?;
        if samples.len() != h * w {
            return Err(Error::InvalidInput(format!(
                "{} samples for a {h}x{w} grid",
                samples.len()
            )));
        }
        if mask.pe_size() != w {
            return Err(Error::ShapeMismatch {
                expected: (h, mask.pe_size()),
                actual: (h, w),
            });
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite k-space sample".into()));
        }
        apply_mask(&mut samples, w, &mask);
        Ok(Self { h, w, samples, mask })
    }

    pub(crate) fn from_raw(h: usize, w: usize, samples: Vec<Complex64>, mask: SamplingMask) -> Self {
        Self { h, w, samples, mask }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.samples[row * self.w + col]
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn apply_mask(samples: &mut [Complex64], w: usize, mask: &SamplingMask) {
    let m = mask.acquired_count();
    if m == w {
        return;
    }
    for row in samples.chunks_mut(w) {
        for v in &mut row[m..] {
            *v = Complex64::new(0.0, 0.0);
        }
    }
}

fn check_size(h: usize, w: usize) -> Result<()> {
    if h < MIN_SIZE || w < MIN_SIZE {
        return Err(Error::InvalidInput(format!(
            "grid {h}x{w} is smaller than {MIN_SIZE}x{MIN_SIZE}"
        )));
    }
    Ok(())
}

/// Shape of the items in a set, for consistency checks.
pub trait GridItem {
    fn grid_shape(&self) -> (usize, usize);
    fn grid_mask(&self) -> Option<&SamplingMask> {
        None
    }
}

impl GridItem for ComplexImage {
    fn grid_shape(&self) -> (usize, usize) {
        self.shape()
    }
}

impl GridItem for KSpaceData {
    fn grid_shape(&self) -> (usize, usize) {
        self.shape()
    }
    fn grid_mask(&self) -> Option<&SamplingMask> {
        Some(&self.mask)
    }
}

/// Unordered collection of repetitions of one slice. Consumers must treat
/// the storage order as meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionSet<T> {
    items: Vec<T>,
}

impl<T: GridItem> RepetitionSet<T> {
    pub fn new(items: Vec<T>) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptySet)?;
        let shape = first.grid_shape();
        let mask = first.grid_mask();
        for item in &items[1..] {
            if item.grid_shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    actual: item.grid_shape(),
                });
            }
            if item.grid_mask() != mask {
                return Err(Error::MaskMismatch);
            }
        }
        Ok(Self { items })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.items[0].grid_shape()
    }
}

impl<T> RepetitionSet<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }

    pub fn into_items(self) -> Vec<T> {
        self.items
    }

    /// Applies `f` to every repetition. Shape consistency is preserved by
    /// construction for shape-preserving maps.
    pub fn map<U, E>(&self, f: impl FnMut(&T) -> std::result::Result<U, E>) -> std::result::Result<RepetitionSet<U>, E> {
        Ok(RepetitionSet {
            items: self.items.iter().map(f).collect::<std::result::Result<Vec<_>, E>>()?,
        })
    }

    /// The items at `indices`, in that order. Panics on an out-of-range or
    /// empty selection.
    pub fn select(&self, indices: &[usize]) -> Self
    where
        T: Clone,
    {
        assert!(!indices.is_empty(), "empty selection");
        Self {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }

    /// Reorders the set: output item `i` is input item `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self
    where
        T: Clone,
    {
        assert_eq!(perm.len(), self.items.len());
        Self {
            items: perm.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }
}

impl RepetitionSet<KSpaceData> {
    pub fn mask(&self) -> &SamplingMask {
        self.items[0].mask()
    }
}

impl<'a, T> IntoIterator for &'a RepetitionSet<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}
