//! Partial-Fourier sampling masks along the phase-encode axis.
//!
//! PE indices are in centered ordering (DC at `W / 2`). A mask acquires the
//! contiguous low-index lines `[0, M)` with `M = ceil(pff * W)`; the lines
//! `[W - M, M)` form the symmetric band around the center.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partial-Fourier factor stored as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Pff {
    num: u32,
    den: u32,
}

impl Pff {
    pub const FULL: Pff = Pff { num: 1, den: 1 };
    pub const FIVE_EIGHTHS: Pff = Pff { num: 5, den: 8 };
    pub const SIX_EIGHTHS: Pff = Pff { num: 3, den: 4 };
    pub const SEVEN_EIGHTHS: Pff = Pff { num: 7, den: 8 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num == 0 {
            return Err(Error::UnsupportedFactor(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_full(&self) -> bool {
        self.num == self.den
    }

    /// `ceil(pff * n)` in exact integer arithmetic.
    pub fn ceil_mul(&self, n: usize) -> usize {
        let num = self.num as u64 * n as u64;
        num.div_ceil(self.den as u64) as usize
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Pff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Pff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnsupportedFactor(s.to_string());
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n = n.trim().parse().map_err(|_| bad())?;
                let d = d.trim().parse().map_err(|_| bad())?;
                Pff::new(n, d)
            }
            None => match s {
                "1" => Ok(Pff::FULL),
                _ => Err(bad()),
            },
        }
    }
}

impl TryFrom<String> for Pff {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Pff> for String {
    fn from(p: Pff) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplingMask {
    pe_size: usize,
    pff: Pff,
    acquired: usize,
}

/// Builds the mask for `pe_size` lines and factor `pff`.
pub fn make_pf_mask(pe_size: usize, pff: Pff) -> Result<SamplingMask> {
    if pe_size < crate::image::MIN_SIZE {
        return Err(Error::InvalidInput(format!("PE size {pe_size} below minimum")));
    }
    // pff <= 1/2  <=>  2 * num <= den
    if 2 * pff.num as u64 <= pff.den as u64 || pff.num > pff.den {
        return Err(Error::UnsupportedFactor(pff.to_string()));
    }
    let acquired = pff.ceil_mul(pe_size);
    debug_assert!(acquired > pe_size / 2);
    Ok(SamplingMask {
        pe_size,
        pff,
        acquired,
    })
}

impl SamplingMask {
    pub fn full(pe_size: usize) -> Result<Self> {
        make_pf_mask(pe_size, Pff::FULL)
    }

    pub fn pe_size(&self) -> usize {
        self.pe_size
    }

    pub fn pff(&self) -> Pff {
        self.pff
    }

    /// Number of acquired PE lines `M`.
    pub fn acquired_count(&self) -> usize {
        self.acquired
    }

    pub fn is_full(&self) -> bool {
        self.acquired == self.pe_size
    }

    pub fn is_acquired(&self, line: usize) -> bool {
        line < self.acquired
    }

    /// Centered index of the DC line.
    pub fn center(&self) -> usize {
        self.pe_size / 2
    }

    /// Half-open range `[W - M, M)` of symmetrically sampled lines.
    pub fn symmetric_band(&self) -> std::ops::Range<usize> {
        (self.pe_size - self.acquired)..self.acquired
    }

    /// Lines acquired on one side only.
    pub fn asymmetric_lines(&self) -> std::ops::Range<usize> {
        0..(self.pe_size - self.acquired)
    }

    /// Index of the line mirrored through the center (periodic wrap).
    pub fn mirror(&self, line: usize) -> usize {
        (2 * self.center() + self.pe_size - line) % self.pe_size
    }

    /// Per-line acquisition indicator.
    pub fn lines(&self) -> Vec<bool> {
        (0..self.pe_size).map(|j| self.is_acquired(j)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acquired_counts() {
        let m = make_pf_mask(108, Pff::FIVE_EIGHTHS).unwrap();
        assert_eq!(m.acquired_count(), 68);
        assert_eq!(m.symmetric_band().len(), 28);
        assert_eq!(make_pf_mask(108, Pff::FULL).unwrap().acquired_count(), 108);
        assert_eq!(make_pf_mask(192, Pff::FIVE_EIGHTHS).unwrap().acquired_count(), 120);
    }

    #[test]
    fn rejects_half_and_below() {
        assert!(matches!(
            make_pf_mask(64, Pff::new(1, 2).unwrap()),
            Err(Error::UnsupportedFactor(_))
        ));
        assert!(make_pf_mask(64, Pff::new(3, 8).unwrap()).is_err());
        assert!(make_pf_mask(64, Pff::new(9, 8).unwrap()).is_err());
        assert!(make_pf_mask(4, Pff::FULL).is_err());
    }

    #[test]
    fn center_always_acquired() {
        for w in 8..80 {
            for pff in [Pff::FIVE_EIGHTHS, Pff::SIX_EIGHTHS, Pff::SEVEN_EIGHTHS, Pff::new(17, 32).unwrap()] {
                let m = make_pf_mask(w, pff).unwrap();
                assert!(m.acquired_count() > w / 2);
                assert!(m.is_acquired(m.center()));
                assert!(!m.symmetric_band().is_empty());
            }
        }
    }

    #[test]
    fn band_is_mirror_symmetric_about_center() {
        for w in [63usize, 64, 65, 108] {
            let m = make_pf_mask(w, Pff::FIVE_EIGHTHS).unwrap();
            let band = m.symmetric_band();
            // every band line except an unpaired even-size edge has its mirror in the band
            for j in band.clone() {
                if w % 2 == 0 && j == band.start {
                    assert_eq!(m.mirror(j), m.acquired_count());
                    continue;
                }
                assert!(band.contains(&m.mirror(j)), "w={w} j={j}");
            }
        }
    }

    #[test]
    fn full_mask_is_all_ones() {
        let m = make_pf_mask(30, Pff::FULL).unwrap();
        assert!(m.lines().into_iter().all(|b| b));
        assert!(m.is_full());
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("6/8".parse::<Pff>().unwrap(), Pff::SIX_EIGHTHS);
        assert_eq!("1".parse::<Pff>().unwrap(), Pff::FULL);
        assert_eq!(Pff::SIX_EIGHTHS.to_string(), "3/4");
        assert!("x".parse::<Pff>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_factor(w in 8usize..300, a in 5u32..=16, b in 5u32..=16) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m1 = make_pf_mask(w, Pff::new(lo + 4, 16).unwrap().min_full()).unwrap();
            let m2 = make_pf_mask(w, Pff::new(hi + 4, 16).unwrap().min_full()).unwrap();
            for j in 0..w {
                if m1.is_acquired(j) {
                    proptest::prop_assert!(m2.is_acquired(j));
                }
            }
        }
    }

    impl Pff {
        fn min_full(self) -> Pff {
            if self.num > self.den {
                Pff::FULL
            } else {
                self
            }
        }
    }
}
