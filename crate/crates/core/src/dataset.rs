//! Binary dataset container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 6    | magic `PFREC1`                          |
//! | 6      | 2    | version (`u16`, currently 1)            |
//! | 8      | 4    | H (`u32`, readout)                      |
//! | 12     | 4    | W (`u32`, phase encode)                 |
//! | 16     | 4    | B, repetitions per slice (`u32`)        |
//! | 20     | 4    | slice count (`u32`)                     |
//! | 24     | 4    | pff numerator (`u32`)                   |
//! | 28     | 4    | pff denominator (`u32`); 1/1 = full     |
//! | 32     | 4    | domain (`u32`): 0 image, 1 k-space      |
//!
//! The payload follows at byte 36: for each slice, for each repetition, the
//! `H x W` grid in row-major order as interleaved `f32` real/imaginary
//! pairs. Its length is exactly `slices * B * H * W * 8` bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, KSpaceData, RepetitionSet};
use crate::mask::{make_pf_mask, Pff};

pub const MAGIC: &[u8; 6] = b"PFREC1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Image = 0,
    KSpace = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub height: usize,
    pub width: usize,
    pub repetitions: usize,
    pub slices: usize,
    /// Factor the payload was sampled with; full for ground truth.
    pub pff: Pff,
    pub domain: Domain,
}

impl DatasetHeader {
    pub fn payload_len(&self) -> u64 {
        (self.slices * self.repetitions * self.height * self.width) as u64 * 8
    }
}

/// A dataset in memory: `slices[s][b]` is a row-major `H x W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub slices: Vec<Vec<Vec<Complex64>>>,
}

impl Dataset {
    pub fn new(height: usize, width: usize, pff: Pff, domain: Domain, slices: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        let repetitions = slices.first().map_or(0, |s| s.len());
        for s in &slices {
            if s.len() != repetitions {
                return Err(Error::Format("slices with differing repetition counts".into()));
            }
            if s.iter().any(|g| g.len() != height * width) {
                return Err(Error::Format(format!("grid size differs from {height}x{width}")));
            }
        }
        Ok(Self {
            header: DatasetHeader {
                height,
                width,
                repetitions,
                slices: slices.len(),
                pff,
                domain,
            },
            slices,
        })
    }
}

impl Dataset {
    /// Image-domain dataset from ground-truth repetition sets.
    pub fn from_image_sets(sets: &[RepetitionSet<ComplexImage>]) -> Result<Self> {
        let (h, w) = sets.first().ok_or(Error::EmptySet)?.shape();
        let slices = sets.iter().map(|s| s.iter().map(|x| x.data().to_vec()).collect()).collect();
        Self::new(h, w, Pff::FULL, Domain::Image, slices)
    }

    /// K-space dataset from sampled repetition sets; the header records the
    /// sets' factor.
    pub fn from_kspace_sets(sets: &[RepetitionSet<KSpaceData>]) -> Result<Self> {
        let first = sets.first().ok_or(Error::EmptySet)?;
        let (h, w) = first.shape();
        let pff = first.mask().pff();
        if sets.iter().any(|s| s.mask().pff() != pff) {
            return Err(Error::MaskMismatch);
        }
        let slices = sets.iter().map(|s| s.iter().map(|k| k.samples().to_vec()).collect()).collect();
        Self::new(h, w, pff, Domain::KSpace, slices)
    }

    /// Interprets an image-domain payload as repetition sets.
    pub fn image_sets(&self) -> Result<Vec<RepetitionSet<ComplexImage>>> {
        if self.header.domain != Domain::Image {
            return Err(Error::Format("dataset holds k-space, not images".into()));
        }
        let (h, w) = (self.header.height, self.header.width);
        self.slices
            .iter()
            .map(|s| RepetitionSet::new(s.iter().map(|g| ComplexImage::new(h, w, g.clone())).collect::<Result<Vec<_>>>()?))
            .collect()
    }

    /// Interprets a k-space payload as sampled repetition sets using the
    /// header's factor.
    pub fn kspace_sets(&self) -> Result<Vec<RepetitionSet<KSpaceData>>> {
        if self.header.domain != Domain::KSpace {
            return Err(Error::Format("dataset holds images, not k-space".into()));
        }
        let (h, w) = (self.header.height, self.header.width);
        let mask = make_pf_mask(w, self.header.pff)?;
        self.slices
            .iter()
            .map(|s| {
                RepetitionSet::new(
                    s.iter()
                        .map(|g| KSpaceData::new(h, w, g.clone(), mask.clone()))
                        .collect::<Result<Vec<_>>>()?,
                )
            })
            .collect()
    }
}

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let h = &ds.header;
    let mut out = Vec::with_capacity(HEADER_LEN + h.payload_len() as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [h.height, h.width, h.repetitions, h.slices] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&h.pff.num().to_le_bytes());
    out.extend_from_slice(&h.pff.den().to_le_bytes());
    out.extend_from_slice(&(h.domain as u32).to_le_bytes());
    for grid in ds.slices.iter().flatten() {
        for v in grid {
            out.extend_from_slice(&(v.re as f32).to_le_bytes());
            out.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 6 && &bytes[..6] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..6] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(Error::Version(version));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let pff = Pff::new(word(4), word(5)).map_err(|_| Error::Format(format!("bad pff {}/{}", word(4), word(5))))?;
    let domain = match word(6) {
        0 => Domain::Image,
        1 => Domain::KSpace,
        d => return Err(Error::Format(format!("unknown domain {d}"))),
    };
    let header = DatasetHeader {
        height: word(0) as usize,
        width: word(1) as usize,
        repetitions: word(2) as usize,
        slices: word(3) as usize,
        pff,
        domain,
    };
    let expected = HEADER_LEN as u64 + header.payload_len();
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() as u64 - expected
        )));
    }
    let n = header.height * header.width;
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut slices = Vec::with_capacity(header.slices);
    for _ in 0..header.slices {
        let mut reps = Vec::with_capacity(header.repetitions);
        for _ in 0..header.repetitions {
            let grid: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(floats.next().unwrap(), floats.next().unwrap()))
                .collect();
            reps.push(grid);
        }
        slices.push(reps);
    }
    Ok(Dataset { header, slices })
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(ds))?;
    f.sync_all()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode(&fs::read(path)?)
}
