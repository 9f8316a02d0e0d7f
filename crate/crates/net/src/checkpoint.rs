//! Checkpoint container.
//!
//! ```text
//! magic    8 bytes  "PFCKPT1\0"
//! hlen     u32 LE   length of the JSON header
//! header   hlen     {"strategy","K","G","F","aggregation","pff","lambda"}
//! count    u32 LE   number of tensors
//! per tensor:
//!   nlen   u16 LE, name (UTF-8)
//!   ndim   u8, dims u32 LE each
//!   data   prod(dims) f32 LE
//! ```

use std::path::Path;

use pfrecon_core::Pff;
use serde::{Deserialize, Serialize};

use crate::aggregate::Aggregation;
use crate::error::{Error, Result};
use crate::params::{ParamSet, Tensor};
use crate::real::Real;
use crate::unrolled::{Model, ModelConfig, Strategy};

pub const MAGIC: &[u8; 8] = b"PFCKPT1\0";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    strategy: Strategy,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "G")]
    g: usize,
    #[serde(rename = "F")]
    f: usize,
    aggregation: Aggregation,
    pff: Pff,
    #[serde(default)]
    lambda: f64,
}

pub fn encode<T: Real>(model: &Model<T>) -> Vec<u8> {
    let c = model.config();
    let header = serde_json::to_vec(&Header {
        strategy: c.strategy,
        k: c.iterations,
        g: c.depth,
        f: c.width,
        aggregation: c.aggregation,
        pff: c.pff,
        lambda: c.lambda,
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 4 * model.count_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let tensors = &model.params().tensors;
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {}: need {n} more, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<Model<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let hlen = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let config = ModelConfig {
        strategy: header.strategy,
        iterations: header.k,
        depth: header.g,
        width: header.f,
        aggregation: header.aggregation,
        pff: header.pff,
        lambda: header.lambda,
    };
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let nlen = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Model::from_params(config, ParamSet::new(tensors))
}

pub fn save<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>> {
    decode(&std::fs::read(path)?)
}
