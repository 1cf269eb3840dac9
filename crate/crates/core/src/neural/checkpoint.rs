//! Binary checkpoint format.
//!
//! ```text
//! "OTGK"  u32 version  u32 entry_count
//! entry_count x { u32 name_len, name, u32 rank, rank x u32 dim, f32 LE data }
//! u64 step  u64 seed
//! ```
//! All integers are little-endian.

use std::path::Path;

use crate::error::{Error, Result};

use super::tensor::Tensor4;

pub const MAGIC: &[u8; 4] = b"OTGK";
pub const VERSION: u32 = 1;

/// Named tensors plus the trailing step counter and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub entries: Vec<(String, Tensor4)>,
    pub step: u64,
    pub seed: u64,
}

/// Drops leading unit dimensions, keeping at least one.
fn logical_dims(shape: [usize; 4]) -> Vec<usize> {
    let first = shape.iter().position(|&d| d != 1).unwrap_or(3);
    shape[first..].to_vec()
}

impl TensorFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let dims = logical_dims(t.shape());
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for d in dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            if !(1..=4).contains(&rank) {
                return Err(Error::Checkpoint(format!("{name}: rank {rank} unsupported")));
            }
            let mut shape = [1usize; 4];
            for i in 0..rank {
                shape[4 - rank + i] = r.u32()? as usize;
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            entries.push((name, Tensor4::from_vec(shape, data)?));
        }
        let step = r.u64()?;
        let seed = r.u64()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after seed".into()));
        }
        Ok(Self { entries, step, seed })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor4> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor4> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry {name}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.require(name)?;
        if t.len() != 1 {
            return Err(Error::Checkpoint(format!("{name} is not a scalar")));
        }
        Ok(t.data()[0])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn read_tensor_file(path: &Path) -> Result<Vec<(String, Tensor4)>> {
    Ok(TensorFile::load(path)?.entries)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
