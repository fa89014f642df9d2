//! Binary parameter checkpoints.
//!
//! Layout: magic "TKCKPT01", entry count (u32 LE), then per entry: name
//! length (u32 LE), UTF-8 name, rank (u32 LE), dims (u32 LE each), values
//! (f64 LE). Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::nn::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TKCKPT01";

pub fn serialize_params(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                what,
                offset: self.pos as u64,
                detail: format!(
                    "needed {n} bytes, only {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn deserialize_params(bytes: &[u8]) -> Result<ParamSet> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(8, "checkpoint magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            what: "checkpoint magic",
            offset: 0,
            detail: format!("expected {CHECKPOINT_MAGIC:?}, found {magic:?}"),
        });
    }
    let count = cur.u32("checkpoint entry count")?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = cur.u32("checkpoint name length")? as usize;
        let name_offset = cur.pos as u64;
        let name_bytes = cur.take(name_len, "checkpoint name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|e| Error::Format {
                what: "checkpoint name",
                offset: name_offset,
                detail: e.to_string(),
            })?
            .to_string();
        let rank = cur.u32("checkpoint rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32("checkpoint dims")? as usize);
        }
        let n: usize = shape.iter().product();
        let value_offset = cur.pos as u64;
        let raw = cur.take(n * 8, "checkpoint values")?;
        let mut data = Vec::with_capacity(n);
        for c in raw.chunks_exact(8) {
            data.push(f64::from_le_bytes(c.try_into().unwrap()));
        }
        let tensor = Tensor::from_vec(&shape, data).map_err(|_| Error::Format {
            what: "checkpoint values",
            offset: value_offset,
            detail: format!("non-finite value in entry {name:?}"),
        })?;
        params.insert(&name, tensor).map_err(|_| Error::Format {
            what: "checkpoint entry",
            offset: name_offset,
            detail: format!("duplicate entry {name:?}"),
        })?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format {
            what: "checkpoint trailer",
            offset: cur.pos as u64,
            detail: format!("{} unexpected trailing bytes", bytes.len() - cur.pos),
        });
    }
    Ok(params)
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    let bytes = serialize_params(params);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    deserialize_params(&bytes)
}
