//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes   "CFSDCKPT"
//! version u32       1
//! hlen    u64       length of the JSON header in bytes
//! header  hlen      UTF-8 JSON: { scalar, seed, config_hash, config, arrays: [{name, shape}] }
//! data    8 * N     every array in header order, each value as an f64 bit pattern
//! ```
//!
//! Values are widened to `f64` on write, so `f32` and `f64` parameter sets
//! both round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"CFSDCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    scalar: String,
    seed: u64,
    config_hash: String,
    config: serde_json::Value,
    arrays: Vec<ArrayHeader>,
}

/// Named parameter arrays plus the seed and configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ParamSet<T>,
    pub seed: u64,
    pub config_hash: String,
    /// Free-form configuration recorded alongside the weights.
    pub config: serde_json::Value,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            scalar: T::NAME.to_string(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            arrays: self
                .params
                .names()
                .iter()
                .zip(self.params.tensors())
                .map(|(n, t)| ArrayHeader {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.num_values());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes
            .get(20..20 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut cursor = 20 + hlen;
        let mut params = ParamSet::new();
        for a in header.arrays {
            let n: usize = a.shape.iter().product();
            let raw = bytes
                .get(cursor..cursor + 8 * n)
                .ok_or_else(|| Error::Checkpoint(format!("truncated data for {}", a.name)))?;
            cursor += 8 * n;
            let data = raw
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_bits(u64::from_le_bytes(c.try_into().unwrap()))))
                .collect();
            params.insert(a.name, Tensor::new(a.shape, data)?);
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after parameter data"));
        }
        Ok(Checkpoint {
            params,
            seed: header.seed,
            config_hash: header.config_hash,
            config: header.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
