//! Named parameter arrays on disk.
//!
//! Layout: 8-byte magic, `u32` version, `u64` manifest length, the manifest
//! as JSON, then every array's f64 values little-endian in manifest order.
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TSPLCKPT";
pub const VERSION: u32 = 1;

pub type NamedArray = (String, Vec<usize>, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Which training stage wrote the file.
    pub stage: u32,
    pub seed: u64,
    pub arrays: Vec<NamedArray>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    stage: u32,
    seed: u64,
    arrays: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// First element, counted in f64 values from the start of the data block.
    offset: usize,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut offset = 0;
        let entries = self
            .arrays
            .iter()
            .map(|(name, shape, data)| {
                let e = Entry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                };
                offset += data.len();
                e
            })
            .collect();
        let manifest = serde_json::to_vec(&Manifest {
            stage: self.stage,
            seed: self.seed,
            arrays: entries,
        })
        .expect("manifest serializes");
        let mut out = Vec::with_capacity(20 + manifest.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, _, data) in &self.arrays {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let data_start = 20usize.checked_add(mlen).filter(|&e| e <= bytes.len()).ok_or("truncated manifest")?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[20..data_start]).map_err(|e| format!("bad manifest: {e}"))?;
        let data = &bytes[data_start..];
        if data.len() % 8 != 0 {
            return Err("data block is not a whole number of f64 values".into());
        }
        let total = data.len() / 8;
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        let mut expected = 0;
        for e in manifest.arrays {
            let len: usize = e.shape.iter().product();
            if e.offset != expected || e.offset + len > total {
                return Err(format!("array `{}` lies outside the data block", e.name));
            }
            let values = data[e.offset * 8..(e.offset + len) * 8]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            expected += len;
            arrays.push((e.name, e.shape, values));
        }
        if expected != total {
            return Err(format!("{} trailing values after the last array", total - expected));
        }
        Ok(Checkpoint {
            stage: manifest.stage,
            seed: manifest.seed,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::format(path, "checkpoint not found"));
        }
        let bytes = fs::read(path).map_err(Error::io(path))?;
        Checkpoint::decode(&bytes).map_err(|m| Error::format(path, m))
    }
}
