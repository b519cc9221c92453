//! Little-endian binary checkpoint format.
//!
//! Layout: magic `SSEL` · version u32 · metadata count u32 ·
//! {key-len u32, key, value-len u32, value}* · tensor count u32 ·
//! {name-len u32, name, rank u32, dims u64×rank, dtype u8, elem count u64,
//! raw f64 LE}*. Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SSEL";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("trailing bytes after checkpoint payload")]
    Trailing,
    #[error("invalid checkpoint: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Default, Clone)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn push_tensor(&mut self, name: &str, t: Tensor) {
        self.tensors.push((name.to_string(), t));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &self.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(&mut w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            w.write_all(&[DTYPE_F64])?;
            w.write_all(&(t.len() as u64).to_le_bytes())?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r, "version")?;
        if version != VERSION {
            return Err(CheckpointError::Version {
                found: version,
                supported: VERSION,
            });
        }
        let mut meta = BTreeMap::new();
        let n_meta = read_u32(&mut r, "metadata count")?;
        for i in 0..n_meta {
            let k = read_str(&mut r, &format!("metadata key {i}"))?;
            let v = read_str(&mut r, &format!("metadata value {i}"))?;
            meta.insert(k, v);
        }
        let n_tensors = read_u32(&mut r, "tensor count")?;
        let mut tensors = Vec::with_capacity(n_tensors as usize);
        for i in 0..n_tensors {
            let name = read_str(&mut r, &format!("tensor name {i}"))?;
            let rank = read_u32(&mut r, &format!("rank of {name}"))? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r, &format!("dims of {name}"))? as usize);
            }
            let mut dtype = [0u8; 1];
            read_exact(&mut r, &mut dtype, &format!("dtype of {name}"))?;
            if dtype[0] != DTYPE_F64 {
                return Err(CheckpointError::Invalid(format!(
                    "unknown dtype tag {} for tensor {name}",
                    dtype[0]
                )));
            }
            let count = read_u64(&mut r, &format!("element count of {name}"))? as usize;
            let mut data = Vec::with_capacity(count);
            let mut buf = [0u8; 8];
            for _ in 0..count {
                read_exact(&mut r, &mut buf, &format!("data of {name}"))?;
                data.push(f64::from_le_bytes(buf));
            }
            let t = Tensor::new(&shape, data)
                .map_err(|e| CheckpointError::Invalid(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        let mut extra = [0u8; 1];
        match r.read(&mut extra)? {
            0 => Ok(Self { meta, tensors }),
            _ => Err(CheckpointError::Trailing),
        }
    }

    /// Hex digest over all tensor bytes (weight-freeze checks).
    pub fn digest(&self) -> String {
        digest_tensors(self.tensors.iter().map(|(_, t)| t))
    }
}

/// Hex SHA-256 over the raw little-endian bytes of the given tensors.
pub fn digest_tensors<'a>(tensors: impl Iterator<Item = &'a Tensor>) -> String {
    let mut h = Sha256::new();
    for t in tensors {
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_str(w: &mut impl Write, s: &str) -> Result<(), CheckpointError> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            CheckpointError::Truncated(format!("file ended while reading {what}"))
        } else {
            CheckpointError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64, CheckpointError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read, what: &str) -> Result<String, CheckpointError> {
    let len = read_u32(r, what)? as usize;
    if len > 1 << 24 {
        return Err(CheckpointError::Invalid(format!(
            "implausible string length {len} for {what}"
        )));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, what)?;
    String::from_utf8(buf).map_err(|_| CheckpointError::Invalid(format!("non-UTF8 {what}")))
}
