//! On-disk container for named float32 tensors.
//!
//! One file holds one or more named tensors. The layout is:
//!
//! ```text
//! magic  b"VSTC"            (4 bytes)
//! version u32 LE = 1        (4 bytes)
//! count  u32 LE             (4 bytes, number of records)
//! record*count:
//!   name_len u32 LE
//!   name     utf-8 bytes
//!   dtype    u8   (0 = float32 little-endian)
//!   rank     u32 LE
//!   shape    u64 LE * rank
//!   payload  f32 LE, row-major
//! ```
//!
//! Checkpoints, spectrograms, and embeddings all use this container.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VSTC";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// An ordered set of named float32 tensors.
#[derive(Debug, Clone, Default)]
pub struct TensorContainer {
    tensors: BTreeMap<String, ArrayD<f32>>,
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: ArrayD<f32>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f32>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::TensorNotFound(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f32>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[DTYPE_F32])?;
            let shape = tensor.shape();
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &dim in shape {
                w.write_all(&(dim as u64).to_le_bytes())?;
            }
            // standard layout guarantees row-major order
            let standard = tensor.as_standard_layout();
            for &v in standard.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::BadContainer("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::BadContainer(format!(
                "unsupported version {version}"
            )));
        }
        let count = read_u32(&mut r)? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name_buf = vec![0u8; name_len];
            read_exact(&mut r, &mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| Error::BadContainer("tensor name is not utf-8".into()))?;
            let mut dtype = [0u8; 1];
            read_exact(&mut r, &mut dtype)?;
            if dtype[0] != DTYPE_F32 {
                return Err(Error::BadContainer(format!(
                    "unsupported dtype tag {}",
                    dtype[0]
                )));
            }
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut payload = vec![0u8; n * 4];
            read_exact(&mut r, &mut payload)?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = ArrayD::from_shape_vec(IxDyn(&shape), data)
                .map_err(|e| Error::BadContainer(e.to_string()))?;
            tensors.insert(name, tensor);
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::BadContainer("truncated container".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
