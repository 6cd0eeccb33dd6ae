//! The `SHET` tensor container, dataset manifests and synthetic fixtures.
//!
//! Layout of a tensor file (all integers little-endian):
//!
//! ```text
//! "SHET" | version: u8 = 1 | dtype: u8 = 0 (f32) | ndim: u32 | dims: ndim x u64 | payload: f32 x prod(dims)
//! ```

mod fixture;
mod manifest;

pub use fixture::{gen_fixture, synth_pairs, FixtureSpec, SynthPair};
pub use manifest::{read_manifest, write_manifest, PairRecord};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SHET";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

/// Dense row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = checked_numel(&shape)
            .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;
        if expected != data.len() {
            return Err(Error::Format(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Serialize to the on-disk byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(DTYPE_F32);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &dim in &self.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parse the on-disk layout, rejecting malformed headers, size mismatches and non-finite values.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.take(1)?[0];
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dtype = cur.take(1)?[0];
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype {dtype}")));
        }
        let ndim = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        // guard against absurd ndim before allocating
        if ndim.checked_mul(8).is_none_or(|n| n > bytes.len()) {
            return Err(Error::Format(format!("header declares {ndim} dims, file too short")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let dim = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            let dim = usize::try_from(dim)
                .map_err(|_| Error::Format(format!("dimension {dim} too large")))?;
            shape.push(dim);
        }
        let numel = checked_numel(&shape)
            .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;
        let payload = &bytes[cur.pos..];
        if numel.checked_mul(4) != Some(payload.len()) {
            return Err(Error::Format(format!(
                "header declares {numel} values, payload holds {} bytes",
                payload.len()
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {i} is {}", data[i])));
        }
        Ok(Self { shape, data })
    }
}

fn checked_numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}
