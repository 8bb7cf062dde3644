//! Flat binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset   size      field
//! 0        8         magic  b"PGACKPT\0"
//! 8        4         format version (u32) = 1
//! 12       4         model identifier length L (u32)
//! 16       L         model identifier, UTF-8
//!          4         tensor count T (u32)
//!          T entries of the shapes manifest:
//!            4       name length N (u32)
//!            N       name, UTF-8
//!            1       kind: 0 = weight, 1 = bias, 2 = fixed (not trained)
//!            1       rank R
//!            8 * R   dimensions (u64 each)
//!          payload: every tensor's values in manifest order, f64 IEEE-754 bits
//! ```
//!
//! Nothing follows the payload; trailing bytes are rejected. Values are stored
//! as raw bit patterns, so a write/read round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::params::{ParamKind, ParamStore};
use super::tensor::Tensor;
use super::MathError;

pub const MAGIC: &[u8; 8] = b"PGACKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
    Fixed,
}

impl TensorKind {
    fn code(self) -> u8 {
        match self {
            TensorKind::Weight => 0,
            TensorKind::Bias => 1,
            TensorKind::Fixed => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self, MathError> {
        match c {
            0 => Ok(TensorKind::Weight),
            1 => Ok(TensorKind::Bias),
            2 => Ok(TensorKind::Fixed),
            other => Err(MathError::Checkpoint(format!(
                "unknown tensor kind {other}"
            ))),
        }
    }
}

impl From<ParamKind> for TensorKind {
    fn from(k: ParamKind) -> Self {
        match k {
            ParamKind::Weight => TensorKind::Weight,
            ParamKind::Bias => TensorKind::Bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub kind: TensorKind,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_id: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            tensors: Vec::new(),
        }
    }

    /// Appends every parameter of `store`, names prefixed with `prefix`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for e in store.entries() {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}{}", e.name),
                kind: e.kind.into(),
                value: e.value.clone(),
            });
        }
    }

    pub fn push_fixed(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            kind: TensorKind::Fixed,
            value,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.value)
    }

    /// Copies tensors named `prefix + param name` into `store`, checking shapes.
    pub fn load_into(&self, prefix: &str, store: &mut ParamStore) -> Result<(), MathError> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = format!("{prefix}{}", store.entry(id).name);
            let t = self
                .get(&name)
                .ok_or_else(|| MathError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != store.value(id).shape() {
                return Err(MathError::Checkpoint(format!(
                    "shape of {name}: checkpoint {:?}, model {:?}",
                    t.shape(),
                    store.value(id).shape()
                )));
            }
            *store.value_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.model_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.model_id.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.kind.code());
            out.push(t.value.shape().len() as u8);
            for &d in t.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in t.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MathError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(MathError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(MathError::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let id_len = r.u32()? as usize;
        let model_id = r.string(id_len)?;
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = r.string(n)?;
            let kind = TensorKind::from_code(r.take(1)?[0])?;
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            manifest.push((name, kind, shape));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, kind, shape) in manifest {
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            let value = Tensor::new(shape, data)
                .map_err(|e| MathError::Checkpoint(format!("tensor {name}: {e}")))?;
            tensors.push(NamedTensor { name, kind, value });
        }
        if r.pos != bytes.len() {
            return Err(MathError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { model_id, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), MathError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MathError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MathError> {
        if self.pos + n > self.bytes.len() {
            return Err(MathError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MathError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, MathError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String, MathError> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| MathError::Checkpoint("name is not UTF-8".into()))
    }
}
