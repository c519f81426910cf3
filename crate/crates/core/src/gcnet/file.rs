//! Policy files.
//!
//! Layout (little endian): magic `GCNP`, version u32, kind u8, layer count
//! u32, layer sizes u32 each, activation ids u8 each, seven normalization
//! constants f64, then per layer the row-major weights and the biases as f64.

use std::path::Path;

use super::{Activation, GcnPolicy};
use crate::dataset::{Normalization, RecipeKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GCNP";
pub const POLICY_VERSION: u32 = 1;

fn kind_id(kind: RecipeKind) -> u8 {
    match kind {
        RecipeKind::Nominal => 0,
        RecipeKind::Adaptive => 1,
        RecipeKind::Waypoint => 2,
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::CorruptFile("truncated policy file".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl GcnPolicy {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&POLICY_VERSION.to_le_bytes());
        out.push(kind_id(self.kind));
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for s in &self.sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
        out.extend(self.activations.iter().map(|a| *a as u8));
        for v in self.norm.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(4)? != MAGIC {
            return Err(Error::CorruptFile("bad policy magic".into()));
        }
        let version = r.u32()?;
        if version != POLICY_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: POLICY_VERSION });
        }
        let kind = match r.u8()? {
            0 => RecipeKind::Nominal,
            1 => RecipeKind::Adaptive,
            2 => RecipeKind::Waypoint,
            k => return Err(Error::CorruptFile(format!("unknown policy kind {k}"))),
        };
        let n = r.u32()? as usize;
        if !(2..=16).contains(&n) {
            return Err(Error::CorruptFile(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|&s| s == 0 || s > 4096) {
            return Err(Error::CorruptFile("implausible layer size".into()));
        }
        let activations = (0..n - 1)
            .map(|_| {
                let id = r.u8()?;
                Activation::from_id(id).ok_or_else(|| Error::CorruptFile(format!("unknown activation {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut norm = [0.0; 7];
        for v in &mut norm {
            *v = r.f64()?;
        }
        let count = super::param_count(&sizes);
        let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if !r.buf.is_empty() {
            return Err(Error::CorruptFile("trailing bytes after policy body".into()));
        }
        GcnPolicy::from_parts(kind, Normalization::from_array(norm), sizes, activations, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a policy and checks it takes `kind`'s inputs.
    pub fn load_for(path: impl AsRef<Path>, kind: RecipeKind) -> Result<Self> {
        let p = Self::load(path)?;
        if p.input_dim() != kind.input_dim() {
            return Err(Error::DimensionMismatch { expected: kind.input_dim(), got: p.input_dim() });
        }
        Ok(p)
    }
}
