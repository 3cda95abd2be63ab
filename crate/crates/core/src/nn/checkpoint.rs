//! Parameter checkpoint file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    8 bytes  "PCGCCKPT"
//! version  u32      1
//! count    u32      number of tensors
//! count x {
//!     name_len u32, name UTF-8 bytes,
//!     rank     u32, dims u64 x rank,
//!     values   f64 x prod(dims)
//! }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tensor::Param;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PCGCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl Checkpoint {
    pub fn from_params<'a>(params: impl IntoIterator<Item = &'a Param>) -> Self {
        Checkpoint {
            tensors: params
                .into_iter()
                .map(|p| NamedTensor { name: p.name.clone(), dims: p.dims.clone(), values: p.value.clone() })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copies values into `params` by name; every parameter must be present
    /// with matching dims.
    pub fn restore<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) -> Result<()> {
        for p in params {
            let t = self
                .get(&p.name)
                .ok_or_else(|| Error::Structure(format!("checkpoint has no tensor {}", p.name)))?;
            if t.dims != p.dims {
                return Err(Error::Shape(format!("{}: checkpoint {:?} vs model {:?}", p.name, t.dims, p.dims)));
            }
            p.value.copy_from_slice(&t.values);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Corrupt(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?;
            let rank = read_u32(r)? as usize;
            let dims = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            if n * 8 > r.len() {
                return Err(Error::Corrupt(format!("tensor {name} truncated")));
            }
            let values = (0..n).map(|_| read_u64(r).map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
            tensors.push(NamedTensor { name, dims, values });
        }
        if !r.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.len())));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }

    /// First eight bytes of the SHA-256 of the serialized form.
    pub fn content_id(&self) -> u64 {
        let digest = Sha256::digest(self.to_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn content_hash_hex(&self) -> String {
        Sha256::digest(self.to_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_and_restore() {
        let a = Param::new("a.weight", vec![2, 3], (0..6).map(|i| i as f64 * 0.5 - 1.0).collect());
        let b = Param::new("a.bias", vec![2], vec![f64::MIN_POSITIVE, -0.0]);
        let ck = Checkpoint::from_params([&a, &b]);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let mut a2 = Param::zeros("a.weight", vec![2, 3]);
        let mut b2 = Param::zeros("a.bias", vec![2]);
        back.restore([&mut a2, &mut b2]).unwrap();
        assert_eq!(a2.value, a.value);
        assert_eq!(b2.value[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn layout_header_is_fixed() {
        let ck = Checkpoint::from_params([&Param::new("w", vec![1], vec![1.0])]);
        let b = ck.to_bytes();
        assert_eq!(&b[..8], b"PCGCCKPT");
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(b.len(), 8 + 4 + 4 + 4 + 1 + 4 + 8 + 8);
        assert_eq!(&b[b.len() - 8..], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_truncation_and_missing_tensors() {
        let ck = Checkpoint::from_params([&Param::new("w", vec![2], vec![1.0, 2.0])]);
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut other = Param::zeros("v", vec![2]);
        assert!(ck.restore([&mut other]).is_err());
        let mut wrong = Param::zeros("w", vec![3]);
        assert!(ck.restore([&mut wrong]).is_err());
    }
}
