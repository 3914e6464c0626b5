//! Named-tensor checkpoint files.
//!
//! Layout, little-endian: `b"TRPG"`, u32 version (1), u32 tensor count, then
//! per tensor: u16 name length, UTF-8 name, u8 rank, u32 per dimension,
//! f32 values.

use std::path::Path;

use super::weights::shapes;
use super::{ModelConfig, ModelError, ModelWeights};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TRPG";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ModelError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ModelError::Checkpoint("missing TRPG header".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| ModelError::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = r.take(n * 4)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            let t = Tensor::new(shape, data).map_err(|e| ModelError::Checkpoint(format!("{name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { tensors })
    }

    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.encode()).map_err(|e| ModelError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Appends model weights under their canonical names, with `prefix`.
    pub fn push_weights(&mut self, prefix: &str, w: &ModelWeights) {
        for (name, t) in w.named() {
            self.push(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Reads the weights for `cfg` stored under `prefix`, checking every
    /// name and shape.
    pub fn weights(&self, cfg: &ModelConfig, prefix: &str) -> Result<ModelWeights, ModelError> {
        shapes(cfg).try_map(|name, shape| {
            let key = format!("{prefix}{name}");
            let t = self.get(&key).ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {key}")))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {key} has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
            Ok(t.clone())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let cfg = ModelConfig::mini();
        let w = ModelWeights::init(&cfg, 9);
        let mut ck = Checkpoint::default();
        ck.push_weights("", &w);
        ck.push("train.epoch", Tensor::scalar(4.0));
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        assert_eq!(back.weights(&cfg, "").unwrap(), w);
    }

    #[test]
    fn header_layout() {
        let mut ck = Checkpoint::default();
        ck.push("ab", Tensor::new(vec![1, 2], vec![1.0f32, -2.0]).unwrap());
        let b = ck.encode();
        assert_eq!(&b[..4], b"TRPG");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..14], &2u16.to_le_bytes());
        assert_eq!(&b[14..16], b"ab");
        assert_eq!(b[16], 2);
        assert_eq!(b.len(), 17 + 8 + 8);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let cfg = ModelConfig::mini();
        let mut ck = Checkpoint::default();
        ck.push_weights("", &ModelWeights::init(&cfg, 0));
        let bytes = ck.encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::decode(b"XXXX").is_err());
        let other = ModelConfig { dim: 6, ..cfg };
        let err = ck.weights(&other, "").unwrap_err().to_string();
        assert!(err.contains("patch_embed.weight"), "{err}");
    }
}
