//! Binary checkpoint container.
//!
//! Layout (little endian): magic `MIRCKPT1`, `u8` element width (4 or 8),
//! `u32` entry count, then per entry: `u32` name length + UTF-8 name,
//! `u32` spec length + JSON-encoded [`NetSpec`], `u64` value count, raw values
//! in layer/tensor order.

use std::fs;
use std::path::Path;

use super::{Net, NetParams, NetSpec, NnError, Real, Tensor};

const MAGIC: &[u8; 8] = b"MIRCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry<T> {
    pub name: String,
    pub spec: NetSpec,
    pub params: NetParams<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint<T> {
    pub entries: Vec<CheckpointEntry<T>>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, net: &Net<T>) {
        self.entries.push(CheckpointEntry {
            name: name.into(),
            spec: net.spec().clone(),
            params: net.params().clone(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn restore(&self, name: &str) -> Result<Net<T>, NnError> {
        let e = self
            .get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("no entry named `{name}`")))?;
        Net::from_params(e.spec.clone(), e.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(T::BYTES as u8);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            let spec = serde_json::to_vec(&e.spec).expect("NetSpec serialises");
            out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
            out.extend_from_slice(&spec);
            out.extend_from_slice(&(e.params.num_values() as u64).to_le_bytes());
            for t in e.params.tensors() {
                for &x in t.data() {
                    x.write_le(&mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let width = r.take(1)?[0] as usize;
        if width != T::BYTES {
            return Err(NnError::Checkpoint(format!(
                "checkpoint stores {width}-byte values, reader expects {}",
                T::BYTES
            )));
        }
        let count = r.u32()?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| NnError::Checkpoint("entry name is not UTF-8".into()))?;
            let n = r.u32()? as usize;
            let spec: NetSpec = serde_json::from_slice(r.take(n)?)
                .map_err(|e| NnError::Checkpoint(format!("bad spec for `{name}`: {e}")))?;
            let values = r.u64()? as usize;
            let mut params = NetParams::<T>::zeros_for(&spec);
            if params.num_values() != values {
                return Err(NnError::Checkpoint(format!(
                    "`{name}` stores {values} values, spec needs {}",
                    params.num_values()
                )));
            }
            for t in params.tensors_mut() {
                let shape = t.shape().to_vec();
                let raw = r.take(t.len() * T::BYTES)?;
                let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
                *t = Tensor::new(shape, data)?;
            }
            entries.push(CheckpointEntry { name, spec, params });
        }
        if r.pos != bytes.len() {
            return Err(NnError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let bytes = fs::read(path).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn small_spec() -> NetSpec {
        NetSpec::new(
            vec![5, 5, 2],
            vec![
                LayerSpec::Conv {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: 3,
                    stride: 1,
                    activation: Activation::Relu,
                },
                LayerSpec::Gru {
                    inputs: 27,
                    hidden: 4,
                },
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: 2,
                    activation: Activation::Linear,
                },
            ],
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a: Net<f32> = Net::new(small_spec(), 11).unwrap();
        let b: Net<f32> = Net::new(small_spec(), 12).unwrap();
        let mut ck = Checkpoint::new();
        ck.push("actor", &a);
        ck.push("critic", &b);
        let bytes = ck.to_bytes();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(
            back.restore("critic").unwrap().params().fingerprint(),
            b.params().fingerprint()
        );
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let a: Net<f64> = Net::new(small_spec(), 1).unwrap();
        let mut ck = Checkpoint::new();
        ck.push("x", &a);
        let bytes = ck.to_bytes();
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
    }
}
