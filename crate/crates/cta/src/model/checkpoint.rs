//! Checkpoint persistence.
//!
//! File layout ("CTAB" format, version 1):
//!
//! ```text
//! magic   "CTAB"            4 bytes
//! version u16 LE
//! hlen    u32 LE            header byte length
//! header  UTF-8 JSON        spec + metadata + tensor inventory
//! blocks  per tensor, in header order:
//!           u16 LE name length, name bytes,
//!           u8 rank, rank x u64 LE dims,
//!           volume x f32 LE values
//! ```
//!
//! Values are stored as f32. Committed parameter stores live on the f32
//! grid (see `ParamStore::quantize_f32`), so save/load round-trips are
//! bit-exact in both directions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};
use crate::model::network::Network;
use crate::model::params::{ParamRole, ParamStore};
use crate::model::spec::ModelSpec;
use crate::numerics::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CTAB";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs: usize,
    pub final_val_accuracy: f64,
    /// Hash of the resolved configuration that produced this model; lets
    /// downstream runs find a matching source model without retraining.
    #[serde(default)]
    pub source_hash: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub metadata: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    metadata: CheckpointMeta,
    tensors: Vec<TensorInfo>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    role: ParamRole,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        spec: ckpt.spec.clone(),
        metadata: ckpt.metadata.clone(),
        tensors: ckpt
            .params
            .iter()
            .map(|(name, entry)| TensorInfo { name: name.to_string(), role: entry.role })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(header_json.len() + ckpt.params.scalar_count() * 4 + 64);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for (name, entry) in ckpt.params.iter() {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(CtaError::invalid("tensor name", format!("'{name}' exceeds u16 length")));
        }
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        let shape = entry.tensor.shape();
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in entry.tensor.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, &buf).map_err(|e| CtaError::io(path.display().to_string(), e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CtaError::CheckpointFormat(format!(
                "truncated while reading {what} (need {n} bytes at offset {}, file has {})",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| CtaError::io(path.display().to_string(), e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(CtaError::CheckpointFormat("bad magic bytes, not a CTAB checkpoint".into()));
    }
    let version = cur.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CtaError::CheckpointVersion { found: version, supported: CHECKPOINT_VERSION });
    }
    let hlen = cur.u32("header length")? as usize;
    let header_bytes = cur.take(hlen, "header")?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| CtaError::CheckpointFormat(format!("header: {e}")))?;

    let mut params = ParamStore::new();
    for info in &header.tensors {
        let name_len = cur.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|_| CtaError::CheckpointFormat("tensor name is not UTF-8".into()))?;
        if name != info.name {
            return Err(CtaError::CheckpointFormat(format!(
                "tensor order mismatch: header says '{}', block says '{name}'",
                info.name
            )));
        }
        let rank = cur.take(1, "tensor rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64("tensor dim")? as usize);
        }
        let volume: usize = shape.iter().product();
        let raw = cur.take(volume * 4, &format!("values of '{name}'"))?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        params.insert(name, Tensor::from_vec(&shape, data)?, info.role)?;
    }
    if cur.pos != bytes.len() {
        return Err(CtaError::CheckpointFormat(format!(
            "{} trailing bytes after the declared tensors",
            bytes.len() - cur.pos
        )));
    }

    // Cross-check the stored tensors against what the spec implies.
    let net = Network::new(header.spec.clone())?;
    let inventory = net.param_inventory();
    if inventory.len() != params.len() {
        return Err(CtaError::CheckpointFormat(format!(
            "spec implies {} tensors, file holds {}",
            inventory.len(),
            params.len()
        )));
    }
    for (name, role, shape) in inventory {
        let tensor = params
            .get(&name)
            .map_err(|_| CtaError::CheckpointFormat(format!("missing tensor '{name}'")))?;
        if tensor.shape() != shape.as_slice() {
            return Err(CtaError::CheckpointFormat(format!(
                "tensor '{name}': spec implies shape {:?}, file holds {:?}",
                shape,
                tensor.shape()
            )));
        }
        if params.role(&name)? != role {
            return Err(CtaError::CheckpointFormat(format!("tensor '{name}' has the wrong role")));
        }
    }
    Ok(Checkpoint { spec: header.spec, params, metadata: header.metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::build_model;
    use crate::numerics::StatMode;
    use crate::rng::{rng_from, uniform};

    fn sample_checkpoint() -> (Network, Checkpoint) {
        let spec = ModelSpec::desk([1, 16, 16], 4);
        let (net, mut params) = build_model(spec.clone(), 42).unwrap();
        params.quantize_f32();
        let ckpt = Checkpoint {
            spec,
            params,
            metadata: CheckpointMeta {
                seed: 42,
                epochs: 0,
                final_val_accuracy: 0.25,
                source_hash: "deadbeef".into(),
            },
        };
        (net, ckpt)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ctab");
        let (_, ckpt) = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.spec, ckpt.spec);
        assert_eq!(loaded.metadata.source_hash, "deadbeef");
        for (name, entry) in ckpt.params.iter() {
            assert!(entry.tensor.bit_identical(loaded.params.get(name).unwrap()), "{name}");
        }
        // A second save must produce a byte-identical file.
        let path2 = dir.path().join("model2.ctab");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn forward_outputs_survive_the_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ctab");
        let (net, ckpt) = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let mut rng = rng_from(9, &[]);
        let data: Vec<f64> = (0..2 * 256).map(|_| uniform(&mut rng)).collect();
        let x = Tensor::from_vec(&[2, 1, 16, 16], data).unwrap();
        let (p1, _) = net.forward_eval(&ckpt.params, &x, StatMode::TestBatch).unwrap();
        let (p2, _) = net.forward_eval(&loaded.params, &x, StatMode::TestBatch).unwrap();
        assert!(p1.bit_identical(&p2));
    }

    #[test]
    fn truncation_anywhere_is_a_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ctab");
        let (_, ckpt) = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let full = std::fs::read(&path).unwrap();
        for cut in [3, 5, 9, 40, full.len() / 2, full.len() - 1] {
            let partial = dir.path().join("partial.ctab");
            std::fs::write(&partial, &full[..cut]).unwrap();
            let err = load_checkpoint(&partial);
            assert!(err.is_err(), "no error at cut {cut}");
        }
    }

    #[test]
    fn future_version_is_rejected_with_both_versions_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ctab");
        let (_, ckpt) = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let next = (CHECKPOINT_VERSION + 1).to_le_bytes();
        bytes[4] = next[0];
        bytes[5] = next[1];
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(CtaError::CheckpointVersion { found, supported }) => {
                assert_eq!(found, CHECKPOINT_VERSION + 1);
                assert_eq!(supported, CHECKPOINT_VERSION);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_a_checkpoint");
        std::fs::write(&path, b"PK\x03\x04............").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CtaError::CheckpointFormat(_))));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ctab");
        let (_, ckpt) = sample_checkpoint();
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CtaError::CheckpointFormat(_))));
    }
}
