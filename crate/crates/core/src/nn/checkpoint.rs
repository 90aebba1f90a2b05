//! Checkpoint file: a `goalgraph-ckpt v1` header line, one JSON manifest line,
//! then the raw little-endian `f64` blobs it indexes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "goalgraph-ckpt v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset from the start of the blob section.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Free-form metadata (model configuration, training step, ...).
    pub meta: serde_json::Value,
    pub params: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: store
                .iter()
                .map(|(_, p)| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape(),
                offset,
            });
            offset += t.len() * 8;
        }
        let manifest = Manifest {
            meta: self.meta.clone(),
            params: entries,
        };
        let mut out = Vec::with_capacity(offset + 4096);
        out.extend_from_slice(CHECKPOINT_HEADER.as_bytes());
        out.push(b'\n');
        serde_json::to_writer(&mut out, &manifest).expect("manifest serializes");
        out.push(b'\n');
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Data(format!("{}: {msg}", origin.display()));
        let header_end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing checkpoint header".into()))?;
        if &bytes[..header_end] != CHECKPOINT_HEADER.as_bytes() {
            return Err(bad(format!(
                "expected header `{CHECKPOINT_HEADER}`, found `{}`",
                String::from_utf8_lossy(&bytes[..header_end.min(64)])
            )));
        }
        let rest = &bytes[header_end + 1..];
        let manifest_end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing manifest".into()))?;
        let manifest: Manifest =
            serde_json::from_slice(&rest[..manifest_end]).map_err(|e| Error::parse(origin, &e))?;
        let blob = &rest[manifest_end + 1..];
        let mut tensors = Vec::with_capacity(manifest.params.len());
        for e in manifest.params {
            let n = e.shape[0] * e.shape[1];
            let end = e.offset + n * 8;
            if end > blob.len() {
                return Err(bad(format!("blob for `{}` is truncated", e.name)));
            }
            let data = blob[e.offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((e.name, Tensor::from_vec(e.shape[0], e.shape[1], data)?));
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Copy every tensor into `store`; names and shapes must match exactly.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<()> {
        for (_, p) in store.iter() {
            if !self.tensors.iter().any(|(n, _)| n == &p.name) {
                return Err(Error::Data(format!(
                    "checkpoint is missing parameter `{}`",
                    p.name
                )));
            }
        }
        for (name, t) in &self.tensors {
            store.set_value(name, t.clone())?;
        }
        Ok(())
    }
}
