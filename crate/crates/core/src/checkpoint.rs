//! Single-file model checkpoints.
//!
//! Layout:
//!
//! ```text
//! magic    8 bytes   "CSSCKPT\0"
//! hlen     u64 LE    length of the JSON header in bytes
//! header   hlen      compact JSON: format_version, model_kind, config,
//!                    vocab, tensors[{name, shape, offset}]
//! payload            concatenated little-endian f32 tensors; `offset` is
//!                    the byte position of each tensor within the payload
//! ```
//!
//! Tensors are stored in registration order with contiguous offsets, so
//! loading and re-saving reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CSSCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    DaEncoder,
    Seq2seq,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_kind: ModelKind,
    config: serde_json::Value,
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model_kind: ModelKind,
    pub config: serde_json::Value,
    pub vocab: Vec<String>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(
        model_kind: ModelKind,
        config: serde_json::Value,
        vocab: Vec<String>,
        params: &ParamStore<T>,
    ) -> Self {
        Checkpoint {
            model_kind,
            config,
            vocab,
            tensors: params
                .iter()
                .map(|(n, t)| (n.to_string(), t.cast::<f32>()))
                .collect(),
        }
    }

    /// Records the fully resolved run configuration in the header.
    pub fn with_run(mut self, run: serde_json::Value) -> Self {
        match &mut self.config {
            serde_json::Value::Object(map) => {
                map.insert("run".into(), run);
            }
            other => *other = serde_json::json!({ "model": other.clone(), "run": run }),
        }
        self
    }

    /// Copies stored tensors into `params`, matching by name and shape.
    pub fn restore_into<T: Scalar>(&self, params: &mut ParamStore<T>) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (name, t) in &self.tensors {
            let id = params.lookup(name).ok_or_else(|| {
                Error::Checkpoint(format!("unexpected tensor {name:?} in checkpoint"))
            })?;
            params
                .set(id, t.cast())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.model_kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind:?} checkpoint, found {:?}",
                self.model_kind
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += 4 * t.len() as u64;
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            model_kind: self.model_kind,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let payload = &body[hlen..];
        let mut expected = 0u64;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            if e.offset != expected {
                return Err(Error::Checkpoint(format!(
                    "tensor {} at offset {} but expected {expected}",
                    e.name, e.offset
                )));
            }
            let n: usize = e.shape.iter().product();
            let end = e.offset as usize + 4 * n;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} runs past the payload",
                    e.name
                )));
            }
            let data: Vec<f32> = payload[e.offset as usize..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(e.shape.clone(), data)
                .map_err(|err| Error::Checkpoint(err.to_string()))?;
            tensors.push((e.name.clone(), t));
            expected = end as u64;
        }
        if expected as usize != payload.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing payload bytes",
                payload.len() - expected as usize
            )));
        }
        Ok(Checkpoint {
            model_kind: header.model_kind,
            config: header.config,
            vocab: header.vocab,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
