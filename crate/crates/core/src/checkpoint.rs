//! Self-describing model checkpoints.
//!
//! ```text
//! FNCKPT 1\n
//! <one line of JSON header>\n
//! <float64 little-endian payload, tensors concatenated in header order>
//! ```
//!
//! The header holds the model contract (backbone widths, attention mode,
//! title tying, fused segment layout), the init seed, the tensor table
//! (`name`, `shape`) and free-form metadata such as seeds and config hashes.
//! Metadata keys are sorted, so equal models with equal metadata serialise
//! to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelContract, ModelParams};

const MAGIC_LINE: &str = "FNCKPT 1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub contract: ModelContract,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

pub fn to_bytes(model: &ModelParams, meta: &BTreeMap<String, serde_json::Value>) -> Result<Vec<u8>> {
    let views = model.tensors();
    let header = CheckpointHeader {
        contract: model.contract.clone(),
        seed: model.seed,
        tensors: views
            .iter()
            .map(|t| TensorEntry {
                name: t.name.to_string(),
                shape: t.shape.clone(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC_LINE.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
    out.push(b'\n');
    for t in &views {
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelParams, CheckpointHeader)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let magic_end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing magic line"))?;
    if &bytes[..magic_end] != MAGIC_LINE.as_bytes() {
        return Err(bad("not a checkpoint (bad magic line)"));
    }
    let rest = &bytes[magic_end + 1..];
    let header_end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&rest[..header_end])?;
    let mut payload = &rest[header_end + 1..];

    let mut model = ModelParams::zeros(header.contract.clone());
    model.seed = header.seed;
    let expected: Vec<(String, Vec<usize>)> = model
        .tensors()
        .iter()
        .map(|t| (t.name.to_string(), t.shape.clone()))
        .collect();
    let found: Vec<(String, Vec<usize>)> = header
        .tensors
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .collect();
    if expected != found {
        return Err(Error::ContractMismatch {
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        });
    }
    for slot in model.tensors_mut() {
        let n = slot.len() * 8;
        if payload.len() < n {
            return Err(bad("truncated tensor payload"));
        }
        for (dst, chunk) in slot.iter_mut().zip(payload[..n].chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        payload = &payload[n..];
    }
    if !payload.is_empty() {
        return Err(bad("trailing bytes after tensor payload"));
    }
    Ok((model, header))
}

pub fn save(path: impl AsRef<Path>, model: &ModelParams, meta: &BTreeMap<String, serde_json::Value>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(ModelParams, CheckpointHeader)> {
    let path = path.as_ref();
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Errors unless `found` equals `expected`, describing both.
pub fn check_contract(expected: &ModelContract, found: &ModelContract) -> Result<()> {
    if expected == found {
        return Ok(());
    }
    let describe = |c: &ModelContract| {
        format!(
            "text_enc={} image_enc={} attention_mode={} tie_title={} fused_dim={} segments=[{}]",
            c.text_enc,
            c.image_enc,
            c.attention_mode,
            c.tie_title,
            c.fused_dim(),
            c.layout
                .entries
                .iter()
                .map(|e| format!("{}:{}", e.segment, e.end - e.start))
                .collect::<Vec<_>>()
                .join(",")
        )
    };
    Err(Error::ContractMismatch {
        expected: describe(expected),
        found: describe(found),
    })
}
