//! Model checkpoint file.
//!
//! A single JSON object:
//!
//! ```json
//! {"format": "factnet-rgcn/1",
//!  "config": { ..RgcnConfig.. },
//!  "dims": {"user": 32, "item": 32},
//!  "tensors": [{"name": "input.source", "rows": 32, "cols": 32, "data": "<base64>"}, ..]}
//! ```
//!
//! `data` is the standard (padded) base64 encoding of the matrix in
//! row-major order, each value a little-endian IEEE-754 `f64`, so a
//! tensor payload is exactly `rows * cols * 8` bytes. Tensors appear in
//! parameter order; names and shapes must match the layout implied by
//! the config.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{RgcnConfig, RgcnError, RgcnModel};
use crate::graph::FeatureDims;
use crate::numerics::Matrix;

pub const CHECKPOINT_FORMAT: &str = "factnet-rgcn/1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: RgcnConfig,
    dims: FeatureDims,
    tensors: Vec<TensorEntry>,
}

fn encode(m: &Matrix) -> String {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for v in m.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode(entry: &TensorEntry) -> Result<Matrix, RgcnError> {
    let bytes = STANDARD
        .decode(&entry.data)
        .map_err(|e| RgcnError::Checkpoint(format!("{}: {e}", entry.name)))?;
    if bytes.len() != entry.rows * entry.cols * 8 {
        return Err(RgcnError::Checkpoint(format!(
            "{}: payload is {} bytes, expected {}",
            entry.name,
            bytes.len(),
            entry.rows * entry.cols * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Matrix::from_vec(entry.rows, entry.cols, data)?)
}

impl RgcnModel {
    pub fn to_checkpoint_json(&self) -> String {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            dims: self.dims,
            tensors: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, m)| TensorEntry {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: encode(m),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(s: &str) -> Result<Self, RgcnError> {
        let file: CheckpointFile =
            serde_json::from_str(s).map_err(|e| RgcnError::Checkpoint(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(RgcnError::Checkpoint(format!(
                "unsupported format {:?}",
                file.format
            )));
        }
        let mut model = RgcnModel::new(file.config, file.dims)?;
        if file.tensors.len() != model.values.len() {
            return Err(RgcnError::Checkpoint(format!(
                "{} tensors, layout needs {}",
                file.tensors.len(),
                model.values.len()
            )));
        }
        for (i, entry) in file.tensors.iter().enumerate() {
            let m = decode(entry)?;
            if entry.name != model.names[i] || m.shape() != model.values[i].shape() {
                return Err(RgcnError::Checkpoint(format!(
                    "tensor {i} is {} {:?}, layout expects {} {:?}",
                    entry.name,
                    m.shape(),
                    model.names[i],
                    model.values[i].shape()
                )));
            }
            if !m.is_finite() {
                return Err(RgcnError::Checkpoint(format!("{}: non-finite values", entry.name)));
            }
            model.values[i] = m;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_checkpoint_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RgcnError> {
        let s = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RgcnError::Checkpoint(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_checkpoint_json(&s)
    }
}
