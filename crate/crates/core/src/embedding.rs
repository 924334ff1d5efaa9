use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{Error, Result};

pub const NPEM_MAGIC: &[u8; 8] = b"NPEM0001";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EmbeddingMeta {
    pub source_checkpoint: usize,
    pub model: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
}

/// Per-node representation vectors, float32 row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    num_nodes: usize,
    dim: usize,
    values: Vec<f32>,
    meta: EmbeddingMeta,
}

impl EmbeddingMatrix {
    pub fn new(num_nodes: usize, dim: usize, values: Vec<f32>, meta: EmbeddingMeta) -> Result<Self> {
        if values.len() != num_nodes * dim {
            return Err(Error::Invalid(format!(
                "embedding {num_nodes}x{dim} needs {} values, got {}",
                num_nodes * dim,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite embedding value at node {}",
                i / dim.max(1)
            )));
        }
        Ok(EmbeddingMatrix {
            num_nodes,
            dim,
            values,
            meta,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], meta: EmbeddingMeta) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Invalid("embedding rows differ in length".into()));
        }
        let values = rows.iter().flatten().map(|&x| x as f32).collect();
        EmbeddingMatrix::new(rows.len(), dim, values, meta)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &EmbeddingMeta {
        &self.meta
    }

    pub fn row(&self, v: usize) -> &[f32] {
        &self.values[v * self.dim..(v + 1) * self.dim]
    }

    pub fn select_rows(&self, nodes: &[usize]) -> EmbeddingMatrix {
        let mut values = Vec::with_capacity(nodes.len() * self.dim);
        for &v in nodes {
            values.extend_from_slice(self.row(v));
        }
        EmbeddingMatrix {
            num_nodes: nodes.len(),
            dim: self.dim,
            values,
            meta: self.meta.clone(),
        }
    }

    pub fn to_npem(&self) -> Vec<u8> {
        binfmt::encode(
            NPEM_MAGIC,
            &[self.num_nodes as u64, self.dim as u64],
            self.values.iter().copied(),
        )
    }

    pub fn meta_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(&self.meta)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binfmt::write_file(path, &self.to_npem())?;
        binfmt::write_file(&binfmt::sidecar_path(path), &self.meta_json()?)
    }

    /// Loads `path`; the sidecar is optional for embeddings.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = binfmt::read_file(path)?;
        let t = binfmt::decode(&bytes, NPEM_MAGIC, 2, path)?;
        let side = binfmt::sidecar_path(path);
        let meta = match std::fs::read(&side) {
            Ok(raw) => serde_json::from_slice(&raw)
                .map_err(|e| Error::format(&side, format!("bad embedding metadata: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => EmbeddingMeta::default(),
            Err(e) => return Err(Error::read(&side, e)),
        };
        EmbeddingMatrix::new(t.dims[0] as usize, t.dims[1] as usize, t.values, meta)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}
