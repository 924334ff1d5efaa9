use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{Error, Result};

pub const NPTR_MAGIC: &[u8; 8] = b"NPTR0001";

/// Tolerance on row sums and on out-of-range entries before a diagnostic.
pub const STOCHASTIC_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TraceMeta {
    pub checkpoint_epochs: Vec<u64>,
    pub model: String,
    pub seed: u64,
    #[serde(default)]
    pub notes: BTreeMap<String, serde_json::Value>,
}

/// Class distributions for every node at every saved checkpoint, stored as
/// an `E x N x C` float32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    num_checkpoints: usize,
    num_nodes: usize,
    num_classes: usize,
    probs: Vec<f32>,
    meta: TraceMeta,
}

impl PredictionTrace {
    /// Validates shape, epoch ordering and row stochasticity. Entries slightly
    /// outside `[0, 1]` are clamped; larger violations are clamped with a warning.
    pub fn new(
        num_checkpoints: usize,
        num_nodes: usize,
        num_classes: usize,
        mut probs: Vec<f32>,
        meta: TraceMeta,
    ) -> Result<Self> {
        if num_checkpoints == 0 {
            return Err(Error::Invalid("a trace needs at least one checkpoint".into()));
        }
        if num_classes == 0 {
            return Err(Error::Invalid("a trace needs at least one class".into()));
        }
        let expected = num_checkpoints * num_nodes * num_classes;
        if probs.len() != expected {
            return Err(Error::Invalid(format!(
                "trace {num_checkpoints}x{num_nodes}x{num_classes} needs {expected} values, got {}",
                probs.len()
            )));
        }
        if meta.checkpoint_epochs.len() != num_checkpoints {
            return Err(Error::Invalid(format!(
                "{} checkpoint epochs listed for {num_checkpoints} checkpoints",
                meta.checkpoint_epochs.len()
            )));
        }
        if meta.checkpoint_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("checkpoint epochs must be strictly increasing".into()));
        }
        for (i, row) in probs.chunks_exact_mut(num_classes).enumerate() {
            let (e, v) = (i / num_nodes.max(1), i % num_nodes.max(1));
            let mut sum = 0.0f64;
            for p in row.iter_mut() {
                if !p.is_finite() {
                    return Err(Error::Invalid(format!(
                        "non-finite probability at checkpoint {e} node {v}"
                    )));
                }
                let clamped = p.clamp(0.0, 1.0);
                let violation = (f64::from(*p) - f64::from(clamped)).abs();
                if violation > STOCHASTIC_TOL {
                    log::warn!(
                        "probability {p} at checkpoint {e} node {v} clamped to [0, 1]"
                    );
                }
                *p = clamped;
                sum += f64::from(clamped);
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Invalid(format!(
                    "probabilities at checkpoint {e} node {v} sum to {sum}"
                )));
            }
        }
        Ok(PredictionTrace {
            num_checkpoints,
            num_nodes,
            num_classes,
            probs,
            meta,
        })
    }

    pub fn num_checkpoints(&self) -> usize {
        self.num_checkpoints
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut TraceMeta {
        &mut self.meta
    }

    pub fn row(&self, checkpoint: usize, node: usize) -> &[f32] {
        let at = (checkpoint * self.num_nodes + node) * self.num_classes;
        &self.probs[at..at + self.num_classes]
    }

    pub fn prob(&self, checkpoint: usize, node: usize, class: usize) -> f64 {
        f64::from(self.row(checkpoint, node)[class])
    }

    /// Probability of `class` for `node` across checkpoints.
    pub fn class_series(&self, node: usize, class: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_checkpoints).map(move |e| self.prob(e, node, class))
    }

    /// Rows for `nodes` only, in that order.
    pub fn select_nodes(&self, nodes: &[usize]) -> PredictionTrace {
        let mut probs = Vec::with_capacity(self.num_checkpoints * nodes.len() * self.num_classes);
        for e in 0..self.num_checkpoints {
            for &v in nodes {
                probs.extend_from_slice(self.row(e, v));
            }
        }
        PredictionTrace {
            num_checkpoints: self.num_checkpoints,
            num_nodes: nodes.len(),
            num_classes: self.num_classes,
            probs,
            meta: self.meta.clone(),
        }
    }

    pub fn to_nptr(&self) -> Vec<u8> {
        binfmt::encode(
            NPTR_MAGIC,
            &[
                self.num_checkpoints as u64,
                self.num_nodes as u64,
                self.num_classes as u64,
            ],
            self.probs.iter().copied(),
        )
    }

    pub fn meta_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(&self.meta)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_nptr(bytes: &[u8], meta: TraceMeta, path: &Path) -> Result<Self> {
        let t = binfmt::decode(bytes, NPTR_MAGIC, 3, path)?;
        let dims: Vec<usize> = t.dims.iter().map(|&d| d as usize).collect();
        PredictionTrace::new(dims[0], dims[1], dims[2], t.values, meta)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    /// Writes `path` and its `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        binfmt::write_file(path, &self.to_nptr())?;
        binfmt::write_file(&binfmt::sidecar_path(path), &self.meta_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = binfmt::read_file(path)?;
        let side = binfmt::sidecar_path(path);
        let meta: TraceMeta = match std::fs::read(&side) {
            Ok(raw) => serde_json::from_slice(&raw)
                .map_err(|e| Error::format(&side, format!("bad trace metadata: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::format(path, "missing .meta.json sidecar"));
            }
            Err(e) => return Err(Error::read(&side, e)),
        };
        PredictionTrace::from_nptr(&bytes, meta, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(e: usize) -> TraceMeta {
        TraceMeta {
            checkpoint_epochs: (1..=e as u64).collect(),
            model: "test".into(),
            seed: 0,
            notes: BTreeMap::new(),
        }
    }

    #[test]
    fn non_stochastic_row_is_rejected_with_location() {
        let err = PredictionTrace::new(1, 2, 2, vec![0.5, 0.5, 0.3, 0.5], meta(1)).unwrap_err();
        assert!(err.to_string().contains("checkpoint 0 node 1"), "{err}");
    }

    #[test]
    fn slight_overshoot_is_clamped() {
        let t = PredictionTrace::new(1, 1, 2, vec![1.000_002, -0.000_002], meta(1)).unwrap();
        assert_eq!(t.row(0, 0), &[1.0, 0.0]);
    }

    #[test]
    fn epochs_must_increase() {
        let mut m = meta(2);
        m.checkpoint_epochs = vec![3, 3];
        assert!(PredictionTrace::new(2, 1, 1, vec![1.0, 1.0], m).is_err());
    }

    #[test]
    fn save_load_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nptr");
        let t = PredictionTrace::new(2, 2, 2, vec![0.25, 0.75, 0.5, 0.5, 0.1, 0.9, 1.0, 0.0], meta(2))
            .unwrap();
        t.save(&path).unwrap();
        let back = PredictionTrace::load(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_nptr(), std::fs::read(&path).unwrap());
        assert_eq!(back.row(1, 0), &[0.1, 0.9]);
    }

    #[test]
    fn missing_sidecar_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nptr");
        let t = PredictionTrace::new(1, 1, 1, vec![1.0], meta(1)).unwrap();
        binfmt::write_file(&path, &t.to_nptr()).unwrap();
        assert!(PredictionTrace::load(&path).is_err());
    }
}
