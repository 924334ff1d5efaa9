use std::path::Path;

use crate::binfmt;
use crate::error::{Error, Result};

pub const NPFX_MAGIC: &[u8; 8] = b"NPFX0001";

/// Dense node-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    num_nodes: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(num_nodes: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_nodes * dim {
            return Err(Error::Invalid(format!(
                "feature matrix {num_nodes}x{dim} needs {} values, got {}",
                num_nodes * dim,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite feature at node {} column {}",
                i / dim.max(1),
                i % dim.max(1)
            )));
        }
        Ok(FeatureMatrix {
            num_nodes,
            dim,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Invalid(format!(
                "row {r} has {} columns, expected {dim}",
                rows[r].len()
            )));
        }
        FeatureMatrix::new(rows.len(), dim, rows.concat())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, v: usize) -> &[f64] {
        &self.values[v * self.dim..(v + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1)).take(self.num_nodes)
    }

    /// Rows selected in the given order.
    pub fn select_rows(&self, nodes: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(nodes.len() * self.dim);
        for &v in nodes {
            values.extend_from_slice(self.row(v));
        }
        FeatureMatrix {
            num_nodes: nodes.len(),
            dim: self.dim,
            values,
        }
    }

    pub fn to_npfx(&self) -> Vec<u8> {
        binfmt::encode(
            NPFX_MAGIC,
            &[self.num_nodes as u64, self.dim as u64],
            self.values.iter().map(|&v| v as f32),
        )
    }

    pub fn from_npfx(bytes: &[u8], path: &Path) -> Result<Self> {
        let t = binfmt::decode(bytes, NPFX_MAGIC, 2, path)?;
        let (n, d) = (t.dims[0] as usize, t.dims[1] as usize);
        if let Some(i) = t.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                path,
                format!("non-finite value at node {} column {}", i / d, i % d),
            ));
        }
        Ok(FeatureMatrix {
            num_nodes: n,
            dim: d,
            values: t.values.into_iter().map(f64::from).collect(),
        })
    }

    pub fn save_npfx(&self, path: &Path) -> Result<()> {
        binfmt::write_file(path, &self.to_npfx())
    }
}

/// Loads NPFX (detected by magic bytes) or headerless comma-separated text.
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = binfmt::read_file(path)?;
    if bytes.starts_with(NPFX_MAGIC) {
        FeatureMatrix::from_npfx(&bytes, path)
    } else {
        parse_csv(&bytes, path)
    }
}

fn parse_csv(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    let mut rows = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, r + 1, e.to_string()))?;
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(Error::parse(
                    path,
                    r + 1,
                    format!("row {r} has {} columns, expected {d}", record.len()),
                ))
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(path, r + 1, format!("row {r} col {c}: invalid number {cell:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    r + 1,
                    format!("row {r} col {c}: non-finite value {cell}"),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    FeatureMatrix::new(rows, dim.unwrap_or(0), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn npfx_four_by_two() {
        let m = FeatureMatrix::new(4, 2, vec![1., 0., 0., 1., 1., 1., 0., 0.]).unwrap();
        let bytes = m.to_npfx();
        assert_eq!(&bytes[..8], b"NPFX0001");
        assert_eq!(bytes.len(), 8 + 16 + 4 * 8);
        let back = FeatureMatrix::from_npfx(&bytes, Path::new("x")).unwrap();
        assert_eq!(back.num_nodes(), 4);
        assert_eq!(back.dim(), 2);
        assert_eq!(back.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn csv_nan_cell_names_row_and_column() {
        let err = parse_csv(b"1,2\n3,NaN\n", Path::new("f.csv")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1 col 1"), "{msg}");
        assert!(err.is_user_error());
    }

    #[test]
    fn csv_ragged_rows_are_rejected() {
        assert!(parse_csv(b"1,2\n3\n", Path::new("f.csv")).is_err());
    }

    #[test]
    fn npfx_shape_mismatch_is_rejected() {
        let mut bytes = FeatureMatrix::new(2, 2, vec![0.0; 4]).unwrap().to_npfx();
        bytes.truncate(bytes.len() - 4);
        assert!(FeatureMatrix::from_npfx(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn npfx_non_finite_names_node_and_column() {
        let mut bytes = FeatureMatrix::new(2, 3, vec![0.0; 6]).unwrap().to_npfx();
        let at = 24 + 4 * 5;
        bytes[at..at + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
        let msg = FeatureMatrix::from_npfx(&bytes, Path::new("x"))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("node 1 column 2"), "{msg}");
    }

    #[test]
    fn wide_rows_are_accepted() {
        let m = FeatureMatrix::new(3, 1433, vec![0.5; 3 * 1433]).unwrap();
        let back = FeatureMatrix::from_npfx(&m.to_npfx(), Path::new("x")).unwrap();
        assert_eq!(back.dim(), 1433);
    }
}
