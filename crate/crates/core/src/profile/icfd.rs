use rayon::prelude::*;

use super::{ProfileFlags, Scores};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::labels::LabelSet;

/// `S_f(v) = 1 - mean_{v' in class(v), v' != v} cos(x_v, x_v')`.
///
/// Uses the class-sum identity over unit-normalized rows. A zero row has
/// similarity 0 to every peer; a singleton class scores 0.
pub fn icfd(features: &FeatureMatrix, labels: &LabelSet) -> Result<Scores> {
    let y = labels.require_single("intra-class feature dissimilarity")?;
    let n = features.num_nodes();
    if y.len() != n {
        return Err(Error::Invalid(format!(
            "{} labels for {n} feature rows",
            y.len()
        )));
    }
    let d = features.dim();

    let unit: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let row = features.row(v);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm > 0.0).then(|| row.iter().map(|x| x / norm).collect())
        })
        .collect();

    let mut class_sum = vec![vec![0.0; d]; labels.num_classes()];
    let mut class_size = vec![0usize; labels.num_classes()];
    for (v, &c) in y.iter().enumerate() {
        class_size[c] += 1;
        if let Some(u) = &unit[v] {
            for (acc, x) in class_sum[c].iter_mut().zip(u) {
                *acc += x;
            }
        }
    }

    let (values, flags) = (0..n)
        .into_par_iter()
        .map(|v| {
            let c = y[v];
            let peers = class_size[c] - 1;
            let mut flags = ProfileFlags::EMPTY;
            if unit[v].is_none() {
                flags.insert(ProfileFlags::ZERO_NORM_FEATURE);
            }
            if peers == 0 {
                flags.insert(ProfileFlags::SINGLETON_CLASS);
                return (0.0, flags);
            }
            let similarity_sum = match &unit[v] {
                Some(u) => dot(u, &class_sum[c]) - dot(u, u),
                None => 0.0,
            };
            let score = 1.0 - similarity_sum / peers as f64;
            (score.clamp(0.0, 2.0), flags)
        })
        .unzip();
    Ok(Scores { values, flags })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
