//! Categorization of unseen nodes by nearest-neighbor vote in embedding space.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::uncertainty::{categorize, uncertainties, DifficultyCategory, PredictionTrace, TaxonomyConfig};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos`; a zero vector has similarity 0 to everything.
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected euclidean or cosine)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InductiveConfig {
    pub k_neighbors: usize,
    pub metric: Metric,
}

impl Default for InductiveConfig {
    fn default() -> Self {
        InductiveConfig {
            k_neighbors: DEFAULT_K,
            metric: Metric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InductiveResult {
    pub predicted: Vec<DifficultyCategory>,
    /// Reference ids ordered by increasing distance.
    pub neighbor_ids: Vec<Vec<usize>>,
    /// (easy, ambiguous, hard) votes.
    pub vote_counts: Vec<[usize; 3]>,
}

fn norm(x: &[f32]) -> f64 {
    x.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt()
}

fn distance(metric: Metric, a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    match metric {
        // Squared distance gives the same order as the distance itself.
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum(),
        Metric::Cosine => {
            if norm_a == 0.0 || norm_b == 0.0 {
                return 1.0;
            }
            let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
            1.0 - dot / (norm_a * norm_b)
        }
    }
}

/// Plurality category among `neighbors`; a tie goes to whichever tied
/// category appears first in the (distance-ordered) neighbor list.
pub fn vote(neighbors: &[DifficultyCategory]) -> (DifficultyCategory, [usize; 3]) {
    let mut counts = [0usize; 3];
    for c in neighbors {
        counts[c.index()] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let winner = neighbors
        .iter()
        .copied()
        .find(|c| counts[c.index()] == top)
        .unwrap_or(DifficultyCategory::Ambiguous);
    (winner, counts)
}

pub fn knn_categorize(
    reference: &EmbeddingMatrix,
    reference_categories: &[DifficultyCategory],
    new: &EmbeddingMatrix,
    config: &InductiveConfig,
) -> Result<InductiveResult> {
    let n_ref = reference.num_nodes();
    if reference_categories.len() != n_ref {
        return Err(Error::Invalid(format!(
            "{n_ref} reference embeddings but {} reference categories",
            reference_categories.len()
        )));
    }
    if reference.dim() != new.dim() {
        return Err(Error::Invalid(format!(
            "embedding dimension mismatch: reference {} vs new {}",
            reference.dim(),
            new.dim()
        )));
    }
    let k = config.k_neighbors;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > n_ref {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {n_ref} reference nodes"
        )));
    }
    let ref_norms: Vec<f64> = (0..n_ref).map(|u| norm(reference.row(u))).collect();

    let per_node: Vec<(DifficultyCategory, Vec<usize>, [usize; 3])> = (0..new.num_nodes())
        .into_par_iter()
        .map(|v| {
            let x = new.row(v);
            let nx = norm(x);
            let mut cand: Vec<(f64, usize)> = (0..n_ref)
                .map(|u| (distance(config.metric, x, reference.row(u), nx, ref_norms[u]), u))
                .collect();
            let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
            };
            if k < n_ref {
                cand.select_nth_unstable_by(k - 1, order);
                cand.truncate(k);
            }
            cand.sort_unstable_by(order);
            let ids: Vec<usize> = cand.into_iter().map(|(_, u)| u).collect();
            let cats: Vec<DifficultyCategory> = ids.iter().map(|&u| reference_categories[u]).collect();
            let (winner, counts) = vote(&cats);
            (winner, ids, counts)
        })
        .collect();

    let mut result = InductiveResult {
        predicted: Vec::with_capacity(per_node.len()),
        neighbor_ids: Vec::with_capacity(per_node.len()),
        vote_counts: Vec::with_capacity(per_node.len()),
    };
    for (c, ids, counts) in per_node {
        result.predicted.push(c);
        result.neighbor_ids.push(ids);
        result.vote_counts.push(counts);
    }
    Ok(result)
}

/// Fraction of exact matches.
pub fn categorization_accuracy(predicted: &[DifficultyCategory], truth: &[DifficultyCategory]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "{} predictions but {} ground-truth categories",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Invalid("accuracy of an empty node set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Categories of `new_nodes` computed over the whole augmented population
/// (the median of `v_al` includes every node of the trace).
pub fn ground_truth_categories(
    augmented_trace: &PredictionTrace,
    labels: &LabelSet,
    config: &TaxonomyConfig,
    new_nodes: &[usize],
) -> Result<Vec<DifficultyCategory>> {
    config.validate()?;
    let profiles = uncertainties(augmented_trace, labels)?;
    let cats = categorize(&profiles, config);
    new_nodes
        .iter()
        .map(|&v| {
            cats.get(v).copied().ok_or_else(|| {
                Error::Invalid(format!(
                    "new node {v} is outside the augmented trace ({} nodes)",
                    cats.len()
                ))
            })
        })
        .collect()
}

/// `new_node_id,predicted,easy_votes,ambiguous_votes,hard_votes,neighbor_ids`
///
/// `new_ids` names the rows; when `None`, rows are numbered from 0.
pub fn write_result_csv<W: Write>(result: &InductiveResult, new_ids: Option<&[usize]>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "new_node_id",
        "predicted",
        "easy_votes",
        "ambiguous_votes",
        "hard_votes",
        "neighbor_ids",
    ])?;
    for i in 0..result.predicted.len() {
        let id = new_ids.map_or(i, |ids| ids[i]);
        let [e, a, h] = result.vote_counts[i];
        let nbrs = result.neighbor_ids[i]
            .iter()
            .map(|u| u.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            id.to_string(),
            result.predicted[i].to_string(),
            e.to_string(),
            a.to_string(),
            h.to_string(),
            nbrs,
        ])?;
    }
    w.flush()?;
    Ok(())
}
