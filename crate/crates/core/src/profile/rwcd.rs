use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ProfileConfig, ProfileFlags, Scores};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::labels::LabelSet;

/// Label counts collected over all walks from one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkLabelCounts {
    pub counts: Vec<u64>,
}

impl WalkLabelCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct RwcdOutput {
    pub scores: Scores,
    pub counts: Vec<WalkLabelCounts>,
}

/// Words of ChaCha keystream reserved per walk.
const WORDS_PER_WALK: u128 = 1 << 32;

/// Random-walk class divergence: `S_h = 1 - d_w[y_v] / sum(d_w)`.
///
/// Each walk takes up to `walk_length` uniform steps and stops early at a
/// node without neighbors. Walk `j` from node `v` draws from ChaCha stream `v`
/// at word offset `j * 2^32` of the `walk_seed` key, so every walk is fixed by
/// `(walk_seed, v, j)` alone.
pub fn rwcd(graph: &Graph, labels: &LabelSet, config: &ProfileConfig) -> Result<RwcdOutput> {
    config.validate()?;
    let y = labels.require_single("random-walk class divergence")?;
    if graph.num_nodes() != y.len() {
        return Err(Error::Invalid(format!(
            "graph has {} nodes, labels cover {}",
            graph.num_nodes(),
            y.len()
        )));
    }
    let base = ChaCha8Rng::seed_from_u64(config.walk_seed);
    let c = labels.num_classes();

    let per_node: Vec<(f64, ProfileFlags, WalkLabelCounts)> = (0..graph.num_nodes())
        .into_par_iter()
        .map(|v| {
            let mut counts = vec![0u64; c];
            let mut rng = base.clone();
            rng.set_stream(v as u64);
            for walk in 0..config.walks_per_node {
                rng.set_word_pos(walk as u128 * WORDS_PER_WALK);
                if config.count_walk_start {
                    counts[y[v]] += 1;
                }
                let mut at = v;
                for _ in 0..config.walk_length {
                    let nbrs = graph.neighbors(at, config.neighborhood);
                    if nbrs.is_empty() {
                        break;
                    }
                    at = nbrs.get(rng.random_range(0..nbrs.len()));
                    counts[y[at]] += 1;
                }
            }
            let total: u64 = counts.iter().sum();
            let (score, flags) = if total == 0 {
                (0.0, ProfileFlags::EMPTY_WALK)
            } else {
                (1.0 - counts[y[v]] as f64 / total as f64, ProfileFlags::EMPTY)
            };
            (score, flags, WalkLabelCounts { counts })
        })
        .collect();

    let mut values = Vec::with_capacity(per_node.len());
    let mut flags = Vec::with_capacity(per_node.len());
    let mut counts = Vec::with_capacity(per_node.len());
    for (s, f, w) in per_node {
        values.push(s);
        flags.push(f);
        counts.push(w);
    }
    Ok(RwcdOutput {
        scores: Scores { values, flags },
        counts,
    })
}

/// `node,count_0,...,count_{C-1}`
pub fn write_walk_counts_csv<W: Write>(counts: &[WalkLabelCounts], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let c = counts.first().map_or(0, |w| w.counts.len());
    let mut header = vec!["node".to_string()];
    header.extend((0..c).map(|i| format!("count_{i}")));
    w.write_record(&header)?;
    for (v, row) in counts.iter().enumerate() {
        let mut rec = vec![v.to_string()];
        rec.extend(row.counts.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
