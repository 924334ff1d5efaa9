use rayon::prelude::*;

use super::{ProfileConfig, ProfileFlags, Scores};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::labels::LabelSet;

/// Smoothed KL-form divergence between a node's one-hop label distribution
/// and the typical one for its class.
///
/// The class reference distribution pools the neighbor-label counts of all
/// class members and normalizes them; both sides are smoothed by `epsilon`
/// inside the logarithm. Isolated nodes score 0 and are flagged.
pub fn ncd(graph: &Graph, labels: &LabelSet, config: &ProfileConfig) -> Result<Scores> {
    let y = labels.require_single("neighborhood class divergence")?;
    check_len(graph, labels)?;
    let counts = neighbor_label_counts(graph, labels, config);
    let reference = class_reference(&counts, labels);
    let eps = config.epsilon;

    let (values, flags) = (0..graph.num_nodes())
        .into_par_iter()
        .map(|v| match normalized(&counts[v]) {
            None => (0.0, ProfileFlags::ISOLATED_NODE),
            Some(p) => (kl_term(&p, &reference[y[v]], eps), ProfileFlags::EMPTY),
        })
        .unzip();
    Ok(Scores { values, flags })
}

/// Multi-label variant: neighbor label sets are pooled as a multiset, and the
/// divergence is averaged over the reference distributions of every class the
/// node carries.
pub fn ncd_multilabel(graph: &Graph, labels: &LabelSet, config: &ProfileConfig) -> Result<Scores> {
    if !labels.is_multi() {
        return Err(Error::Unsupported(
            "multi-label neighborhood class divergence needs multi-label data; use ncd for single-label input"
                .into(),
        ));
    }
    check_len(graph, labels)?;
    let counts = neighbor_label_counts(graph, labels, config);
    let reference = class_reference(&counts, labels);
    let eps = config.epsilon;

    let (values, flags) = (0..graph.num_nodes())
        .into_par_iter()
        .map(|v| match normalized(&counts[v]) {
            None => (0.0, ProfileFlags::ISOLATED_NODE),
            Some(p) => {
                let own = labels.of(v);
                let total: f64 = own.iter().map(|&c| kl_term(&p, &reference[c], eps)).sum();
                (total / own.len() as f64, ProfileFlags::EMPTY)
            }
        })
        .unzip();
    Ok(Scores { values, flags })
}

fn check_len(graph: &Graph, labels: &LabelSet) -> Result<()> {
    if graph.num_nodes() != labels.len() {
        return Err(Error::Invalid(format!(
            "graph has {} nodes, labels cover {}",
            graph.num_nodes(),
            labels.len()
        )));
    }
    Ok(())
}

/// Raw label counts over each node's neighbors (multiplicity kept).
fn neighbor_label_counts(graph: &Graph, labels: &LabelSet, config: &ProfileConfig) -> Vec<Vec<f64>> {
    let c = labels.num_classes();
    (0..graph.num_nodes())
        .into_par_iter()
        .map(|v| {
            let mut counts = vec![0.0; c];
            for u in graph.neighbors(v, config.neighborhood).iter() {
                for &label in labels.of(u) {
                    counts[label] += 1.0;
                }
            }
            counts
        })
        .collect()
}

/// Per-class pooled and normalized neighbor-label distribution. Classes whose
/// members have no neighbors get an all-zero vector.
fn class_reference(counts: &[Vec<f64>], labels: &LabelSet) -> Vec<Vec<f64>> {
    let c = labels.num_classes();
    let mut pooled = vec![vec![0.0; c]; c];
    for (v, row) in counts.iter().enumerate() {
        for &class in labels.of(v) {
            for (acc, x) in pooled[class].iter_mut().zip(row) {
                *acc += x;
            }
        }
    }
    pooled
        .into_iter()
        .map(|row| normalized(&row).unwrap_or_else(|| vec![0.0; c]))
        .collect()
}

fn normalized(counts: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = counts.iter().sum();
    (total > 0.0).then(|| counts.iter().map(|x| x / total).collect())
}

fn kl_term(p: &[f64], q: &[f64], eps: f64) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pc, &qc)| ((pc + eps).ln() - (qc + eps).ln()) * (pc + eps))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use proptest::prelude::*;

    const EPS: f64 = 1e-10;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges.iter().map(|&(a, b)| Edge::new(a, b)).collect(), false).unwrap()
    }

    fn cfg() -> ProfileConfig {
        ProfileConfig::default()
    }

    #[test]
    fn path_of_four_matches_hand_evaluation() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let l = LabelSet::single(2, vec![0, 0, 1, 1]).unwrap();
        let s = ncd(&g, &l, &cfg()).unwrap();

        // P_0=(1,0) P_1=(.5,.5) P_2=(.5,.5) P_3=(0,1); Q_0=(2/3,1/3) Q_1=(1/3,2/3)
        let term = |p: f64, q: f64| ((p + EPS).ln() - (q + EPS).ln()) * (p + EPS);
        let expected = [
            term(1.0, 2.0 / 3.0) + term(0.0, 1.0 / 3.0),
            term(0.5, 2.0 / 3.0) + term(0.5, 1.0 / 3.0),
            term(0.5, 1.0 / 3.0) + term(0.5, 2.0 / 3.0),
            term(0.0, 1.0 / 3.0) + term(1.0, 2.0 / 3.0),
        ];
        for (a, b) in s.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // Sanity on magnitude: node 0 is ln(3/2) plus a vanishing term.
        assert!((s.values[0] - 1.5f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn identical_class_histograms_score_zero() {
        // Complete bipartite K_{3,3}: every node sees only the other class.
        let mut edges = Vec::new();
        for a in 0..3 {
            for b in 3..6 {
                edges.push((a, b));
            }
        }
        let g = graph(6, &edges);
        let l = LabelSet::single(2, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let s = ncd(&g, &l, &cfg()).unwrap();
        let bound = 10.0 * 2.0 * EPS * EPS.ln().abs();
        assert!(s.values.iter().all(|v| v.abs() <= bound.min(1e-7)));
    }

    #[test]
    fn isolated_node_is_flagged() {
        let g = graph(3, &[(0, 1)]);
        let l = LabelSet::single(2, vec![0, 1, 0]).unwrap();
        let s = ncd(&g, &l, &cfg()).unwrap();
        assert_eq!(s.values[2], 0.0);
        assert_eq!(s.flags[2], ProfileFlags::ISOLATED_NODE);
        assert!(s.flags[0].is_empty());
    }

    #[test]
    fn wrong_mode_inputs_are_reported() {
        let g = graph(2, &[(0, 1)]);
        let multi = LabelSet::multi(2, vec![vec![0], vec![1]]).unwrap();
        let single = LabelSet::single(2, vec![0, 1]).unwrap();
        assert!(ncd(&g, &multi, &cfg()).is_err());
        assert!(ncd_multilabel(&g, &single, &cfg()).is_err());
    }

    #[test]
    fn single_element_sets_reduce_to_single_label_scores() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]);
        let y = vec![0, 1, 1, 2, 0];
        let single = ncd(&g, &LabelSet::single(3, y.clone()).unwrap(), &cfg()).unwrap();
        let sets = y.iter().map(|&c| vec![c]).collect();
        let multi = ncd_multilabel(&g, &LabelSet::multi(3, sets).unwrap(), &cfg()).unwrap();
        assert_eq!(single.values, multi.values);
    }

    /// Dense re-evaluation of the multi-label formula on a 5-node multigraph.
    #[test]
    fn five_node_multilabel_toy() {
        let edges = [(0, 1), (0, 1), (1, 2), (2, 3), (3, 4), (4, 1)];
        let sets = vec![vec![0, 1], vec![1], vec![0, 2], vec![2], vec![1, 2]];
        let g = graph(5, &edges);
        let labels = LabelSet::multi(3, sets.clone()).unwrap();
        let s = ncd_multilabel(&g, &labels, &cfg()).unwrap();

        let mut adj = [[0.0f64; 5]; 5];
        for &(a, b) in &edges {
            adj[a][b] += 1.0;
            adj[b][a] += 1.0;
        }
        let mut ind = [[0.0f64; 3]; 5];
        for (v, set) in sets.iter().enumerate() {
            for &c in set {
                ind[v][c] = 1.0;
            }
        }
        // raw[v][c] = sum_u adj[v][u] * ind[u][c]
        let mut raw = [[0.0f64; 3]; 5];
        for v in 0..5 {
            for u in 0..5 {
                for c in 0..3 {
                    raw[v][c] += adj[v][u] * ind[u][c];
                }
            }
        }
        let norm = |r: [f64; 3]| {
            let t: f64 = r.iter().sum();
            [r[0] / t, r[1] / t, r[2] / t]
        };
        let mut q = [[0.0f64; 3]; 3];
        for y in 0..3 {
            let mut acc = [0.0; 3];
            for v in 0..5 {
                if ind[v][y] == 1.0 {
                    for c in 0..3 {
                        acc[c] += raw[v][c];
                    }
                }
            }
            q[y] = norm(acc);
        }
        for v in 0..5 {
            let p = norm(raw[v]);
            let mut total = 0.0;
            for &y in &sets[v] {
                for c in 0..3 {
                    total += ((p[c] + EPS).ln() - (q[y][c] + EPS).ln()) * (p[c] + EPS);
                }
            }
            let expected = total / sets[v].len() as f64;
            assert!((s.values[v] - expected).abs() < 1e-12, "node {v}");
        }
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
        (2usize..25).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0..n, 0..n), 0..60),
                prop::collection::vec(0usize..3, n),
            )
        })
    }

    proptest! {
        #[test]
        fn permutation_equivariant((n, edges, y) in random_graph(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));

            let base = ncd(&graph(n, &edges), &LabelSet::single(3, y.clone()).unwrap(), &cfg()).unwrap();
            let moved_edges: Vec<_> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
            let mut moved_y = vec![0; n];
            for v in 0..n {
                moved_y[perm[v]] = y[v];
            }
            let moved = ncd(&graph(n, &moved_edges), &LabelSet::single(3, moved_y).unwrap(), &cfg()).unwrap();
            for v in 0..n {
                prop_assert!((base.values[v] - moved.values[perm[v]]).abs() <= 1e-12);
                prop_assert_eq!(base.flags[v], moved.flags[perm[v]]);
            }
        }
    }
}
