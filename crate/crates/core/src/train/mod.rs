//! Reference trainers that emit checkpoint traces and embeddings.
//!
//! Training is full-batch gradient descent with a fixed step on the mean
//! cross-entropy of the train-role nodes. Validation loss drives early
//! stopping. After the run, `num_checkpoints` snapshots are taken at uniform
//! epoch increments over the realized training length and every node is
//! evaluated at each of them.

mod curves;
pub mod model;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::embedding::{EmbeddingMatrix, EmbeddingMeta};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::{Graph, NeighborhoodMode, NodeId};
use crate::split::{Role, SplitMask, SplitMode};
use crate::uncertainty::{PredictionTrace, TraceMeta};

pub use curves::{per_category_curves, write_curves_csv, CategoryCurves};
pub use model::{ModelKind, Params};

pub const DEFAULT_PATIENCE: usize = 100;
pub const DEFAULT_CHECKPOINTS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub num_checkpoints: usize,
    pub seed: u64,
    pub split_mode: SplitMode,
    pub neighborhood: NeighborhoodMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::MeanAgg,
            hidden_dim: 64,
            num_layers: 2,
            learning_rate: 0.01,
            max_epochs: 1000,
            patience: DEFAULT_PATIENCE,
            num_checkpoints: DEFAULT_CHECKPOINTS,
            seed: 0,
            split_mode: SplitMode::Partial {
                train_frac: 0.6,
                val_frac: 0.2,
            },
            neighborhood: NeighborhoodMode::Out,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if self.num_layers > 1 && self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.num_checkpoints == 0 || self.num_checkpoints > self.max_epochs {
            return Err(Error::Config(format!(
                "num_checkpoints must be in [1, max_epochs={}], got {}",
                self.max_epochs, self.num_checkpoints
            )));
        }
        Ok(())
    }

    fn layer_dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden_dim, self.num_layers - 1));
        dims.push(classes);
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub trace: PredictionTrace,
    pub embeddings: EmbeddingMatrix,
    pub losses: Vec<CheckpointLoss>,
    /// Parameters at each saved checkpoint, oldest first.
    pub checkpoints: Vec<Params>,
    pub realized_epochs: usize,
}

impl TrainOutput {
    pub fn final_params(&self) -> &Params {
        self.checkpoints.last().expect("at least one checkpoint")
    }
}

/// `count` epochs in `1..=realized` with uniform spacing, ending at `realized`.
pub fn checkpoint_epochs(realized: usize, count: usize) -> Vec<usize> {
    let count = count.min(realized).max(1);
    (1..=count).map(|i| i * realized / count).collect()
}

pub(crate) fn feature_array(features: &FeatureMatrix) -> Array2<f64> {
    Array2::from_shape_vec((features.num_nodes(), features.dim()), features.values().to_vec())
        .expect("feature matrix shape is consistent")
}

pub fn train(dataset: &LabeledDataset, split: &SplitMask, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let labels = dataset.labels.require_single("training")?;
    if split.len() != dataset.num_nodes() {
        return Err(Error::Invalid(format!(
            "split covers {} nodes, dataset has {}",
            split.len(),
            dataset.num_nodes()
        )));
    }
    let train_nodes = split.nodes_with(Role::Train);
    let val_nodes = split.nodes_with(Role::Validation);
    if train_nodes.is_empty() {
        return Err(Error::Invalid("split has no training nodes".into()));
    }
    let graph = &dataset.graph;
    let x = feature_array(&dataset.features);
    let dims = config.layer_dims(dataset.features.dim(), dataset.labels.num_classes());
    let mut params = Params::init(config.model, config.neighborhood, &dims, config.seed);

    // history[t - 1] holds the parameters after t updates.
    let mut history: Vec<(Params, f64, f64)> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    for epoch in 0..=config.max_epochs {
        let fwd = model::forward(&params, graph, x.view());
        let train_loss = model::cross_entropy(&fwd.probs, labels, &train_nodes);
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: train_loss,
            });
        }
        if epoch > 0 {
            let val_loss = if val_nodes.is_empty() {
                train_loss
            } else {
                model::cross_entropy(&fwd.probs, labels, &val_nodes)
            };
            history.push((params.clone(), train_loss, val_loss));
            if val_loss < best_val {
                best_val = val_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    log::debug!("early stopping at epoch {epoch}");
                    break;
                }
            }
        }
        if epoch == config.max_epochs {
            break;
        }
        let grad = model::backward(&params, graph, &fwd, labels, &train_nodes);
        params.descend(&grad, config.learning_rate);
    }

    let realized = history.len();
    let epochs = checkpoint_epochs(realized, config.num_checkpoints);
    let mut checkpoints = Vec::with_capacity(epochs.len());
    let mut losses = Vec::with_capacity(epochs.len());
    for &e in &epochs {
        let (p, train_loss, val_loss) = &history[e - 1];
        checkpoints.push(p.clone());
        losses.push(CheckpointLoss {
            epoch: e,
            train_loss: *train_loss,
            val_loss: *val_loss,
        });
    }
    drop(history);

    let mut notes = BTreeMap::new();
    notes.insert("realized_epochs".into(), serde_json::json!(realized));
    notes.insert("hidden_dim".into(), serde_json::json!(config.hidden_dim));
    notes.insert("num_layers".into(), serde_json::json!(config.num_layers));
    notes.insert("learning_rate".into(), serde_json::json!(config.learning_rate));
    notes.insert("split".into(), serde_json::json!(config.split_mode.to_string()));
    let meta = TraceMeta {
        checkpoint_epochs: epochs.iter().map(|&e| e as u64).collect(),
        model: config.model.to_string(),
        seed: config.seed,
        notes,
    };
    let (trace, embeddings) = evaluate_checkpoints(&checkpoints, graph, &dataset.features, meta)?;
    Ok(TrainOutput {
        trace,
        embeddings,
        losses,
        checkpoints,
        realized_epochs: realized,
    })
}

/// Runs every checkpoint over `graph`/`features` (which may be an augmented
/// graph containing nodes unseen during training). Embeddings come from the
/// last checkpoint.
pub fn evaluate_checkpoints(
    checkpoints: &[Params],
    graph: &Graph,
    features: &FeatureMatrix,
    meta: TraceMeta,
) -> Result<(PredictionTrace, EmbeddingMatrix)> {
    if graph.num_nodes() != features.num_nodes() {
        return Err(Error::Invalid(format!(
            "graph has {} nodes, features have {} rows",
            graph.num_nodes(),
            features.num_nodes()
        )));
    }
    let last = checkpoints
        .last()
        .ok_or_else(|| Error::Invalid("no checkpoints to evaluate".into()))?;
    let x = feature_array(features);
    let classes = last.layers.last().unwrap().bias.len();
    let mut probs = Vec::with_capacity(checkpoints.len() * graph.num_nodes() * classes);
    let mut embedding = None;
    for (i, p) in checkpoints.iter().enumerate() {
        let fwd = model::forward(p, graph, x.view());
        probs.extend(fwd.probs.iter().map(|&v| v as f32));
        if i + 1 == checkpoints.len() {
            embedding = Some(fwd.penultimate().clone());
        }
    }
    let emb_meta = EmbeddingMeta {
        source_checkpoint: checkpoints.len() - 1,
        model: meta.model.clone(),
        seed: meta.seed,
        layer: Some("penultimate".into()),
    };
    let trace = PredictionTrace::new(checkpoints.len(), graph.num_nodes(), classes, probs, meta)?;
    let emb = embedding.unwrap();
    let (n, d) = emb.dim();
    let embeddings = EmbeddingMatrix::new(n, d, emb.iter().map(|&v| v as f32).collect(), emb_meta)?;
    Ok((trace, embeddings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutput {
    pub embedding: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Nodes within `hops` aggregation steps of `target`, target first, in BFS order.
pub fn ego_nodes(graph: &Graph, mode: NeighborhoodMode, target: NodeId, hops: usize) -> Vec<NodeId> {
    let mut seen = vec![false; graph.num_nodes()];
    seen[target] = true;
    let mut order = vec![target];
    let mut frontier = vec![target];
    for _ in 0..hops {
        let mut next = Vec::new();
        for &v in &frontier {
            for u in graph.neighbors(v, mode).iter() {
                if !seen[u] {
                    seen[u] = true;
                    order.push(u);
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    order
}

/// Forward pass for one node using only its L-hop ego network.
pub fn forward_subgraph(
    params: &Params,
    graph: &Graph,
    features: &FeatureMatrix,
    target: NodeId,
) -> Result<NodeOutput> {
    if target >= graph.num_nodes() || target >= features.num_nodes() {
        return Err(Error::Invalid(format!(
            "target node {target} is outside the graph ({} nodes)",
            graph.num_nodes()
        )));
    }
    let hops = match params.kind {
        ModelKind::Mlp => 0,
        ModelKind::MeanAgg => params.num_layers(),
    };
    let nodes = ego_nodes(graph, params.neighborhood, target, hops);
    let sub = graph.induced_subgraph(&nodes);
    let x = feature_array(&features.select_rows(&nodes));
    let fwd = model::forward(params, &sub, x.view());
    Ok(NodeOutput {
        embedding: fwd.penultimate().row(0).to_vec(),
        probs: fwd.probs.row(0).to_vec(),
    })
}

/// Full-graph forward pass; rows are nodes.
pub fn forward_full(params: &Params, graph: &Graph, features: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let fwd = model::forward(params, graph, features);
    let emb = fwd.penultimate().clone();
    (emb, fwd.probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::labels::LabelSet;
    use crate::split::make_split;

    fn separable(n: usize) -> LabeledDataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![s * (1.0 + (i % 5) as f64 / 5.0), (i % 7) as f64 / 7.0 - 0.5]
            })
            .collect();
        let y = (0..n).map(|i| i % 2).collect();
        LabeledDataset::new(
            Graph::edgeless(n),
            FeatureMatrix::from_rows(&rows).unwrap(),
            LabelSet::single(2, y).unwrap(),
        )
        .unwrap()
    }

    fn quick(model: ModelKind) -> TrainConfig {
        TrainConfig {
            model,
            hidden_dim: 8,
            learning_rate: 0.5,
            max_epochs: 200,
            num_checkpoints: 20,
            split_mode: SplitMode::Full,
            ..Default::default()
        }
    }

    #[test]
    fn checkpoint_epochs_are_uniform() {
        for (t, e) in [(1000, 80), (80, 80), (233, 80), (10, 80), (7, 3)] {
            let ep = checkpoint_epochs(t, e);
            assert_eq!(ep.len(), e.min(t));
            assert_eq!(*ep.last().unwrap(), t);
            assert!(ep.windows(2).all(|w| w[0] < w[1]));
            let gaps: Vec<usize> = std::iter::once(ep[0]).chain(ep.windows(2).map(|w| w[1] - w[0])).collect();
            assert!(gaps.iter().max().unwrap() - gaps.iter().min().unwrap() <= 1, "{t} {e}");
        }
    }

    #[test]
    fn separable_data_is_fit() {
        let ds = separable(60);
        let out = train(&ds, &SplitMask::full(60), &quick(ModelKind::Mlp)).unwrap();
        let last = out.trace.num_checkpoints() - 1;
        let y = ds.labels.require_single("t").unwrap();
        let correct = (0..60)
            .filter(|&v| {
                let r = out.trace.row(last, v);
                (r[1] > r[0]) as usize == y[v]
            })
            .count();
        assert_eq!(correct, 60);
        assert_eq!(out.trace.num_checkpoints(), 20);
        assert_eq!(out.embeddings.meta().source_checkpoint, 19);
        assert_eq!(out.embeddings.dim(), 8);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = separable(40);
        let split = make_split(40, TrainConfig::default().split_mode, 1).unwrap();
        let cfg = quick(ModelKind::MeanAgg);
        let a = train(&ds, &split, &cfg).unwrap();
        let b = train(&ds, &split, &cfg).unwrap();
        assert_eq!(a.trace.to_nptr(), b.trace.to_nptr());
        assert_eq!(a.embeddings.to_npem(), b.embeddings.to_npem());
    }

    #[test]
    fn early_stopping_respaces_checkpoints() {
        let mut ds = separable(40);
        // Labels unrelated to features: validation loss stops improving quickly.
        ds.labels = LabelSet::single(2, (0..40).map(|i| (i * i / 3 + i / 5) % 2).collect()).unwrap();
        let split = make_split(40, TrainConfig::default().split_mode, 2).unwrap();
        let cfg = TrainConfig {
            patience: 1,
            learning_rate: 5.0,
            max_epochs: 500,
            num_checkpoints: 80,
            ..quick(ModelKind::Mlp)
        };
        let out = train(&ds, &split, &cfg).unwrap();
        assert!(out.realized_epochs < 500);
        let epochs = &out.trace.meta().checkpoint_epochs;
        assert_eq!(epochs.len(), out.realized_epochs.min(80));
        assert_eq!(*epochs.last().unwrap() as usize, out.realized_epochs);
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1e150 * (i as f64 - 4.5)]).collect();
        let ds = LabeledDataset::new(
            Graph::edgeless(10),
            FeatureMatrix::from_rows(&rows).unwrap(),
            LabelSet::single(2, (0..10).map(|i| i % 2).collect()).unwrap(),
        )
        .unwrap();
        let cfg = TrainConfig { learning_rate: 1e10, ..quick(ModelKind::Mlp) };
        match train(&ds, &SplitMask::full(10), &cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig { num_checkpoints: 81, max_epochs: 80, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(TrainConfig { patience: 0, ..Default::default() }.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }

    fn random_graph(n: usize, edges: usize, seed: u64) -> Graph {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let list = (0..edges)
            .map(|_| Edge::new(rng.random_range(0..n), rng.random_range(0..n)))
            .collect();
        Graph::from_edges(n, list, false).unwrap()
    }

    fn random_features(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn subgraph_forward_matches_full_graph() {
        let g = random_graph(30, 45, 5);
        let f = random_features(30, 4, 6);
        let params = Params::init(ModelKind::MeanAgg, NeighborhoodMode::Out, &[4, 6, 6, 3], 2);
        let (emb, probs) = forward_full(&params, &g, feature_array(&f).view());
        for target in [0, 3, 7, 11, 14, 18, 21, 25, 28, 29] {
            let out = forward_subgraph(&params, &g, &f, target).unwrap();
            for (a, b) in out.embedding.iter().zip(emb.row(target)) {
                assert!((a - b).abs() <= 1e-6);
            }
            for (a, b) in out.probs.iter().zip(probs.row(target)) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
        assert!(forward_subgraph(&params, &g, &f, 30).is_err());
    }

    #[test]
    fn isolated_node_uses_self_path_only() {
        let g = Graph::from_edges(3, vec![Edge::new(0, 1)], false).unwrap();
        let f = random_features(3, 4, 1);
        let params = Params::init(ModelKind::MeanAgg, NeighborhoodMode::Out, &[4, 5, 2], 3);
        let out = forward_subgraph(&params, &g, &f, 2).unwrap();
        let l0 = &params.layers[0];
        let x = ndarray::Array1::from(f.row(2).to_vec());
        let expected = (x.dot(&l0.w_self) + &l0.bias).mapv(|v| v.max(0.0));
        for (a, b) in out.embedding.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_node_shares_embedding() {
        // Node 4 copies node 1's features and edges.
        let edges = vec![Edge::new(0, 1), Edge::new(1, 2), Edge::new(2, 3), Edge::new(0, 4), Edge::new(4, 2)];
        let g = Graph::from_edges(5, edges, false).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.3 - 0.4, 0.5 - i as f64 * 0.2]).collect();
        rows.push(rows[1].clone());
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let params = Params::init(ModelKind::MeanAgg, NeighborhoodMode::Out, &[2, 4, 2], 8);
        let a = forward_subgraph(&params, &g, &f, 1).unwrap();
        let b = forward_subgraph(&params, &g, &f, 4).unwrap();
        for (x, y) in a.embedding.iter().zip(&b.embedding) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
}
