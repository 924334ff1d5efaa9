use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{load_features, FeatureMatrix};
use crate::graph::{load_graph, Graph, LoadOptions};
use crate::labels::{load_labels, LabelSet};
use crate::split::SplitMask;

/// Graph, features and labels over one shared node set.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: LabelSet,
    pub split: Option<SplitMask>,
}

impl LabeledDataset {
    pub fn new(graph: Graph, features: FeatureMatrix, labels: LabelSet) -> Result<Self> {
        let n = graph.num_nodes();
        if features.num_nodes() != n {
            return Err(Error::Invalid(format!(
                "graph has {n} nodes but the feature matrix has {} rows",
                features.num_nodes()
            )));
        }
        if labels.len() != n {
            return Err(Error::Invalid(format!(
                "graph has {n} nodes but {} nodes are labeled",
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            graph,
            features,
            labels,
            split: None,
        })
    }

    pub fn with_split(mut self, split: SplitMask) -> Result<Self> {
        if split.len() != self.num_nodes() {
            return Err(Error::Invalid(format!(
                "split covers {} nodes, dataset has {}",
                split.len(),
                self.num_nodes()
            )));
        }
        self.split = Some(split);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    /// Loads the three files; the label file fixes the node count.
    pub fn load(
        edges: &Path,
        features: &Path,
        labels: &Path,
        num_classes: usize,
        directed: bool,
        symmetrize: bool,
    ) -> Result<Self> {
        let labels = load_labels(labels, num_classes)?;
        let graph = load_graph(
            edges,
            LoadOptions {
                num_nodes: Some(labels.len()),
                directed,
                symmetrize,
            },
        )?;
        let features = load_features(features)?;
        LabeledDataset::new(graph, features, labels)
    }

    /// Dataset restricted to `nodes` (new ids follow the slice order).
    pub fn subset(&self, nodes: &[usize]) -> LabeledDataset {
        LabeledDataset {
            graph: self.graph.induced_subgraph(nodes),
            features: self.features.select_rows(nodes),
            labels: self.labels.select(nodes),
            split: None,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.graph.save_edges(&dir.join("edges.tsv"))?;
        self.features.save_npfx(&dir.join("features.npfx"))?;
        self.labels.save(&dir.join("labels.tsv"))?;
        if let Some(split) = &self.split {
            split.save(&dir.join("split.txt"))?;
        }
        Ok(())
    }
}
