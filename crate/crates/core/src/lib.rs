//! Node difficulty profiling for labeled graphs.
//!
//! Data-centric scores ([`profile`]) describe how atypical a node's features
//! and neighborhood are for its class. Model-centric profiles
//! ([`uncertainty`]) summarize how a model's true-class probability evolves
//! over training checkpoints and sort nodes into easy, ambiguous and hard.
//! [`inductive`] extends the categorization to unseen nodes, [`train`]
//! provides small reference models that emit checkpoint traces, and
//! [`synth`] generates controllable fixtures.

pub mod binfmt;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod features;
pub mod graph;
pub mod inductive;
pub mod labels;
pub mod profile;
pub mod report;
pub mod split;
pub mod synth;
pub mod train;
pub mod uncertainty;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use graph::{Graph, NeighborhoodMode, NodeId};
pub use labels::LabelSet;
pub use split::{SplitMask, SplitMode};
