//! Relational GCN encoder and source-factuality classifier.
//!
//! Layer update, per node `i`:
//!
//! ```text
//! h_i' = act( W_self · h_i + Σ_r Σ_{j ∈ N_i^r} (1 / |N_i^r|) · W_r · h_j )
//! ```
//!
//! with ReLU between layers and no activation after the last one. Every
//! stored edge feeds messages both ways, each direction on its own
//! channel. Node features are first projected to the hidden width by a
//! per-kind input matrix.

mod checkpoint;
mod config;
mod fragment;
mod gradcheck;
mod model;
mod train;

pub use checkpoint::CHECKPOINT_FORMAT;
pub use config::RgcnConfig;
pub use fragment::{Fragment, MessageRelation, RelationPlan};
pub use gradcheck::{gradient_check, relative_error, GradCheck};
pub use model::RgcnModel;
pub use train::{train, train_on_split, TrainReport, TrainRequest};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{FactualityLabel, FeatureDims, GraphError, NodeId};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum RgcnError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("no labelled training sources")]
    EmptyTrainSet,
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("fragment has no nodes")]
    EmptyFragment,
    #[error("{0} is outside the encoded fragment")]
    NotInFragment(NodeId),
    #[error("{0} is not a source node")]
    NotASource(NodeId),
    #[error("model expects feature dims {model:?}, graph has {graph:?}")]
    DimMismatch {
        model: FeatureDims,
        graph: FeatureDims,
    },
    #[error("training graph violates inductive separation ({0} crossing edges)")]
    SplitViolation(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Final-layer embedding per node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbeddings(pub BTreeMap<NodeId, Vec<f64>>);

impl NodeEmbeddings {
    pub fn get(&self, n: NodeId) -> Option<&[f64]> {
        self.0.get(&n).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &[f64])> {
        self.0.iter().map(|(n, v)| (*n, v.as_slice()))
    }

    pub fn scaled(&self, c: f64) -> NodeEmbeddings {
        NodeEmbeddings(
            self.0
                .iter()
                .map(|(n, v)| (*n, v.iter().map(|x| x * c).collect()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePrediction {
    pub probs: [f64; 3],
    pub label: FactualityLabel,
}

impl SourcePrediction {
    /// Argmax with ties going to the lower label.
    pub fn from_probs(probs: [f64; 3]) -> Self {
        let mut best = 0;
        for i in 1..3 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Self {
            probs,
            label: FactualityLabel::from_index(best).expect("three classes"),
        }
    }

    /// Probability of the predicted class.
    pub fn confidence(&self) -> f64 {
        self.probs[self.label.index()]
    }
}

pub type Predictions = BTreeMap<NodeId, SourcePrediction>;
