//! Interactive graph learning for news-source factuality.
//!
//! Sources, articles and users form a heterogeneous graph. A relational
//! GCN classifies sources; user pairs the model is confused about are
//! turned into small sub-graphs for (human or simulated) interactors, and
//! the edges they draw are folded back into the event graph.

pub mod datagen;
pub mod experiment;
pub mod graph;
pub mod interaction;
pub mod kmeans;
pub mod metrics;
pub mod numerics;
pub mod par;
pub mod rgcn;
pub mod sampler;
pub mod subgraph;
