//! JSON interchange document for a graph plus its splits.
//!
//! ```json
//! {"config": {"user_dim": 32, "item_dim": 32},
//!  "nodes": [{"kind": "source", "index": 0, "features": [..], "label": "low"}, ..],
//!  "edges": [["user", 3, "article", 7, "propagates"], ..],
//!  "splits": {"source": ["Train", ..], "article": [..], "user": [..]}}
//! ```
//!
//! Nodes are listed by kind (source, article, user) then index; edges in
//! insertion order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    FactualityLabel, FeatureDims, GraphError, InfoGraph, NodeId, NodeKind, NodeMetadata, Relation,
    SplitSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFileConfig {
    pub user_dim: usize,
    pub item_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeEntry {
    kind: NodeKind,
    index: usize,
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<FactualityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    follower_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<NodeMetadata>,
}

type EdgeEntry = (NodeKind, usize, NodeKind, usize, Relation);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub config: GraphFileConfig,
    nodes: Vec<NodeEntry>,
    edges: Vec<EdgeEntry>,
    pub splits: SplitSpec,
}

impl GraphDocument {
    pub fn from_graph(g: &InfoGraph, splits: &SplitSpec) -> Self {
        let dims = g.dims();
        let nodes = g
            .all_nodes()
            .map(|n| NodeEntry {
                kind: n.kind,
                index: n.index,
                features: g.features(n).expect("listed node exists").to_vec(),
                label: g.label(n),
                follower_count: (n.kind == NodeKind::User)
                    .then(|| g.follower_counts.get(&n.index).copied())
                    .flatten(),
                metadata: g.metadata(n).cloned(),
            })
            .collect();
        let edges = g
            .edges()
            .iter()
            .map(|e| (e.src.kind, e.src.index, e.dst.kind, e.dst.index, e.rel))
            .collect();
        Self {
            config: GraphFileConfig {
                user_dim: dims.user,
                item_dim: dims.item,
            },
            nodes,
            edges,
            splits: splits.clone(),
        }
    }

    pub fn into_graph(self) -> Result<(InfoGraph, SplitSpec), GraphError> {
        let mut g = InfoGraph::new(FeatureDims {
            user: self.config.user_dim,
            item: self.config.item_dim,
        });
        for kind in NodeKind::ALL {
            let mut entries: Vec<&NodeEntry> =
                self.nodes.iter().filter(|n| n.kind == kind).collect();
            entries.sort_by_key(|n| n.index);
            for (expect, entry) in entries.into_iter().enumerate() {
                if entry.index != expect {
                    return Err(GraphError::Format(format!(
                        "{kind} indices must be dense, missing {expect}"
                    )));
                }
                let id = g.add_node(kind, entry.features.clone())?;
                if let Some(label) = entry.label {
                    g.set_label(id, label)?;
                }
                if let Some(fc) = entry.follower_count {
                    g.set_follower_count(id, fc)?;
                }
                if let Some(meta) = &entry.metadata {
                    g.set_metadata(id, meta.clone())?;
                }
            }
        }
        for &(sk, si, dk, di, rel) in &self.edges {
            g.add_edge(NodeId::new(sk, si), NodeId::new(dk, di), rel)?;
        }
        g.check_integrity()?;
        Ok((g, self.splits))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        serde_json::from_str(s).map_err(|e| GraphError::Format(e.to_string()))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.flush()
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, GraphError> {
        let mut s = String::new();
        r.read_to_string(&mut s)
            .map_err(|e| GraphError::Format(e.to_string()))?;
        Self::from_json(&s)
    }
}

impl InfoGraph {
    pub fn save(&self, splits: &SplitSpec, path: impl AsRef<Path>) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        GraphDocument::from_graph(self, splits).write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(InfoGraph, SplitSpec), GraphError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| GraphError::Format(format!("{}: {e}", path.as_ref().display())))?;
        GraphDocument::read_from(std::io::BufReader::new(file))?.into_graph()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Partition;
    use proptest::prelude::*;

    fn arbitrary_graph(
        sources: usize,
        users: usize,
        edge_seeds: Vec<(usize, usize, u8)>,
        feats: Vec<f64>,
    ) -> (InfoGraph, SplitSpec) {
        let mut g = InfoGraph::new(FeatureDims { user: 2, item: 3 });
        let mut s = SplitSpec::default();
        let mut f = feats.into_iter().cycle();
        for i in 0..sources {
            let feat: Vec<f64> = (0..3).map(|_| f.next().unwrap()).collect();
            let id = g
                .add_source(feat, FactualityLabel::from_index(i % 3).unwrap())
                .unwrap();
            s.assign(id, Partition::Train);
            let a = g.add_node(NodeKind::Article, vec![0.5; 3]).unwrap();
            g.add_edge(id, a, Relation::Publishes).unwrap();
            s.assign(a, Partition::Train);
        }
        for i in 0..users {
            let feat: Vec<f64> = (0..2).map(|_| f.next().unwrap()).collect();
            let u = g.add_node(NodeKind::User, feat).unwrap();
            g.set_follower_count(u, i as u64 * 700).unwrap();
            if i == 0 {
                g.set_metadata(u, NodeMetadata::default().with("bio", "hello \"world\""))
                    .unwrap();
            }
            s.assign(u, Partition::Train);
        }
        for (a, b, r) in edge_seeds {
            let ua = NodeId::user(a % users);
            let ub = NodeId::user(b % users);
            let res = match r % 4 {
                0 => g.add_edge(ua, ub, Relation::FollowsUser),
                1 => g.add_edge(ua, NodeId::source(b % sources), Relation::FollowsSource),
                2 => g.add_edge(ua, NodeId::article(b % sources), Relation::Propagates),
                _ => g.add_edge(ua, ub, Relation::InteractUU),
            };
            // self loops are rejected; that is fine for this generator
            let _ = res;
        }
        (g, s)
    }

    proptest! {
        #[test]
        fn document_round_trip(
            sources in 1usize..5,
            users in 1usize..6,
            edges in proptest::collection::vec((0usize..10, 0usize..10, 0u8..4), 0..20),
            feats in proptest::collection::vec(-1e3f64..1e3, 1..8),
        ) {
            let (g, s) = arbitrary_graph(sources, users, edges, feats);
            let json = GraphDocument::from_graph(&g, &s).to_json();
            let (g2, s2) = GraphDocument::from_json(&json).unwrap().into_graph().unwrap();
            prop_assert_eq!(&g, &g2);
            prop_assert_eq!(&s, &s2);
            // serialization is a pure function of the graph
            prop_assert_eq!(json, GraphDocument::from_graph(&g2, &s2).to_json());
        }
    }

    #[test]
    fn edges_are_flat_arrays() {
        let (g, s) = arbitrary_graph(1, 2, vec![(0, 1, 0)], vec![1.0]);
        let v: serde_json::Value =
            serde_json::from_str(&GraphDocument::from_graph(&g, &s).to_json()).unwrap();
        assert_eq!(v["edges"][0], serde_json::json!(["source", 0, "article", 0, "publishes"]));
        assert_eq!(v["edges"][1], serde_json::json!(["user", 0, "user", 1, "follows_user"]));
        assert_eq!(v["nodes"][0]["label"], "low");
    }

    #[test]
    fn rejects_bad_edges() {
        let (g, s) = arbitrary_graph(1, 2, vec![], vec![1.0]);
        let mut v: serde_json::Value =
            serde_json::from_str(&GraphDocument::from_graph(&g, &s).to_json()).unwrap();
        v["edges"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!(["source", 0, "user", 1, "propagates"]));
        let doc: GraphDocument = serde_json::from_value(v).unwrap();
        assert!(matches!(doc.into_graph(), Err(GraphError::KindMismatch { .. })));
    }
}
