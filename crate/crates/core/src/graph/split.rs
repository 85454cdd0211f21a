use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Edge, GraphError, InfoGraph, NodeId, NodeKind};

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    Train,
    E1_1,
    E1_2,
    E2_1,
    E2_2,
}

impl Partition {
    pub const ALL: [Partition; 5] = [
        Partition::Train,
        Partition::E1_1,
        Partition::E1_2,
        Partition::E2_1,
        Partition::E2_2,
    ];

    /// Event the partition belongs to: 0 for training, 1 and 2 for the
    /// two held-out events. Halves of one event share an event id.
    pub fn event(self) -> u8 {
        match self {
            Partition::Train => 0,
            Partition::E1_1 | Partition::E1_2 => 1,
            Partition::E2_1 | Partition::E2_2 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "Train",
            Partition::E1_1 => "E1_1",
            Partition::E1_2 => "E1_2",
            Partition::E2_1 => "E2_1",
            Partition::E2_2 => "E2_2",
        }
    }

    /// Human-facing label as used in result tables, e.g. `E2-1`.
    pub fn display_name(self) -> &'static str {
        match self {
            Partition::Train => "Train",
            Partition::E1_1 => "E1-1",
            Partition::E1_2 => "E1-2",
            Partition::E2_1 => "E2-1",
            Partition::E2_2 => "E2-2",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Partition::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| GraphError::Format(format!("unknown partition {s:?}")))
    }
}

/// Partition assignment for every node of a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub source: Vec<Option<Partition>>,
    pub article: Vec<Option<Partition>>,
    pub user: Vec<Option<Partition>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitViolation {
    pub edge: Edge,
    pub src_partition: Partition,
    pub dst_partition: Partition,
}

impl SplitSpec {
    pub fn for_graph(g: &InfoGraph) -> Self {
        Self {
            source: vec![None; g.count(NodeKind::Source)],
            article: vec![None; g.count(NodeKind::Article)],
            user: vec![None; g.count(NodeKind::User)],
        }
    }

    fn slot(&self, kind: NodeKind) -> &Vec<Option<Partition>> {
        match kind {
            NodeKind::Source => &self.source,
            NodeKind::Article => &self.article,
            NodeKind::User => &self.user,
        }
    }

    fn slot_mut(&mut self, kind: NodeKind) -> &mut Vec<Option<Partition>> {
        match kind {
            NodeKind::Source => &mut self.source,
            NodeKind::Article => &mut self.article,
            NodeKind::User => &mut self.user,
        }
    }

    pub fn assign(&mut self, n: NodeId, p: Partition) {
        let slot = self.slot_mut(n.kind);
        if slot.len() <= n.index {
            slot.resize(n.index + 1, None);
        }
        slot[n.index] = Some(p);
    }

    pub fn get(&self, n: NodeId) -> Option<Partition> {
        self.slot(n.kind).get(n.index).copied().flatten()
    }

    pub fn require(&self, n: NodeId) -> Result<Partition, GraphError> {
        self.get(n).ok_or(GraphError::UnassignedNode(n))
    }

    /// Nodes of `kind` in partition `p`, in index order.
    pub fn members(&self, kind: NodeKind, p: Partition) -> Vec<NodeId> {
        self.slot(kind)
            .iter()
            .enumerate()
            .filter(|(_, q)| **q == Some(p))
            .map(|(i, _)| NodeId::new(kind, i))
            .collect()
    }

    /// Nodes of `kind` whose partition belongs to `event`.
    pub fn event_members(&self, kind: NodeKind, event: u8) -> Vec<NodeId> {
        self.slot(kind)
            .iter()
            .enumerate()
            .filter(|(_, q)| q.is_some_and(|p| p.event() == event))
            .map(|(i, _)| NodeId::new(kind, i))
            .collect()
    }

    /// Lists every edge that crosses events. Halves of the same event may
    /// connect; training nodes may only connect to training nodes.
    pub fn validate(&self, g: &InfoGraph) -> Result<Vec<SplitViolation>, GraphError> {
        for n in g.all_nodes() {
            self.require(n)?;
        }
        let mut out = Vec::new();
        for e in g.edges() {
            let a = self.require(e.src)?;
            let b = self.require(e.dst)?;
            if a.event() != b.event() {
                out.push(SplitViolation {
                    edge: *e,
                    src_partition: a,
                    dst_partition: b,
                });
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`SplitSpec::validate`].
pub fn validate_splits(g: &InfoGraph, s: &SplitSpec) -> Result<Vec<SplitViolation>, GraphError> {
    s.validate(g)
}
