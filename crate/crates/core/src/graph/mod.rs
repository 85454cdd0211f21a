//! Heterogeneous information graph: sources, articles and users joined by
//! relation-typed edges, with per-node features and inductive splits.

mod format;
mod split;

pub use format::{GraphDocument, GraphFileConfig};
pub use split::{validate_splits, Partition, SplitSpec, SplitViolation};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("relation {rel} expects {expected_src}->{expected_dst}, got {src}->{dst}")]
    KindMismatch {
        rel: Relation,
        expected_src: NodeKind,
        expected_dst: NodeKind,
        src: NodeId,
        dst: NodeId,
    },
    #[error("self loop on {0} is not a valid edge")]
    SelfLoop(NodeId),
    #[error("node {0} has no partition assigned")]
    UnassignedNode(NodeId),
    #[error("feature vector for {node} has length {got}, expected {expected}")]
    FeatureDim {
        node: NodeId,
        got: usize,
        expected: usize,
    },
    #[error("source {0} has no gold label")]
    MissingLabel(NodeId),
    #[error("malformed graph document: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Article,
    User,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Source, NodeKind::Article, NodeKind::User];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Source => "source",
            NodeKind::Article => "article",
            NodeKind::User => "user",
        }
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(NodeKind::Source),
            "article" => Ok(NodeKind::Article),
            "user" => Ok(NodeKind::User),
            other => Err(GraphError::Format(format!("unknown node kind {other:?}"))),
        }
    }
}

/// Node handle: kind plus an index that is dense within the kind.
///
/// Ordering is by kind first, then index, which is the order every
/// neighbor listing uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub const fn new(kind: NodeKind, index: usize) -> Self {
        Self { kind, index }
    }

    pub const fn source(index: usize) -> Self {
        Self::new(NodeKind::Source, index)
    }

    pub const fn article(index: usize) -> Self {
        Self::new(NodeKind::Article, index)
    }

    pub const fn user(index: usize) -> Self {
        Self::new(NodeKind::User, index)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            NodeKind::Source => 's',
            NodeKind::Article => 'a',
            NodeKind::User => 'u',
        };
        write!(f, "{prefix}{}", self.index)
    }
}

impl FromStr for NodeId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::Format(format!("bad node id {s:?}"));
        let mut chars = s.chars();
        let kind = match chars.next().ok_or_else(bad)? {
            's' => NodeKind::Source,
            'a' => NodeKind::Article,
            'u' => NodeKind::User,
            _ => return Err(bad()),
        };
        let index = chars.as_str().parse().map_err(|_| bad())?;
        Ok(NodeId::new(kind, index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    /// source -> article
    Publishes,
    /// user -> source
    FollowsSource,
    /// user -> user
    FollowsUser,
    /// user -> article
    Propagates,
    InteractUU,
    InteractUA,
    InteractAA,
    InteractUS,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::Publishes,
        Relation::FollowsSource,
        Relation::FollowsUser,
        Relation::Propagates,
        Relation::InteractUU,
        Relation::InteractUA,
        Relation::InteractAA,
        Relation::InteractUS,
    ];

    pub const BASE: [Relation; 4] = [
        Relation::Publishes,
        Relation::FollowsSource,
        Relation::FollowsUser,
        Relation::Propagates,
    ];

    pub const INTERACT: [Relation; 4] = [
        Relation::InteractUU,
        Relation::InteractUA,
        Relation::InteractAA,
        Relation::InteractUS,
    ];

    /// Endpoint kinds `(src, dst)` this relation accepts.
    pub fn signature(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            Relation::Publishes => (Source, Article),
            Relation::FollowsSource => (User, Source),
            Relation::FollowsUser => (User, User),
            Relation::Propagates => (User, Article),
            Relation::InteractUU => (User, User),
            Relation::InteractUA => (User, Article),
            Relation::InteractAA => (Article, Article),
            Relation::InteractUS => (User, Source),
        }
    }

    pub fn is_interaction(self) -> bool {
        matches!(
            self,
            Relation::InteractUU | Relation::InteractUA | Relation::InteractAA | Relation::InteractUS
        )
    }

    /// Relations whose endpoints are interchangeable; stored with the
    /// lower node first.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Relation::InteractUU | Relation::InteractAA)
    }

    /// The interaction relation matching an unordered pair of endpoint kinds.
    pub fn interaction_for(a: NodeKind, b: NodeKind) -> Option<Relation> {
        use NodeKind::*;
        match (a, b) {
            (User, User) => Some(Relation::InteractUU),
            (User, Article) | (Article, User) => Some(Relation::InteractUA),
            (Article, Article) => Some(Relation::InteractAA),
            (User, Source) | (Source, User) => Some(Relation::InteractUS),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Publishes => "publishes",
            Relation::FollowsSource => "follows_source",
            Relation::FollowsUser => "follows_user",
            Relation::Propagates => "propagates",
            Relation::InteractUU => "interact_uu",
            Relation::InteractUA => "interact_ua",
            Relation::InteractAA => "interact_aa",
            Relation::InteractUS => "interact_us",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| GraphError::Format(format!("unknown relation {s:?}")))
    }
}

/// Three-point factuality scale. The derived order is used for all
/// deterministic tie-breaks (ties go to the lower label).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactualityLabel {
    Low = 0,
    Mixed = 1,
    High = 2,
}

impl FactualityLabel {
    pub const ALL: [FactualityLabel; 3] =
        [FactualityLabel::Low, FactualityLabel::Mixed, FactualityLabel::High];
    pub const COUNT: usize = 3;

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FactualityLabel::Low => "low",
            FactualityLabel::Mixed => "mixed",
            FactualityLabel::High => "high",
        }
    }

    /// Most frequent label in `counts`; ties resolve to the lower label.
    /// `None` when every count is zero.
    pub fn majority(counts: &[usize; 3]) -> Option<Self> {
        let mut best: Option<(usize, usize)> = None;
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
                best = Some((i, c));
            }
        }
        best.and_then(|(i, _)| Self::from_index(i))
    }
}

impl fmt::Display for FactualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Serializes through `Display` / `FromStr`.
macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(NodeId);
string_serde!(Relation);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub rel: Relation,
}

/// Display record shown to interactors. The learner never reads it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetadata {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

impl NodeMetadata {
    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub user: usize,
    pub item: usize,
}

impl Default for FeatureDims {
    fn default() -> Self {
        Self { user: 32, item: 32 }
    }
}

impl FeatureDims {
    pub fn for_kind(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::User => self.user,
            NodeKind::Source | NodeKind::Article => self.item,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct NodeRecord {
    features: Vec<f64>,
    metadata: Option<NodeMetadata>,
}

/// Which way an edge is traversed when listed from one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// The listing node is the edge's `src`.
    Outgoing,
    /// The listing node is the edge's `dst`.
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationFilter {
    All,
    Only(Relation),
}

impl From<Relation> for RelationFilter {
    fn from(r: Relation) -> Self {
        RelationFilter::Only(r)
    }
}

/// Outcome of [`InfoGraph::add_edge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeInsert {
    Added,
    Duplicate,
}

#[derive(Debug, Clone, Default)]
pub struct InfoGraph {
    dims: FeatureDims,
    nodes: [Vec<NodeRecord>; 3],
    edges: Vec<Edge>,
    edge_set: HashSet<Edge>,
    // per kind, per index: (edge position, direction)
    adjacency: [Vec<Vec<(usize, Direction)>>; 3],
    labels: BTreeMap<usize, FactualityLabel>,
    follower_counts: BTreeMap<usize, u64>,
}

impl PartialEq for InfoGraph {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.labels == other.labels
            && self.follower_counts == other.follower_counts
    }
}

impl InfoGraph {
    pub fn new(dims: FeatureDims) -> Self {
        Self {
            dims,
            ..Default::default()
        }
    }

    pub fn dims(&self) -> FeatureDims {
        self.dims
    }

    pub fn add_node(
        &mut self,
        kind: NodeKind,
        features: Vec<f64>,
    ) -> Result<NodeId, GraphError> {
        let index = self.nodes[kind.slot()].len();
        let id = NodeId::new(kind, index);
        let expected = self.dims.for_kind(kind);
        if features.len() != expected {
            return Err(GraphError::FeatureDim {
                node: id,
                got: features.len(),
                expected,
            });
        }
        self.nodes[kind.slot()].push(NodeRecord {
            features,
            metadata: None,
        });
        self.adjacency[kind.slot()].push(Vec::new());
        Ok(id)
    }

    pub fn add_source(
        &mut self,
        features: Vec<f64>,
        label: FactualityLabel,
    ) -> Result<NodeId, GraphError> {
        let id = self.add_node(NodeKind::Source, features)?;
        self.labels.insert(id.index, label);
        Ok(id)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes[kind.slot()].len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index < self.count(n.kind)
    }

    fn check(&self, n: NodeId) -> Result<(), GraphError> {
        if self.contains(n) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(n))
        }
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.count(kind)).map(move |i| NodeId::new(kind, i))
    }

    pub fn all_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        NodeKind::ALL.into_iter().flat_map(|k| self.nodes_of(k))
    }

    pub fn features(&self, n: NodeId) -> Result<&[f64], GraphError> {
        self.check(n)?;
        Ok(&self.nodes[n.kind.slot()][n.index].features)
    }

    pub fn metadata(&self, n: NodeId) -> Option<&NodeMetadata> {
        self.nodes
            .get(n.kind.slot())?
            .get(n.index)?
            .metadata
            .as_ref()
    }

    pub fn set_metadata(&mut self, n: NodeId, meta: NodeMetadata) -> Result<(), GraphError> {
        self.check(n)?;
        self.nodes[n.kind.slot()][n.index].metadata = Some(meta);
        Ok(())
    }

    pub fn label(&self, source: NodeId) -> Option<FactualityLabel> {
        if source.kind != NodeKind::Source {
            return None;
        }
        self.labels.get(&source.index).copied()
    }

    pub fn set_label(&mut self, source: NodeId, label: FactualityLabel) -> Result<(), GraphError> {
        self.check(source)?;
        if source.kind != NodeKind::Source {
            return Err(GraphError::Format(format!("{source} is not a source")));
        }
        self.labels.insert(source.index, label);
        Ok(())
    }

    pub fn follower_count(&self, user: NodeId) -> u64 {
        if user.kind != NodeKind::User {
            return 0;
        }
        self.follower_counts.get(&user.index).copied().unwrap_or(0)
    }

    pub fn set_follower_count(&mut self, user: NodeId, count: u64) -> Result<(), GraphError> {
        self.check(user)?;
        if user.kind != NodeKind::User {
            return Err(GraphError::Format(format!("{user} is not a user")));
        }
        self.follower_counts.insert(user.index, count);
        Ok(())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn interaction_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.rel.is_interaction()).count()
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, rel: Relation) -> bool {
        let (src, dst) = canonical(src, dst, rel);
        self.edge_set.contains(&Edge { src, dst, rel })
    }

    /// Inserts an edge. Symmetric relations are stored lower-node-first, so
    /// `(a, b)` and `(b, a)` are the same edge for them.
    pub fn add_edge(
        &mut self,
        src: NodeId,
        dst: NodeId,
        rel: Relation,
    ) -> Result<EdgeInsert, GraphError> {
        self.check(src)?;
        self.check(dst)?;
        let (want_src, want_dst) = rel.signature();
        let fits = (src.kind == want_src && dst.kind == want_dst)
            || (rel.is_symmetric() && src.kind == want_dst && dst.kind == want_src);
        if !fits {
            return Err(GraphError::KindMismatch {
                rel,
                expected_src: want_src,
                expected_dst: want_dst,
                src,
                dst,
            });
        }
        if src == dst {
            return Err(GraphError::SelfLoop(src));
        }
        let (src, dst) = canonical(src, dst, rel);
        let edge = Edge { src, dst, rel };
        if !self.edge_set.insert(edge) {
            return Ok(EdgeInsert::Duplicate);
        }
        let pos = self.edges.len();
        self.edges.push(edge);
        self.adjacency[src.kind.slot()][src.index].push((pos, Direction::Outgoing));
        self.adjacency[dst.kind.slot()][dst.index].push((pos, Direction::Incoming));
        Ok(EdgeInsert::Added)
    }

    /// Edges touching `n`, with the direction seen from `n`, in insertion order.
    pub fn incident(&self, n: NodeId) -> Result<impl Iterator<Item = (Edge, Direction)> + '_, GraphError> {
        self.check(n)?;
        Ok(self.adjacency[n.kind.slot()][n.index]
            .iter()
            .map(move |&(pos, dir)| (self.edges[pos], dir)))
    }

    /// Endpoints across `n`'s edges in either direction, sorted by kind
    /// then index, deduplicated.
    pub fn neighbors(
        &self,
        n: NodeId,
        filter: impl Into<RelationFilter>,
    ) -> Result<Vec<NodeId>, GraphError> {
        let filter = filter.into();
        let mut out: Vec<NodeId> = self
            .incident(n)?
            .filter(|(e, _)| match filter {
                RelationFilter::All => true,
                RelationFilter::Only(r) => e.rel == r,
            })
            .map(|(e, dir)| match dir {
                Direction::Outgoing => e.dst,
                Direction::Incoming => e.src,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Nodes reached from `n` along `rel` in one direction only.
    pub fn directed_neighbors(
        &self,
        n: NodeId,
        rel: Relation,
        dir: Direction,
    ) -> Result<Vec<NodeId>, GraphError> {
        let mut out: Vec<NodeId> = self
            .incident(n)?
            .filter(|(e, d)| e.rel == rel && *d == dir)
            .map(|(e, d)| match d {
                Direction::Outgoing => e.dst,
                Direction::Incoming => e.src,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Publisher of an article, if any.
    pub fn publisher(&self, article: NodeId) -> Option<NodeId> {
        self.directed_neighbors(article, Relation::Publishes, Direction::Incoming)
            .ok()?
            .into_iter()
            .next()
    }

    /// Full-scan check that every edge matches its relation signature and
    /// every source carries a gold label.
    pub fn check_integrity(&self) -> Result<(), GraphError> {
        for e in &self.edges {
            let (a, b) = e.rel.signature();
            let ok = (e.src.kind == a && e.dst.kind == b)
                || (e.rel.is_symmetric() && e.src.kind == b && e.dst.kind == a);
            if !ok || !self.contains(e.src) || !self.contains(e.dst) {
                return Err(GraphError::KindMismatch {
                    rel: e.rel,
                    expected_src: a,
                    expected_dst: b,
                    src: e.src,
                    dst: e.dst,
                });
            }
        }
        for s in self.nodes_of(NodeKind::Source) {
            if self.label(s).is_none() {
                return Err(GraphError::MissingLabel(s));
            }
        }
        Ok(())
    }

    /// A copy without any interaction edges.
    pub fn without_interactions(&self) -> InfoGraph {
        self.filter_edges(|e| !e.rel.is_interaction())
    }

    /// A copy keeping only edges for which `keep` holds. Nodes, labels and
    /// metadata are untouched.
    pub fn filter_edges(&self, mut keep: impl FnMut(&Edge) -> bool) -> InfoGraph {
        let mut out = InfoGraph {
            dims: self.dims,
            nodes: self.nodes.clone(),
            edges: Vec::new(),
            edge_set: HashSet::new(),
            adjacency: [
                vec![Vec::new(); self.count(NodeKind::Source)],
                vec![Vec::new(); self.count(NodeKind::Article)],
                vec![Vec::new(); self.count(NodeKind::User)],
            ],
            labels: self.labels.clone(),
            follower_counts: self.follower_counts.clone(),
        };
        for e in &self.edges {
            if keep(e) {
                // endpoints and signature were validated on first insertion
                let _ = out.add_edge(e.src, e.dst, e.rel);
            }
        }
        out
    }
}

fn canonical(src: NodeId, dst: NodeId, rel: Relation) -> (NodeId, NodeId) {
    if rel.is_symmetric() && dst < src {
        (dst, src)
    } else {
        (src, dst)
    }
}
