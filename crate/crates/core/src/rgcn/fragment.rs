//! The slice of a graph a forward pass actually touches: the L-hop
//! closure of the requested nodes, with per-relation normalised messages.

use std::collections::{BTreeSet, HashMap};

use crate::graph::{Edge, GraphError, InfoGraph, NodeId, NodeKind, Relation};
use crate::numerics::Matrix;

/// A relation as seen by message passing: a stored relation in one
/// direction. Interaction relations may share weights with base ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageRelation {
    pub relation: Relation,
    /// `false`: messages flow src -> dst. `true`: dst -> src.
    pub inverse: bool,
}

/// How stored edges expand into weighted message channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationPlan {
    channels: Vec<MessageRelation>,
    tied: bool,
}

impl RelationPlan {
    pub fn new(tie_interactions: bool) -> Self {
        let mut channels = Vec::new();
        for r in Relation::BASE {
            channels.push(MessageRelation { relation: r, inverse: false });
            channels.push(MessageRelation { relation: r, inverse: true });
        }
        if tie_interactions {
            // no base relation joins two articles
            channels.push(MessageRelation { relation: Relation::InteractAA, inverse: false });
        } else {
            for r in Relation::INTERACT {
                channels.push(MessageRelation { relation: r, inverse: false });
                if !r.is_symmetric() {
                    channels.push(MessageRelation { relation: r, inverse: true });
                }
            }
        }
        Self {
            channels,
            tied: tie_interactions,
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[MessageRelation] {
        &self.channels
    }

    fn channel(&self, relation: Relation, inverse: bool) -> usize {
        self.channels
            .iter()
            .position(|c| c.relation == relation && c.inverse == inverse)
            .expect("channel exists for every planned relation")
    }

    /// `(receiver, sender, channel)` triples produced by one stored edge.
    pub fn expand(&self, e: &Edge) -> Vec<(NodeId, NodeId, usize)> {
        let both = |rel: Relation| {
            vec![
                (e.dst, e.src, self.channel(rel, false)),
                (e.src, e.dst, self.channel(rel, true)),
            ]
        };
        match e.rel {
            r if !r.is_interaction() => both(r),
            Relation::InteractAA => vec![
                (e.dst, e.src, self.channel(Relation::InteractAA, false)),
                (e.src, e.dst, self.channel(Relation::InteractAA, false)),
            ],
            Relation::InteractUU if self.tied => {
                // a mutual follow: each side hears the other as follower and followee
                let f = self.channel(Relation::FollowsUser, false);
                let i = self.channel(Relation::FollowsUser, true);
                vec![(e.dst, e.src, f), (e.src, e.dst, i), (e.src, e.dst, f), (e.dst, e.src, i)]
            }
            Relation::InteractUU => {
                let c = self.channel(Relation::InteractUU, false);
                vec![(e.dst, e.src, c), (e.src, e.dst, c)]
            }
            r => {
                let (user, other) = if e.src.kind == NodeKind::User {
                    (e.src, e.dst)
                } else {
                    (e.dst, e.src)
                };
                let base = match r {
                    Relation::InteractUA => Relation::Propagates,
                    _ => Relation::FollowsSource,
                };
                let rel = if self.tied { base } else { r };
                vec![
                    (other, user, self.channel(rel, false)),
                    (user, other, self.channel(rel, true)),
                ]
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ChannelMessages {
    pub receivers: Vec<usize>,
    pub senders: Vec<usize>,
    /// `1 / c_{i,r}`: one over the receiver's message count on this channel.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Fragment {
    pub(crate) nodes: Vec<NodeId>,
    pub(crate) local: HashMap<NodeId, usize>,
    pub(crate) kind_rows: [Vec<usize>; 3],
    pub(crate) features: [Matrix; 3],
    pub(crate) channels: Vec<ChannelMessages>,
    feature_reads: Vec<NodeId>,
}

impl Fragment {
    /// Collects the `hops`-hop closure of `active` (both edge directions)
    /// and reads features only for nodes inside it.
    pub fn build(
        g: &InfoGraph,
        active: &[NodeId],
        hops: usize,
        plan: &RelationPlan,
    ) -> Result<Self, GraphError> {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut frontier: Vec<NodeId> = Vec::new();
        for &n in active {
            if !g.contains(n) {
                return Err(GraphError::UnknownNode(n));
            }
            if seen.insert(n) {
                frontier.push(n);
            }
        }
        for _ in 0..hops {
            let mut next = Vec::new();
            for n in frontier {
                for (e, _) in g.incident(n)? {
                    for m in [e.src, e.dst] {
                        if seen.insert(m) {
                            next.push(m);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }

        let nodes: Vec<NodeId> = seen.into_iter().collect();
        let local: HashMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();

        let mut kind_rows: [Vec<usize>; 3] = Default::default();
        let mut feature_rows: [Vec<f64>; 3] = Default::default();
        let mut feature_reads = Vec::with_capacity(nodes.len());
        for (i, &n) in nodes.iter().enumerate() {
            let slot = n.kind.slot();
            kind_rows[slot].push(i);
            feature_rows[slot].extend_from_slice(g.features(n)?);
            feature_reads.push(n);
        }
        let dims = g.dims();
        let features = NodeKind::ALL.map(|k| {
            let rows = kind_rows[k.slot()].len();
            Matrix::from_vec(rows, dims.for_kind(k), std::mem::take(&mut feature_rows[k.slot()]))
                .expect("feature rows match declared dims")
        });

        let mut channels = vec![ChannelMessages::default(); plan.len()];
        for e in g.edges() {
            if !(local.contains_key(&e.src) && local.contains_key(&e.dst)) {
                continue;
            }
            for (recv, send, c) in plan.expand(e) {
                channels[c].receivers.push(local[&recv]);
                channels[c].senders.push(local[&send]);
            }
        }
        for ch in &mut channels {
            let mut order: Vec<usize> = (0..ch.receivers.len()).collect();
            order.sort_by_key(|&i| (ch.receivers[i], ch.senders[i], i));
            ch.receivers = order.iter().map(|&i| ch.receivers[i]).collect();
            ch.senders = order.iter().map(|&i| ch.senders[i]).collect();
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for &r in &ch.receivers {
                *counts.entry(r).or_default() += 1;
            }
            ch.weights = ch.receivers.iter().map(|r| 1.0 / counts[r] as f64).collect();
        }

        Ok(Self {
            nodes,
            local,
            kind_rows,
            features,
            channels,
            feature_reads,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn local_index(&self, n: NodeId) -> Option<usize> {
        self.local.get(&n).copied()
    }

    /// Every node whose feature vector was read while building.
    pub fn feature_reads(&self) -> &[NodeId] {
        &self.feature_reads
    }

    /// Number of messages node `n` receives on `channel` (the normaliser).
    pub fn in_degree(&self, n: NodeId, channel: usize) -> usize {
        let Some(i) = self.local_index(n) else { return 0 };
        self.channels[channel]
            .receivers
            .iter()
            .filter(|&&r| r == i)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FactualityLabel, FeatureDims};

    fn chain() -> InfoGraph {
        // s0 -> a0 <- u0 -> u1 -> u2
        let mut g = InfoGraph::new(FeatureDims { user: 1, item: 1 });
        g.add_source(vec![1.0], FactualityLabel::Low).unwrap();
        g.add_node(NodeKind::Article, vec![2.0]).unwrap();
        for i in 0..3 {
            g.add_node(NodeKind::User, vec![10.0 + i as f64]).unwrap();
        }
        g.add_edge(NodeId::source(0), NodeId::article(0), Relation::Publishes).unwrap();
        g.add_edge(NodeId::user(0), NodeId::article(0), Relation::Propagates).unwrap();
        g.add_edge(NodeId::user(0), NodeId::user(1), Relation::FollowsUser).unwrap();
        g.add_edge(NodeId::user(1), NodeId::user(2), Relation::FollowsUser).unwrap();
        g
    }

    #[test]
    fn closure_respects_hop_count() {
        let g = chain();
        let plan = RelationPlan::new(true);
        let f = Fragment::build(&g, &[NodeId::source(0)], 2, &plan).unwrap();
        assert_eq!(f.nodes(), &[NodeId::source(0), NodeId::article(0), NodeId::user(0)]);
        let f = Fragment::build(&g, &[NodeId::source(0)], 4, &plan).unwrap();
        assert_eq!(f.len(), 5);
        assert_eq!(f.feature_reads().len(), 5);
    }

    #[test]
    fn normaliser_counts_channel_neighbors() {
        let mut g = chain();
        g.add_edge(NodeId::user(2), NodeId::user(0), Relation::FollowsUser).unwrap();
        let plan = RelationPlan::new(true);
        let f = Fragment::build(&g, &[NodeId::user(0)], 1, &plan).unwrap();
        let follows = plan.channel(Relation::FollowsUser, false);
        let followed = plan.channel(Relation::FollowsUser, true);
        // u0 is followed by u2, and follows u1
        assert_eq!(f.in_degree(NodeId::user(0), follows), 1);
        assert_eq!(f.in_degree(NodeId::user(0), followed), 1);
        let ch = &f.channels[follows];
        assert!(ch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn tied_interactions_reuse_base_channels() {
        let tied = RelationPlan::new(true);
        let untied = RelationPlan::new(false);
        assert_eq!(tied.len(), 9);
        assert_eq!(untied.len(), 14);
        let e = Edge {
            src: NodeId::user(0),
            dst: NodeId::article(3),
            rel: Relation::InteractUA,
        };
        let msgs = tied.expand(&e);
        assert_eq!(msgs[0], (NodeId::article(3), NodeId::user(0), tied.channel(Relation::Propagates, false)));
        let msgs = untied.expand(&e);
        assert_eq!(msgs[1].2, untied.channel(Relation::InteractUA, true));
    }
}
