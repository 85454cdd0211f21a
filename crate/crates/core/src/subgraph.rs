//! Interaction sub-graphs: the small neighbourhood around a focal user
//! pair that an interactor looks at and draws edges on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::{
    Direction, Edge, FactualityLabel, GraphError, InfoGraph, NodeId, NodeKind, Relation,
};
use crate::rgcn::Predictions;
use crate::sampler::{user_factuality, FocalPair, LabelSource, SamplerError};

/// The prompts shown with every sub-graph, in display order.
pub const QUESTIONS: [&str; 5] = [
    "Are there any users that are similar to each other? Please connect them.",
    "Are there any articles that are similar to each other? Please connect them.",
    "Are any users likely to propagate any of the articles? Please connect them to the appropriate article.",
    "Are any users likely to interact with another user? Please connect those pairs of users.",
    "Are any users likely to interact with any sources? Please connect those users of the respective source.",
];

/// Edge relation each question asks for.
pub const QUESTION_RELATIONS: [Relation; 5] = [
    Relation::InteractUU,
    Relation::InteractAA,
    Relation::InteractUA,
    Relation::InteractUU,
    Relation::InteractUS,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphLimits {
    pub max_articles: usize,
    pub max_co_propagators: usize,
    pub max_influencers: usize,
    /// Followers strictly above this make a user an influencer.
    pub influencer_threshold: u64,
}

impl SubgraphLimits {
    /// Every article and co-propagator; only influencers stay bounded.
    pub fn uncapped() -> Self {
        Self {
            max_articles: usize::MAX,
            max_co_propagators: usize::MAX,
            ..Self::default()
        }
    }
}

impl Default for SubgraphLimits {
    fn default() -> Self {
        Self {
            max_articles: 6,
            max_co_propagators: 10,
            max_influencers: 3,
            influencer_threshold: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    FocalUser,
    Article,
    CoPropagator,
    Publisher,
    Influencer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub role: Role,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<FactualityLabel>,
    /// The graph had no display record for this node; `metadata` is filler.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub placeholder: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSubGraph {
    pub id: String,
    pub focal: [NodeId; 2],
    pub pair: FocalPair,
    pub nodes: Vec<SubgraphNode>,
    pub edges: Vec<Edge>,
    pub questions: Vec<String>,
}

impl InteractionSubGraph {
    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.binary_search_by(|x| x.id.cmp(&n)).is_ok()
    }

    pub fn node(&self, n: NodeId) -> Option<&SubgraphNode> {
        self.nodes
            .binary_search_by(|x| x.id.cmp(&n))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(move |n| n.role == role).map(|n| n.id)
    }

    pub fn users(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::User)
            .map(|n| n.id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sub-graph serializes")
    }
}

/// Stable id from the sorted node list.
pub fn subgraph_id(nodes: &[NodeId]) -> String {
    let mut h = Sha256::new();
    for n in nodes {
        h.update(n.to_string().as_bytes());
        h.update(b",");
    }
    let digest = h.finalize();
    format!("sg-{}", hex::encode(&digest[..12]))
}

fn require_user(g: &InfoGraph, u: NodeId) -> Result<(), GraphError> {
    if !g.contains(u) || u.kind != NodeKind::User {
        return Err(GraphError::UnknownNode(u));
    }
    Ok(())
}

/// Collects focal users, the articles they propagate, co-propagators of
/// those articles, their publishers, and influencers the focal users
/// follow. Articles are taken alternately from each focal user in node
/// order; co-propagators ranked by shared articles, then node order;
/// influencers by follower count, then node order.
pub fn build_subgraph(
    g: &InfoGraph,
    pair: FocalPair,
    limits: &SubgraphLimits,
) -> Result<InteractionSubGraph, GraphError> {
    require_user(g, pair.uj)?;
    require_user(g, pair.uk)?;
    let focal = [pair.uj, pair.uk];
    let mut roles: BTreeMap<NodeId, Role> = focal.iter().map(|&u| (u, Role::FocalUser)).collect();

    let per_user: Vec<Vec<NodeId>> = focal
        .iter()
        .map(|&u| g.directed_neighbors(u, Relation::Propagates, Direction::Outgoing))
        .collect::<Result<_, _>>()?;
    let mut articles: Vec<NodeId> = Vec::new();
    let longest = per_user.iter().map(Vec::len).max().unwrap_or(0);
    'fill: for i in 0..longest {
        for list in &per_user {
            if articles.len() >= limits.max_articles {
                break 'fill;
            }
            if let Some(&a) = list.get(i) {
                if !articles.contains(&a) {
                    articles.push(a);
                }
            }
        }
    }
    for &a in &articles {
        roles.insert(a, Role::Article);
    }

    let mut influencers: Vec<(u64, NodeId)> = Vec::new();
    for &u in &focal {
        for v in g.directed_neighbors(u, Relation::FollowsUser, Direction::Outgoing)? {
            let followers = g.follower_count(v);
            if followers > limits.influencer_threshold
                && !focal.contains(&v)
                && !influencers.iter().any(|(_, x)| *x == v)
            {
                influencers.push((followers, v));
            }
        }
    }
    influencers.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, v) in influencers.iter().take(limits.max_influencers) {
        roles.insert(v, Role::Influencer);
    }

    let mut shared: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &a in &articles {
        for u in g.directed_neighbors(a, Relation::Propagates, Direction::Incoming)? {
            if !roles.contains_key(&u) {
                *shared.entry(u).or_default() += 1;
            }
        }
    }
    let mut co: Vec<(usize, NodeId)> = shared.into_iter().map(|(u, c)| (c, u)).collect();
    co.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, u) in co.iter().take(limits.max_co_propagators) {
        roles.insert(u, Role::CoPropagator);
    }

    for &a in &articles {
        if let Some(s) = g.publisher(a) {
            roles.entry(s).or_insert(Role::Publisher);
        }
    }

    let ids: Vec<NodeId> = roles.keys().copied().collect();
    let members: BTreeSet<NodeId> = ids.iter().copied().collect();
    let mut edges: Vec<Edge> = g
        .edges()
        .iter()
        .filter(|e| members.contains(&e.src) && members.contains(&e.dst))
        .copied()
        .collect();
    edges.sort();

    Ok(InteractionSubGraph {
        id: subgraph_id(&ids),
        focal,
        pair,
        nodes: roles
            .into_iter()
            .map(|(id, role)| SubgraphNode {
                id,
                kind: id.kind,
                role,
                metadata: BTreeMap::new(),
                predicted_label: None,
                placeholder: false,
            })
            .collect(),
        edges,
        questions: QUESTIONS.iter().map(|q| q.to_string()).collect(),
    })
}

fn placeholder(g: &InfoGraph, n: NodeId) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    match n.kind {
        NodeKind::Source => {
            m.insert("name".into(), format!("source {}", n.index));
        }
        NodeKind::Article => {
            m.insert("headline".into(), format!("article {}", n.index));
            m.insert("snippet".into(), "(no text available)".into());
            m.insert("date".into(), "unknown".into());
        }
        NodeKind::User => {
            m.insert("username".into(), format!("user{}", n.index));
            m.insert("bio".into(), String::new());
        }
    }
    if n.kind == NodeKind::User {
        m.insert("followers".into(), g.follower_count(n).to_string());
    }
    m.insert("synthetic".into(), "true".into());
    m
}

/// Fills display records from the graph and attaches model labels: the
/// prediction for sources, the derived majority label for users.
pub fn attach_metadata(
    g: &InfoGraph,
    sg: &mut InteractionSubGraph,
    preds: Option<&Predictions>,
) -> Result<(), SamplerError> {
    let users: Vec<NodeId> = sg.users().collect();
    let user_labels = match preds {
        Some(p) => Some(user_factuality(g, &users, LabelSource::Predicted(p))?),
        None => None,
    };
    for node in &mut sg.nodes {
        match g.metadata(node.id) {
            Some(meta) => {
                node.metadata = meta.fields.clone();
                node.placeholder = false;
            }
            None => {
                node.metadata = placeholder(g, node.id);
                node.placeholder = true;
            }
        }
        if node.kind == NodeKind::User {
            node.metadata
                .entry("followers".into())
                .or_insert_with(|| g.follower_count(node.id).to_string());
        }
        node.predicted_label = match node.kind {
            NodeKind::Source => preds.and_then(|p| p.get(&node.id)).map(|p| p.label),
            NodeKind::User => user_labels.as_ref().and_then(|f| f.get(node.id)),
            NodeKind::Article => None,
        };
        if let Some(l) = node.predicted_label {
            node.metadata.insert("predicted_label".into(), l.as_str().into());
        }
    }
    Ok(())
}
