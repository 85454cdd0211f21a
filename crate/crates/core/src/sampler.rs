//! Focal user pair selection: random, model confusion, and the
//! social-vs-factuality mismatch criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{FactualityLabel, GraphError, InfoGraph, NodeId, NodeKind, Relation};
use crate::kmeans::{kmeans, KMeansConfig, KMeansError};
use crate::rgcn::{NodeEmbeddings, Predictions};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("need at least 2 eligible users, have {0}")]
    TooFewUsers(usize),
    #[error("cluster count must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("{0} has no source or article links")]
    UndefinedForIsolatedUser(NodeId),
    #[error("no embedding for {0}")]
    MissingEmbedding(NodeId),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Random,
    Confusion,
    Mismatch,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Random, Criterion::Confusion, Criterion::Mismatch];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Random => "random",
            Criterion::Confusion => "confusion",
            Criterion::Mismatch => "mismatch",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown criterion {s:?} (random, confusion, mismatch)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FocalPair {
    pub uj: NodeId,
    pub uk: NodeId,
    pub criterion: Criterion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<usize>,
    pub seed: u64,
}

/// Where source labels come from when deriving user labels.
#[derive(Debug, Clone, Copy)]
pub enum LabelSource<'a> {
    Predicted(&'a Predictions),
    Gold,
}

/// Derived label per user; `None` marks a user with no source/article links.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFactuality(pub BTreeMap<NodeId, Option<FactualityLabel>>);

impl UserFactuality {
    pub fn get(&self, u: NodeId) -> Option<FactualityLabel> {
        self.0.get(&u).copied().flatten()
    }

    pub fn users(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.keys().copied()
    }

    /// Users with a defined label, in node order.
    pub fn defined(&self) -> impl Iterator<Item = (NodeId, FactualityLabel)> + '_ {
        self.0.iter().filter_map(|(u, l)| l.map(|l| (*u, l)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sources and articles a user touches directly: followed or interacted
/// sources, propagated or interacted articles. Sorted, deduplicated.
pub fn linked_items(g: &InfoGraph, u: NodeId) -> Result<Vec<NodeId>, GraphError> {
    let mut out: Vec<NodeId> = g
        .incident(u)?
        .filter(|(e, _)| {
            matches!(
                e.rel,
                Relation::FollowsSource
                    | Relation::Propagates
                    | Relation::InteractUS
                    | Relation::InteractUA
            )
        })
        .map(|(e, _)| if e.src == u { e.dst } else { e.src })
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Source whose label an item carries: itself, or an article's publisher.
fn label_source(g: &InfoGraph, item: NodeId) -> Option<NodeId> {
    match item.kind {
        NodeKind::Source => Some(item),
        NodeKind::Article => g.publisher(item),
        NodeKind::User => None,
    }
}

/// Majority label over each user's linked sources and articles; articles
/// inherit their publisher's label. Ties go to the lower label. Items
/// whose source has no label are ignored.
pub fn user_factuality(
    g: &InfoGraph,
    scope: &[NodeId],
    labels: LabelSource<'_>,
) -> Result<UserFactuality, SamplerError> {
    let mut out = BTreeMap::new();
    for &u in scope {
        let mut counts = [0usize; 3];
        for item in linked_items(g, u)? {
            let label = label_source(g, item).and_then(|s| match labels {
                LabelSource::Predicted(p) => p.get(&s).map(|p| p.label),
                LabelSource::Gold => g.label(s),
            });
            if let Some(l) = label {
                counts[l.index()] += 1;
            }
        }
        out.insert(u, FactualityLabel::majority(&counts));
    }
    Ok(UserFactuality(out))
}

/// Compensated sum; exact for the short sums averaged here.
fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Mean predicted-class probability over the user's linked items, each
/// article scored by its publisher's prediction.
pub fn confusion_score(g: &InfoGraph, preds: &Predictions, u: NodeId) -> Result<f64, SamplerError> {
    let scores: Vec<f64> = linked_items(g, u)?
        .into_iter()
        .filter_map(|item| label_source(g, item).and_then(|s| preds.get(&s)))
        .map(|p| p.confidence())
        .collect();
    if scores.is_empty() {
        return Err(SamplerError::UndefinedForIsolatedUser(u));
    }
    Ok(neumaier_sum(scores.iter().copied()) / scores.len() as f64)
}

/// Confusion scores for every user in `scope` that has one.
pub fn confusion_scores(
    g: &InfoGraph,
    preds: &Predictions,
    scope: &[NodeId],
) -> Result<BTreeMap<NodeId, f64>, SamplerError> {
    let mut out = BTreeMap::new();
    for &u in scope {
        match confusion_score(g, preds, u) {
            Ok(s) => {
                out.insert(u, s);
            }
            Err(SamplerError::UndefinedForIsolatedUser(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `max(2, round(sqrt(n / 2)))`.
pub fn default_k(n_users: usize) -> usize {
    ((n_users as f64 / 2.0).sqrt().round() as usize).max(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub assignment: BTreeMap<NodeId, usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Majority label of each cluster's defined members.
    pub cluster_labels: BTreeMap<usize, FactualityLabel>,
}

impl Clustering {
    /// Cluster members in node order.
    pub fn members(&self, cluster: usize) -> Vec<NodeId> {
        self.assignment
            .iter()
            .filter(|(_, &c)| c == cluster)
            .map(|(u, _)| *u)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub pairs: Vec<FocalPair>,
    pub clustering: Clustering,
    /// Clusters with mismatched users but no majority-label partner left.
    pub skipped_clusters: Vec<usize>,
    /// Mismatched users that found no unused partner.
    pub unpaired: Vec<NodeId>,
}

/// Clusters users by embedding and labels each cluster by member majority.
pub fn cluster_users(
    emb: &NodeEmbeddings,
    labels: &UserFactuality,
    k: usize,
    seed: u64,
) -> Result<Clustering, SamplerError> {
    let users: Vec<NodeId> = labels.users().collect();
    let points = users
        .iter()
        .map(|&u| emb.get(u).map(<[f64]>::to_vec).ok_or(SamplerError::MissingEmbedding(u)))
        .collect::<Result<Vec<_>, _>>()?;
    if users.len() < k {
        return Err(SamplerError::TooFewUsers(users.len()));
    }
    let km = kmeans(&points, &KMeansConfig::new(k, seed))?;
    let assignment: BTreeMap<NodeId, usize> =
        users.iter().copied().zip(km.assignment.iter().copied()).collect();
    let mut votes: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for (u, l) in labels.defined() {
        votes.entry(assignment[&u]).or_default()[l.index()] += 1;
    }
    let cluster_labels = votes
        .into_iter()
        .filter_map(|(c, v)| FactualityLabel::majority(&v).map(|l| (c, l)))
        .collect();
    Ok(Clustering {
        k,
        assignment,
        centroids: km.centroids,
        cluster_labels,
    })
}

/// Pairs each user whose label disagrees with its cluster's label with a
/// seeded-random same-cluster user carrying the cluster label.
///
/// Every user in `labels` is clustered; users with undefined labels
/// neither vote nor pair. Clusters are scanned in id order and members in
/// node order. A user joins at most one pair; a mismatched user with no
/// unused partner left is reported in `unpaired`.
pub fn mismatch_pairs(
    emb: &NodeEmbeddings,
    labels: &UserFactuality,
    k: usize,
    seed: u64,
) -> Result<MismatchReport, SamplerError> {
    if k < 2 {
        return Err(SamplerError::InvalidK(k));
    }
    let defined = labels.defined().count();
    if defined < 2 {
        return Err(SamplerError::TooFewUsers(defined));
    }
    let clustering = cluster_users(emb, labels, k, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_736d);
    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    let mut unpaired = Vec::new();

    for c in 0..k {
        let Some(&cl) = clustering.cluster_labels.get(&c) else { continue };
        let members = clustering.members(c);
        let mut starved = false;
        for &j in &members {
            let Some(fj) = labels.get(j) else { continue };
            if fj == cl || used.contains(&j) {
                continue;
            }
            let eligible: Vec<NodeId> = members
                .iter()
                .copied()
                .filter(|&u| u != j && !used.contains(&u) && labels.get(u) == Some(cl))
                .collect();
            if eligible.is_empty() {
                unpaired.push(j);
                starved = true;
                continue;
            }
            let uk = eligible[rng.random_range(0..eligible.len())];
            used.insert(j);
            used.insert(uk);
            pairs.push(FocalPair {
                uj: j,
                uk,
                criterion: Criterion::Mismatch,
                cluster_id: Some(c),
                seed,
            });
        }
        if starved {
            skipped.push(c);
        }
    }
    Ok(MismatchReport {
        pairs,
        clustering,
        skipped_clusters: skipped,
        unpaired,
    })
}

/// Shuffles the users with defined labels and pairs them consecutively.
pub fn random_pairs(labels: &UserFactuality, seed: u64) -> Result<Vec<FocalPair>, SamplerError> {
    let mut users: Vec<NodeId> = labels.defined().map(|(u, _)| u).collect();
    if users.len() < 2 {
        return Err(SamplerError::TooFewUsers(users.len()));
    }
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x726e_64));
    Ok(users
        .chunks_exact(2)
        .map(|p| FocalPair {
            uj: p[0],
            uk: p[1],
            criterion: Criterion::Random,
            cluster_id: None,
            seed,
        })
        .collect())
}

/// Sorts users by ascending confidence (ties by node) and pairs them
/// greedily from the least confident end.
pub fn confusion_pairs(scores: &BTreeMap<NodeId, f64>, seed: u64) -> Result<Vec<FocalPair>, SamplerError> {
    if scores.len() < 2 {
        return Err(SamplerError::TooFewUsers(scores.len()));
    }
    let mut order: Vec<(NodeId, f64)> = scores.iter().map(|(u, s)| (*u, *s)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(order
        .chunks_exact(2)
        .map(|p| FocalPair {
            uj: p[0].0,
            uk: p[1].0,
            criterion: Criterion::Confusion,
            cluster_id: None,
            seed,
        })
        .collect())
}

/// Keeps at most `budget` pairs: a seeded subset in original order.
pub fn limit_pairs(pairs: Vec<FocalPair>, budget: usize, seed: u64) -> Vec<FocalPair> {
    if pairs.len() <= budget {
        return pairs;
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x6275_6467));
    let mut keep: Vec<usize> = idx.into_iter().take(budget).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| pairs[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FeatureDims;
    use crate::rgcn::SourcePrediction;
    use proptest::prelude::*;
    use FactualityLabel::*;

    fn pred(label: FactualityLabel, p: f64) -> SourcePrediction {
        let mut probs = [(1.0 - p) / 2.0; 3];
        probs[label.index()] = p;
        SourcePrediction { probs, label }
    }

    /// Sources with the given labels, one article per source, `users` bare users.
    fn base(labels: &[FactualityLabel], users: usize) -> InfoGraph {
        let mut g = InfoGraph::new(FeatureDims { user: 1, item: 1 });
        for (i, &l) in labels.iter().enumerate() {
            let s = g.add_source(vec![0.0], l).unwrap();
            let a = g.add_node(NodeKind::Article, vec![0.0]).unwrap();
            assert_eq!(a.index, i);
            g.add_edge(s, a, Relation::Publishes).unwrap();
        }
        for _ in 0..users {
            g.add_node(NodeKind::User, vec![0.0]).unwrap();
        }
        g
    }

    fn gold_preds(g: &InfoGraph) -> Predictions {
        g.nodes_of(NodeKind::Source)
            .map(|s| (s, pred(g.label(s).unwrap(), 1.0)))
            .collect()
    }

    #[test]
    fn three_low_sources_and_a_mixed_article_is_low() {
        let mut g = base(&[Low, Low, Low, Mixed], 1);
        let u = NodeId::user(0);
        for s in 0..3 {
            g.add_edge(u, NodeId::source(s), Relation::FollowsSource).unwrap();
        }
        g.add_edge(u, NodeId::article(3), Relation::Propagates).unwrap();
        let p = gold_preds(&g);
        let f = user_factuality(&g, &[u], LabelSource::Predicted(&p)).unwrap();
        assert_eq!(f.get(u), Some(Low));
    }

    #[test]
    fn isolated_user_is_undefined() {
        let g = base(&[High], 1);
        let f = user_factuality(&g, &[NodeId::user(0)], LabelSource::Gold).unwrap();
        assert_eq!(f.0[&NodeId::user(0)], None);
        assert!(matches!(
            confusion_score(&g, &gold_preds(&g), NodeId::user(0)),
            Err(SamplerError::UndefinedForIsolatedUser(_))
        ));
    }

    #[test]
    fn tie_goes_to_the_lower_label() {
        let mut g = base(&[Low, Low, High, High], 1);
        let u = NodeId::user(0);
        for s in 0..4 {
            g.add_edge(u, NodeId::source(s), Relation::FollowsSource).unwrap();
        }
        let f = user_factuality(&g, &[u], LabelSource::Gold).unwrap();
        assert_eq!(f.get(u), Some(Low));
    }

    #[test]
    fn predicted_mode_reads_predictions_not_gold() {
        let mut g = base(&[High], 1);
        g.add_edge(NodeId::user(0), NodeId::article(0), Relation::Propagates).unwrap();
        let p: Predictions = [(NodeId::source(0), pred(Mixed, 0.6))].into();
        let f = user_factuality(&g, &[NodeId::user(0)], LabelSource::Predicted(&p)).unwrap();
        assert_eq!(f.get(NodeId::user(0)), Some(Mixed));
    }

    #[test]
    fn confusion_worked_example() {
        // three articles from a source predicted Low at 0.7, one source predicted High at 0.9
        let mut g = base(&[Low, Low, Low, High], 1);
        let u = NodeId::user(0);
        for a in 0..3 {
            g.add_edge(u, NodeId::article(a), Relation::Propagates).unwrap();
        }
        g.add_edge(u, NodeId::source(3), Relation::FollowsSource).unwrap();
        let mut p = Predictions::new();
        for s in 0..3 {
            p.insert(NodeId::source(s), pred(Low, 0.7));
        }
        p.insert(NodeId::source(3), pred(High, 0.9));
        assert_eq!(confusion_score(&g, &p, u).unwrap(), 0.75);
    }

    #[test]
    fn confusion_mean_small_cases() {
        let mut g = base(&[Low, High], 2);
        g.add_edge(NodeId::user(0), NodeId::source(0), Relation::FollowsSource).unwrap();
        g.add_edge(NodeId::user(1), NodeId::source(0), Relation::FollowsSource).unwrap();
        g.add_edge(NodeId::user(1), NodeId::article(1), Relation::Propagates).unwrap();
        let p: Predictions = [
            (NodeId::source(0), pred(Low, 1.0)),
            (NodeId::source(1), pred(High, 0.5)),
        ]
        .into();
        assert_eq!(confusion_score(&g, &p, NodeId::user(0)).unwrap(), 1.0);
        let mut p2 = p.clone();
        p2.insert(NodeId::source(0), pred(Low, 0.9));
        assert!((confusion_score(&g, &p2, NodeId::user(1)).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn confusion_pairs_follow_sort_order() {
        let scores: BTreeMap<NodeId, f64> = [
            (NodeId::user(0), 0.2),
            (NodeId::user(1), 0.9),
            (NodeId::user(2), 0.3),
            (NodeId::user(3), 0.8),
        ]
        .into();
        let p = confusion_pairs(&scores, 0).unwrap();
        assert_eq!((p[0].uj, p[0].uk), (NodeId::user(0), NodeId::user(2)));
        assert_eq!((p[1].uj, p[1].uk), (NodeId::user(3), NodeId::user(1)));
    }

    #[test]
    fn two_users_make_one_pair_under_every_criterion() {
        let labels = UserFactuality([(NodeId::user(0), Some(Low)), (NodeId::user(1), Some(High))].into());
        assert_eq!(random_pairs(&labels, 3).unwrap().len(), 1);
        let scores: BTreeMap<NodeId, f64> = [(NodeId::user(0), 0.4), (NodeId::user(1), 0.6)].into();
        assert_eq!(confusion_pairs(&scores, 3).unwrap().len(), 1);
        let emb = NodeEmbeddings([(NodeId::user(0), vec![0.0]), (NodeId::user(1), vec![0.1])].into());
        // two points, two clusters: each alone, so no mismatch is possible
        let r = mismatch_pairs(&emb, &labels, 2, 3).unwrap();
        assert!(r.pairs.is_empty());
    }

    #[test]
    fn random_pairs_are_seed_stable() {
        let labels = UserFactuality((0..9).map(|i| (NodeId::user(i), Some(Mixed))).collect());
        let a = random_pairs(&labels, 11).unwrap();
        assert_eq!(a, random_pairs(&labels, 11).unwrap());
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|p| p.uj != p.uk));
    }

    fn one_cluster(labels: &[FactualityLabel]) -> (NodeEmbeddings, UserFactuality) {
        // a far-off decoy keeps k = 2 from splitting the interesting group
        let mut emb = BTreeMap::new();
        let mut f = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            emb.insert(NodeId::user(i), vec![i as f64 * 0.01]);
            f.insert(NodeId::user(i), Some(l));
        }
        let decoy = NodeId::user(labels.len());
        emb.insert(decoy, vec![1000.0]);
        f.insert(decoy, None);
        (NodeEmbeddings(emb), UserFactuality(f))
    }

    #[test]
    fn lone_dissenter_pairs_with_a_majority_member() {
        let (emb, f) = one_cluster(&[Low, Low, High, Low]);
        let r = mismatch_pairs(&emb, &f, 2, 5).unwrap();
        assert_eq!(r.pairs.len(), 1);
        let p = r.pairs[0];
        assert_eq!(p.uj, NodeId::user(2));
        assert_eq!(f.get(p.uk), Some(Low));
        assert!(r.unpaired.is_empty());
    }

    #[test]
    fn unanimous_users_yield_no_pairs() {
        let (emb, f) = one_cluster(&[Mixed; 6]);
        assert!(mismatch_pairs(&emb, &f, 2, 1).unwrap().pairs.is_empty());
    }

    #[test]
    fn dissenters_beyond_partner_supply_are_reported() {
        let (emb, f) = one_cluster(&[Low, Low, Low, High, Mixed, High]);
        let r = mismatch_pairs(&emb, &f, 2, 2).unwrap();
        assert_eq!(r.pairs.len(), 3);
        let (emb, f) = one_cluster(&[Low, Low, High, Mixed, Low, High, High]);
        let r = mismatch_pairs(&emb, &f, 2, 2).unwrap();
        // cluster label is Low (3 vs 3 High, tie to lower); four dissenters, three partners
        assert_eq!(r.pairs.len(), 3);
        assert_eq!(r.unpaired.len(), 1);
        assert_eq!(r.skipped_clusters.len(), 1);
    }

    #[test]
    fn mismatch_rejects_bad_k_and_tiny_scopes() {
        let (emb, f) = one_cluster(&[Low, High]);
        assert!(matches!(mismatch_pairs(&emb, &f, 1, 0), Err(SamplerError::InvalidK(1))));
        let f1 = UserFactuality([(NodeId::user(0), Some(Low))].into());
        assert!(matches!(mismatch_pairs(&emb, &f1, 2, 0), Err(SamplerError::TooFewUsers(1))));
    }

    #[test]
    fn limit_keeps_order_and_budget() {
        let labels = UserFactuality((0..40).map(|i| (NodeId::user(i), Some(Low))).collect());
        let all = random_pairs(&labels, 1).unwrap();
        let some = limit_pairs(all.clone(), 5, 9);
        assert_eq!(some.len(), 5);
        let pos: Vec<usize> = some.iter().map(|p| all.iter().position(|q| q == p).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn focal_pair_json_shape() {
        let p = FocalPair {
            uj: NodeId::user(1),
            uk: NodeId::user(4),
            criterion: Criterion::Mismatch,
            cluster_id: Some(2),
            seed: 7,
        };
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"uj":"u1","uk":"u4","criterion":"mismatch","cluster_id":2,"seed":7}"#
        );
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Option<FactualityLabel>>, u64)> {
        (6usize..30, any::<u64>()).prop_flat_map(|(n, seed)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), n),
                prop::collection::vec(prop::option::weighted(0.85, (0usize..3).prop_map(|i| FactualityLabel::from_index(i).unwrap())), n),
                Just(seed),
            )
        })
    }

    proptest! {
        #[test]
        fn pairs_satisfy_all_conditions((pts, labs, seed) in instance()) {
            let emb = NodeEmbeddings(pts.into_iter().enumerate().map(|(i, p)| (NodeId::user(i), p)).collect());
            let f = UserFactuality(labs.into_iter().enumerate().map(|(i, l)| (NodeId::user(i), l)).collect());
            prop_assume!(f.defined().count() >= 2);
            let r = mismatch_pairs(&emb, &f, 3, seed).unwrap();
            let mut seen = BTreeSet::new();
            for p in &r.pairs {
                let c = r.clustering.assignment[&p.uj];
                let cl = r.clustering.cluster_labels[&c];
                prop_assert_eq!(r.clustering.assignment[&p.uk], c);
                prop_assert_ne!(f.get(p.uj), Some(cl));
                prop_assert_eq!(f.get(p.uk), Some(cl));
                prop_assert!(f.get(p.uj).is_some());
                prop_assert!(seen.insert(p.uj) && seen.insert(p.uk));
            }
            for u in r.pairs.iter().flat_map(|p| [p.uj, p.uk]) {
                prop_assert!(f.get(u).is_some());
            }
        }

        #[test]
        fn positive_power_of_two_scaling_keeps_pairs((pts, labs, seed) in instance()) {
            let f = UserFactuality(labs.into_iter().enumerate().map(|(i, l)| (NodeId::user(i), l)).collect());
            prop_assume!(f.defined().count() >= 2);
            let emb = NodeEmbeddings(pts.into_iter().enumerate().map(|(i, p)| (NodeId::user(i), p)).collect());
            let a = mismatch_pairs(&emb, &f, 3, seed).unwrap();
            let b = mismatch_pairs(&emb.scaled(4.0), &f, 3, seed).unwrap();
            prop_assert_eq!(a.pairs, b.pairs);
        }
    }
}
