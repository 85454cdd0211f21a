//! Synthetic multi-event graphs with planted label communities.
//!
//! Three events are generated: a training event and two held-out ones.
//! Every event has one community per factuality class. Users pick a
//! community and a half of their event; each connection they make stays
//! in their community with probability `homophily` and in their half with
//! probability `half_affinity`. Node features are class-conditional
//! Gaussians sharing class means across events, offset by a per-event
//! shift. Events never share an edge.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    FactualityLabel, FeatureDims, InfoGraph, NodeId, NodeKind, NodeMetadata, Partition, Relation,
    SplitSpec,
};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),
    #[error("breakage must lie in [0, 1), got {0}")]
    InvalidBreakage(f64),
    #[error("ground truth does not match the graph: {0}")]
    TruthMismatch(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureModel {
    pub user_dim: usize,
    pub item_dim: usize,
    /// Distance of each class mean from the origin, per node kind.
    pub user_separation: f64,
    pub source_separation: f64,
    pub article_separation: f64,
    /// Norm of the per-event offset added to every feature vector.
    pub event_shift: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub scale: f64,
}

impl Default for FeatureModel {
    fn default() -> Self {
        Self {
            user_dim: 16,
            item_dim: 16,
            user_separation: 1.0,
            source_separation: 0.5,
            article_separation: 0.5,
            event_shift: 0.5,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    /// Sources per factuality class in every event.
    pub sources_per_class: usize,
    pub articles_per_source_mean: f64,
    pub articles_per_source_std: f64,
    pub users_per_event: usize,
    pub influencer_fraction: f64,
    /// Probability that a connection stays inside the user's community.
    pub homophily: f64,
    /// Probability that a connection stays inside the user's event half.
    pub half_affinity: f64,
    /// Probability that a source's gold label differs from its community's.
    pub noise: f64,
    pub propagations_per_user: f64,
    pub source_follows_per_user: f64,
    pub user_follows_per_user: f64,
    pub features: FeatureModel,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sources_per_class: 33,
            articles_per_source_mean: 4.0,
            articles_per_source_std: 1.5,
            users_per_event: 300,
            influencer_fraction: 0.05,
            homophily: 0.85,
            half_affinity: 0.8,
            noise: 0.0,
            propagations_per_user: 3.0,
            source_follows_per_user: 1.0,
            user_follows_per_user: 3.0,
            features: FeatureModel::default(),
        }
    }
}

pub const EVENTS: u8 = 3;

impl GenConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::InfeasibleConfig(m.to_string()));
        if self.sources_per_class < 2 {
            return bad("sources_per_class must be at least 2 (one per half)");
        }
        if self.users_per_event < 6 {
            return bad("users_per_event must be at least 6");
        }
        if !(self.homophily > 0.5 && self.homophily <= 1.0) {
            return bad("homophily must lie in (0.5, 1]");
        }
        if !(0.0..=1.0).contains(&self.half_affinity) {
            return bad("half_affinity must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.influencer_fraction) {
            return bad("influencer_fraction must lie in [0, 1]");
        }
        for (name, v) in [
            ("articles_per_source_mean", self.articles_per_source_mean),
            ("propagations_per_user", self.propagations_per_user),
            ("source_follows_per_user", self.source_follows_per_user),
            ("user_follows_per_user", self.user_follows_per_user),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive"));
            }
        }
        let f = &self.features;
        if f.user_dim == 0 || f.item_dim == 0 {
            return bad("feature dims must be positive");
        }
        if !(f.scale.is_finite() && f.scale > 0.0) || self.articles_per_source_std < 0.0 {
            return bad("feature scale must be positive and std non-negative");
        }
        Ok(())
    }
}

/// Planted structure behind a generated graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GenConfig,
    /// Community id (`event * 3 + class`) per node, indexed like the graph.
    pub source_community: Vec<usize>,
    pub article_community: Vec<usize>,
    pub user_community: Vec<usize>,
    /// Event half (0 or 1) per node.
    pub source_half: Vec<u8>,
    pub article_half: Vec<u8>,
    pub user_half: Vec<u8>,
}

impl GroundTruth {
    pub fn community(&self, n: NodeId) -> Option<usize> {
        match n.kind {
            NodeKind::Source => self.source_community.get(n.index),
            NodeKind::Article => self.article_community.get(n.index),
            NodeKind::User => self.user_community.get(n.index),
        }
        .copied()
    }

    pub fn event(&self, n: NodeId) -> Option<u8> {
        self.community(n).map(|c| (c / 3) as u8)
    }

    /// Label of the community a node was planted in.
    pub fn community_label(&self, n: NodeId) -> Option<FactualityLabel> {
        self.community(n).and_then(|c| FactualityLabel::from_index(c % 3))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatagenError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatagenError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

const TOPICS: [&str; 3] = ["the transit strike", "the river flooding", "the mayoral race"];
const EVENT_MONTH: [u32; 3] = [3, 6, 9];
const STANCE: [[&str; 3]; 3] = [
    ["The shocking truth about", "What nobody tells you about", "The hidden agenda behind"],
    ["Questions grow over", "Debate heats up around", "Critics and backers clash on"],
    ["Officials publish figures on", "Independent review of", "Data released on"],
];
const BIO: [&str; 3] = [
    "Not afraid to ask what they hide.",
    "Following all sides of the story.",
    "Facts first. Sources linked.",
];
const OUTLET_A: [&str; 8] = ["Daily", "Morning", "Metro", "National", "Free", "Public", "Civic", "Evening"];
const OUTLET_B: [&str; 8] = ["Ledger", "Wire", "Post", "Herald", "Report", "Dispatch", "Signal", "Gazette"];

struct Pools {
    /// `[event][class][half]` -> node ids
    sources: Vec<[[Vec<NodeId>; 2]; 3]>,
    articles: Vec<[[Vec<NodeId>; 2]; 3]>,
    users: Vec<[[Vec<NodeId>; 2]; 3]>,
    influencers: Vec<[[Vec<NodeId>; 2]; 3]>,
}

fn empty_pool() -> Vec<[[Vec<NodeId>; 2]; 3]> {
    (0..EVENTS).map(|_| Default::default()).collect()
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn partition_for(event: u8, half: u8) -> Partition {
    match (event, half) {
        (0, _) => Partition::Train,
        (1, 0) => Partition::E1_1,
        (1, _) => Partition::E1_2,
        (2, 0) => Partition::E2_1,
        _ => Partition::E2_2,
    }
}

/// Picks a connection target: same community with probability
/// `homophily`, same half with probability `half_affinity`.
fn pick(
    rng: &mut ChaCha8Rng,
    pool: &[[Vec<NodeId>; 2]; 3],
    class: usize,
    half: u8,
    cfg: &GenConfig,
) -> Option<NodeId> {
    let c = if rng.random::<f64>() < cfg.homophily {
        class
    } else {
        let others = [(class + 1) % 3, (class + 2) % 3];
        others[rng.random_range(0..2)]
    };
    let h = if rng.random::<f64>() < cfg.half_affinity { half } else { 1 - half };
    pool[c][h as usize]
        .choose(rng)
        .or_else(|| pool[c][1 - h as usize].choose(rng))
        .copied()
}

/// Builds the graph, its splits and the planted ground truth.
pub fn generate(cfg: &GenConfig) -> Result<(InfoGraph, SplitSpec, GroundTruth), DatagenError> {
    cfg.validate()?;
    let fm = &cfg.features;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, fm.scale).expect("positive scale");

    let user_means: Vec<Vec<f64>> = (0..3).map(|_| unit_vector(&mut rng, fm.user_dim)).collect();
    let item_means: Vec<Vec<f64>> = (0..3).map(|_| unit_vector(&mut rng, fm.item_dim)).collect();
    let user_shift: Vec<Vec<f64>> = (0..EVENTS).map(|_| unit_vector(&mut rng, fm.user_dim)).collect();
    let item_shift: Vec<Vec<f64>> = (0..EVENTS).map(|_| unit_vector(&mut rng, fm.item_dim)).collect();
    let draw = |rng: &mut ChaCha8Rng, mean: &[f64], sep: f64, shift: &[f64]| -> Vec<f64> {
        mean.iter()
            .zip(shift)
            .map(|(m, s)| sep * m + fm.event_shift * s + normal.sample(rng))
            .collect()
    };

    let mut g = InfoGraph::new(FeatureDims {
        user: fm.user_dim,
        item: fm.item_dim,
    });
    let mut truth = GroundTruth {
        config: cfg.clone(),
        source_community: Vec::new(),
        article_community: Vec::new(),
        user_community: Vec::new(),
        source_half: Vec::new(),
        article_half: Vec::new(),
        user_half: Vec::new(),
    };
    let mut pools = Pools {
        sources: empty_pool(),
        articles: empty_pool(),
        users: empty_pool(),
        influencers: empty_pool(),
    };

    for e in 0..EVENTS {
        let ev = e as usize;
        for class in 0..3 {
            for i in 0..cfg.sources_per_class {
                let half = (i % 2) as u8;
                let label = if rng.random::<f64>() < cfg.noise {
                    FactualityLabel::from_index((class + rng.random_range(1..3)) % 3).unwrap()
                } else {
                    FactualityLabel::from_index(class).unwrap()
                };
                let f = draw(&mut rng, &item_means[class], fm.source_separation, &item_shift[ev]);
                let s = g.add_source(f, label).expect("dims match");
                truth.source_community.push(ev * 3 + class);
                truth.source_half.push(half);
                pools.sources[ev][class][half as usize].push(s);
            }
        }
    }

    let per_source = Normal::new(cfg.articles_per_source_mean, cfg.articles_per_source_std)
        .map_err(|e| DatagenError::InfeasibleConfig(e.to_string()))?;
    for s in 0..g.count(NodeKind::Source) {
        let src = NodeId::source(s);
        let comm = truth.source_community[s];
        let half = truth.source_half[s];
        let (ev, class) = (comm / 3, comm % 3);
        let n = per_source.sample(&mut rng).round().max(1.0) as usize;
        for _ in 0..n {
            let f = draw(&mut rng, &item_means[class], fm.article_separation, &item_shift[ev]);
            let a = g.add_node(NodeKind::Article, f).expect("dims match");
            g.add_edge(src, a, Relation::Publishes).expect("valid signature");
            truth.article_community.push(comm);
            truth.article_half.push(half);
            pools.articles[ev][class][half as usize].push(a);
        }
    }

    // balanced communities and halves inside every event
    let followers_lo = LogNormal::new(4.5, 1.0).expect("valid lognormal");
    for e in 0..EVENTS {
        let ev = e as usize;
        for i in 0..cfg.users_per_event {
            let class = i % 3;
            let half = ((i / 3) % 2) as u8;
            let f = draw(&mut rng, &user_means[class], fm.user_separation, &user_shift[ev]);
            let u = g.add_node(NodeKind::User, f).expect("dims match");
            let followers = if rng.random::<f64>() < cfg.influencer_fraction {
                pools.influencers[ev][class][half as usize].push(u);
                // log-uniform over (1000, 100000]
                (1000.0 * 100f64.powf(rng.random::<f64>())).ceil() as u64 + 1
            } else {
                (followers_lo.sample(&mut rng) as u64).min(1000)
            };
            g.set_follower_count(u, followers).expect("user exists");
            truth.user_community.push(ev * 3 + class);
            truth.user_half.push(half);
            pools.users[ev][class][half as usize].push(u);
        }
    }

    let prop = Poisson::new(cfg.propagations_per_user).expect("positive rate");
    let sfol = Poisson::new(cfg.source_follows_per_user).expect("positive rate");
    let ufol = Poisson::new(cfg.user_follows_per_user).expect("positive rate");
    for ui in 0..g.count(NodeKind::User) {
        let u = NodeId::user(ui);
        let comm = truth.user_community[ui];
        let half = truth.user_half[ui];
        let (ev, class) = (comm / 3, comm % 3);
        let n_prop = 1 + prop.sample(&mut rng) as usize;
        for _ in 0..n_prop {
            if let Some(a) = pick(&mut rng, &pools.articles[ev], class, half, cfg) {
                g.add_edge(u, a, Relation::Propagates).expect("valid signature");
            }
        }
        for _ in 0..sfol.sample(&mut rng) as usize {
            if let Some(s) = pick(&mut rng, &pools.sources[ev], class, half, cfg) {
                g.add_edge(u, s, Relation::FollowsSource).expect("valid signature");
            }
        }
        for _ in 0..ufol.sample(&mut rng) as usize {
            if let Some(v) = pick(&mut rng, &pools.users[ev], class, half, cfg) {
                if v != u {
                    g.add_edge(u, v, Relation::FollowsUser).expect("valid signature");
                }
            }
        }
        if rng.random::<f64>() < 0.5 {
            if let Some(v) = pick(&mut rng, &pools.influencers[ev], class, half, cfg) {
                if v != u {
                    g.add_edge(u, v, Relation::FollowsUser).expect("valid signature");
                }
            }
        }
    }

    let mut splits = SplitSpec::for_graph(&g);
    for (kind, comms, halves) in [
        (NodeKind::Source, &truth.source_community, &truth.source_half),
        (NodeKind::Article, &truth.article_community, &truth.article_half),
        (NodeKind::User, &truth.user_community, &truth.user_half),
    ] {
        for (i, (&c, &h)) in comms.iter().zip(halves.iter()).enumerate() {
            splits.assign(NodeId::new(kind, i), partition_for((c / 3) as u8, h));
        }
    }
    let violations = splits
        .validate(&g)
        .map_err(|e| DatagenError::InfeasibleConfig(e.to_string()))?;
    assert!(violations.is_empty(), "generator produced cross-event edges");

    attach_metadata(&mut g, &truth, &mut rng);
    Ok((g, splits, truth))
}

fn attach_metadata(g: &mut InfoGraph, truth: &GroundTruth, rng: &mut ChaCha8Rng) {
    for s in 0..g.count(NodeKind::Source) {
        let n = NodeId::source(s);
        let ev = truth.source_community[s] / 3;
        let meta = NodeMetadata::default()
            .with("name", format!("{} {}", OUTLET_A[s % 8], OUTLET_B[(s / 8) % 8]))
            .with("bio", format!("News and commentary on {}.", TOPICS[ev]));
        g.set_metadata(n, meta).expect("node exists");
    }
    for a in 0..g.count(NodeKind::Article) {
        let n = NodeId::article(a);
        let comm = truth.article_community[a];
        let (ev, class) = (comm / 3, comm % 3);
        let stance = STANCE[class][rng.random_range(0..3)];
        let day = rng.random_range(1..=28);
        let meta = NodeMetadata::default()
            .with("headline", format!("{stance} {}", TOPICS[ev]))
            .with("snippet", format!("{stance} {}, as the story continues to develop.", TOPICS[ev]))
            .with("date", format!("2020-{:02}-{day:02}", EVENT_MONTH[ev]));
        g.set_metadata(n, meta).expect("node exists");
    }
    for u in 0..g.count(NodeKind::User) {
        let n = NodeId::user(u);
        let comm = truth.user_community[u];
        let (ev, class) = (comm / 3, comm % 3);
        let following = g
            .incident(n)
            .expect("node exists")
            .filter(|(e, _)| e.src == n && e.rel == Relation::FollowsUser)
            .count();
        let meta = NodeMetadata::default()
            .with("username", format!("@reader{u}"))
            .with("bio", BIO[class])
            .with("following", following.to_string())
            .with("followers", g.follower_count(n).to_string())
            .with("tweet", format!("{} {}", STANCE[class][u % 3], TOPICS[ev]));
        g.set_metadata(n, meta).expect("node exists");
    }
}

/// Removes a seeded fraction of intra-community user–user and
/// user–article edges from the held-out events. The training event and
/// every node are left alone.
pub fn degrade(g: &InfoGraph, truth: &GroundTruth, breakage: f64) -> Result<InfoGraph, DatagenError> {
    if !(0.0..1.0).contains(&breakage) {
        return Err(DatagenError::InvalidBreakage(breakage));
    }
    if truth.user_community.len() != g.count(NodeKind::User)
        || truth.article_community.len() != g.count(NodeKind::Article)
    {
        return Err(DatagenError::TruthMismatch("node counts differ".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(truth.config.seed ^ 0x6272_6561_6b);
    Ok(g.filter_edges(|e| {
        let candidate = matches!(e.rel, Relation::FollowsUser | Relation::Propagates)
            && truth.event(e.src) != Some(0)
            && truth.community(e.src) == truth.community(e.dst);
        !(candidate && rng.random::<f64>() < breakage)
    }))
}

/// Intra-community user–user and user–article edges in held-out events.
pub fn breakable_edges(g: &InfoGraph, truth: &GroundTruth) -> usize {
    g.edges()
        .iter()
        .filter(|e| {
            matches!(e.rel, Relation::FollowsUser | Relation::Propagates)
                && truth.event(e.src) != Some(0)
                && truth.community(e.src) == truth.community(e.dst)
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphDocument;
    use crate::sampler::{user_factuality, LabelSource};

    fn small() -> GenConfig {
        GenConfig {
            sources_per_class: 6,
            users_per_event: 60,
            ..GenConfig::default()
        }
        .with_seed(3)
    }

    #[test]
    fn default_class_counts() {
        let (g, splits, _) = generate(&GenConfig::default()).unwrap();
        for e in 0..EVENTS {
            let mut counts = [0usize; 3];
            for s in splits.event_members(NodeKind::Source, e) {
                counts[g.label(s).unwrap().index()] += 1;
            }
            assert_eq!(counts, [33, 33, 33]);
        }
    }

    #[test]
    fn splits_are_clean_and_complete() {
        let (g, splits, _) = generate(&small()).unwrap();
        assert!(splits.validate(&g).unwrap().is_empty());
        for p in Partition::ALL {
            assert!(!splits.members(NodeKind::Source, p).is_empty(), "{p}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let (g1, s1, t1) = generate(&small()).unwrap();
        let (g2, s2, t2) = generate(&small()).unwrap();
        assert_eq!(
            GraphDocument::from_graph(&g1, &s1).to_json(),
            GraphDocument::from_graph(&g2, &s2).to_json()
        );
        assert_eq!(t1, t2);
        let (g3, _, _) = generate(&small().with_seed(4)).unwrap();
        assert_ne!(g1, g3);
    }

    #[test]
    fn noiseless_full_homophily_matches_community() {
        let cfg = GenConfig {
            homophily: 1.0,
            noise: 0.0,
            ..small()
        };
        let (g, _, truth) = generate(&cfg).unwrap();
        let users: Vec<NodeId> = g.nodes_of(NodeKind::User).collect();
        let f = user_factuality(&g, &users, LabelSource::Gold).unwrap();
        for u in users {
            assert_eq!(f.get(u), truth.community_label(u), "{u}");
        }
    }

    #[test]
    fn influencers_exist() {
        let (g, _, _) = generate(&GenConfig::default()).unwrap();
        assert!(g.nodes_of(NodeKind::User).any(|u| g.follower_count(u) > 1000));
    }

    #[test]
    fn rejects_infeasible_configs() {
        for cfg in [
            GenConfig { homophily: 0.5, ..small() },
            GenConfig { sources_per_class: 0, ..small() },
            GenConfig { noise: 1.0, ..small() },
        ] {
            assert!(matches!(generate(&cfg), Err(DatagenError::InfeasibleConfig(_))));
        }
    }

    #[test]
    fn zero_breakage_is_identity() {
        let (g, _, truth) = generate(&small()).unwrap();
        assert_eq!(degrade(&g, &truth, 0.0).unwrap(), g);
        assert!(degrade(&g, &truth, 1.0).is_err());
    }

    #[test]
    fn breakage_removes_about_the_requested_share() {
        let (g, _, truth) = generate(&GenConfig::default()).unwrap();
        let before = breakable_edges(&g, &truth);
        let d = degrade(&g, &truth, 0.5).unwrap();
        let removed = g.edge_count() - d.edge_count();
        assert_eq!(removed, before - breakable_edges(&d, &truth));
        // binomial(n, 0.5): four standard deviations
        let sd = (before as f64 * 0.25).sqrt();
        assert!((removed as f64 - before as f64 / 2.0).abs() < 4.0 * sd, "{removed} of {before}");
        assert_eq!(d.node_count(), g.node_count());
        assert_eq!(degrade(&g, &truth, 0.5).unwrap(), d);
    }

    #[test]
    fn metadata_is_filled() {
        let (g, _, _) = generate(&small()).unwrap();
        let a = g.metadata(NodeId::article(0)).unwrap();
        for k in ["headline", "snippet", "date"] {
            assert!(!a.get(k).unwrap().is_empty());
        }
        assert!(g.metadata(NodeId::user(0)).unwrap().get("bio").is_some());
    }

    #[test]
    fn truth_round_trips() {
        let (_, _, truth) = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("truth.json");
        truth.save(&p).unwrap();
        assert_eq!(GroundTruth::load(&p).unwrap(), truth);
    }
}
