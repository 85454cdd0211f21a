//! Edge proposals, simulated interactors, incorporation into the event
//! graph, the append-only interaction log, and the three protocols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeInsert, GraphError, InfoGraph, NodeId, NodeKind, Partition, Relation, SplitSpec};
use crate::metrics::{purity_by_kind, EvalReport, MetricsError, PurityK};
use crate::rgcn::{train, RgcnError, RgcnModel, TrainReport, TrainRequest};
use crate::sampler::UserFactuality;
use crate::subgraph::InteractionSubGraph;

#[derive(Debug, Error)]
pub enum InteractionError {
    #[error("unknown or stale sub-graph {0:?}")]
    StaleSubgraph(String),
    #[error("invalid proposal {src} -[{relation}]-> {dst}: {reason}")]
    InvalidEndpoint {
        src: NodeId,
        dst: NodeId,
        relation: Relation,
        reason: String,
    },
    #[error("protocol {protocol} does not take interactions on {split}")]
    ProtocolSplitMismatch { protocol: Protocol, split: Partition },
    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("interaction log {path}, line {line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] RgcnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human(String),
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeProposal {
    pub subgraph_id: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Relation,
    pub provenance: Provenance,
    /// Seconds since the Unix epoch; 0 for simulated proposals.
    #[serde(default)]
    pub timestamp: u64,
}

impl EdgeProposal {
    pub fn simulated(subgraph_id: &str, a: NodeId, b: NodeId, relation: Relation) -> Self {
        Self {
            subgraph_id: subgraph_id.to_string(),
            src: a,
            dst: b,
            relation,
            provenance: Provenance::Simulated,
            timestamp: 0,
        }
    }

    /// Endpoint kinds and relation agree; src and dst may come in either order.
    pub fn check_shape(&self) -> Result<(), InteractionError> {
        let invalid = |reason: &str| InteractionError::InvalidEndpoint {
            src: self.src,
            dst: self.dst,
            relation: self.relation,
            reason: reason.to_string(),
        };
        if !self.relation.is_interaction() {
            return Err(invalid("only interaction relations can be proposed"));
        }
        if self.src == self.dst {
            return Err(invalid("an edge needs two distinct endpoints"));
        }
        if Relation::interaction_for(self.src.kind, self.dst.kind) != Some(self.relation) {
            return Err(invalid("endpoint kinds do not match the relation"));
        }
        Ok(())
    }

    /// `(src, dst)` oriented as the relation's signature expects.
    pub fn oriented(&self) -> (NodeId, NodeId) {
        let (a, _) = self.relation.signature();
        if self.relation.is_symmetric() || self.src.kind == a {
            (self.src, self.dst)
        } else {
            (self.dst, self.src)
        }
    }

    /// Identity of the edge the proposal would create.
    pub fn edge_key(&self) -> (NodeId, NodeId, Relation) {
        let (s, d) = self.oriented();
        if self.relation.is_symmetric() && d < s {
            (d, s, self.relation)
        } else {
            (s, d, self.relation)
        }
    }
}

/// Node sets proposals may connect, keyed by sub-graph (or bulk scope) id.
#[derive(Debug, Clone, Default)]
pub struct ScopeRegistry {
    scopes: BTreeMap<String, BTreeSet<NodeId>>,
}

impl ScopeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_subgraph(&mut self, sg: &InteractionSubGraph) {
        self.scopes
            .insert(sg.id.clone(), sg.nodes.iter().map(|n| n.id).collect());
    }

    pub fn register(&mut self, id: impl Into<String>, nodes: impl IntoIterator<Item = NodeId>) {
        self.scopes.insert(id.into(), nodes.into_iter().collect());
    }

    pub fn contains(&self, id: &str) -> bool {
        self.scopes.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.scopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scopes.is_empty()
    }

    pub fn validate(&self, p: &EdgeProposal) -> Result<(), InteractionError> {
        let scope = self
            .scopes
            .get(&p.subgraph_id)
            .ok_or_else(|| InteractionError::StaleSubgraph(p.subgraph_id.clone()))?;
        p.check_shape()?;
        for n in [p.src, p.dst] {
            if !scope.contains(&n) {
                return Err(InteractionError::InvalidEndpoint {
                    src: p.src,
                    dst: p.dst,
                    relation: p.relation,
                    reason: format!("{n} is not part of sub-graph {}", p.subgraph_id),
                });
            }
        }
        Ok(())
    }
}

/// Every same-label user pair inside each sub-graph, as user–user proposals.
pub fn simulate_interactions(subgraphs: &[InteractionSubGraph], gold: &UserFactuality) -> Vec<EdgeProposal> {
    let mut out = Vec::new();
    for sg in subgraphs {
        let users: Vec<NodeId> = sg.users().collect();
        for (i, &a) in users.iter().enumerate() {
            for &b in &users[i + 1..] {
                if let (Some(la), Some(lb)) = (gold.get(a), gold.get(b)) {
                    if la == lb {
                        out.push(EdgeProposal::simulated(&sg.id, a, b, Relation::InteractUU));
                    }
                }
            }
        }
    }
    out
}

/// Id used for bulk proposals over a whole split.
pub fn bulk_scope_id(split: Partition) -> String {
    format!("bulk-{}", split.as_str())
}

/// A seeded `fraction` of all same-label user pairs among `users`.
pub fn simulate_bulk(
    users: &[NodeId],
    gold: &UserFactuality,
    split: Partition,
    fraction: f64,
    seed: u64,
) -> Result<Vec<EdgeProposal>, InteractionError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(InteractionError::InvalidFraction(fraction));
    }
    let mut sorted: Vec<NodeId> = users.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut pairs = Vec::new();
    for (i, &a) in sorted.iter().enumerate() {
        for &b in &sorted[i + 1..] {
            if let (Some(la), Some(lb)) = (gold.get(a), gold.get(b)) {
                if la == lb {
                    pairs.push((a, b));
                }
            }
        }
    }
    let keep = (fraction * pairs.len() as f64).round() as usize;
    if keep < pairs.len() {
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x62_756c_6b));
        pairs.truncate(keep);
        pairs.sort_unstable();
    }
    let id = bulk_scope_id(split);
    Ok(pairs
        .into_iter()
        .map(|(a, b)| EdgeProposal::simulated(&id, a, b, Relation::InteractUU))
        .collect())
}

/// Adds proposals as interaction edges without scope checks; used for
/// replaying proposals that were validated when accepted. Returns the
/// number of edges that were new.
pub fn apply_proposals(g: &mut InfoGraph, proposals: &[EdgeProposal]) -> Result<usize, InteractionError> {
    for p in proposals {
        p.check_shape()?;
        for n in [p.src, p.dst] {
            if !g.contains(n) {
                return Err(GraphError::UnknownNode(n).into());
            }
        }
    }
    let mut added = 0;
    for p in proposals {
        let (s, d) = p.oriented();
        if g.add_edge(s, d, p.relation)? == EdgeInsert::Added {
            added += 1;
        }
    }
    Ok(added)
}

/// Validates every proposal against its scope, then adds them all.
/// Nothing is added if any proposal is invalid.
pub fn incorporate(
    g: &mut InfoGraph,
    registry: &ScopeRegistry,
    proposals: &[EdgeProposal],
) -> Result<usize, InteractionError> {
    for p in proposals {
        registry.validate(p)?;
    }
    apply_proposals(g, proposals)
}

/// Keys logged proposals by the interaction split of their event
/// (E1-1 or E2-1). Proposals on the training event are dropped.
pub fn group_by_split(
    splits: &SplitSpec,
    proposals: impl IntoIterator<Item = EdgeProposal>,
) -> Result<BTreeMap<Partition, Vec<EdgeProposal>>, InteractionError> {
    let mut out: BTreeMap<Partition, Vec<EdgeProposal>> = BTreeMap::new();
    for p in proposals {
        let split = match splits.require(p.src)?.event() {
            1 => Partition::E1_1,
            2 => Partition::E2_1,
            _ => continue,
        };
        out.entry(split).or_default().push(p);
    }
    Ok(out)
}

/// Append-only JSON-lines file of proposals.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    path: PathBuf,
}

impl InteractionLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one line per proposal and syncs the file before returning.
    pub fn append(&self, proposals: &[EdgeProposal]) -> Result<(), InteractionError> {
        if proposals.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for p in proposals {
            buf.push_str(&serde_json::to_string(p).expect("proposal serializes"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(buf.as_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    /// All proposals in file order; a missing file reads as empty.
    pub fn read(&self) -> Result<Vec<EdgeProposal>, InteractionError> {
        let f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| InteractionError::CorruptLog {
                path: self.path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }

    /// Re-applies every logged proposal to `g`.
    pub fn replay(&self, g: &mut InfoGraph) -> Result<usize, InteractionError> {
        apply_proposals(g, &self.read()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    /// Incorporate, re-encode, evaluate. No weight updates.
    P1FullyInductive,
    /// Incorporate on E1-1, retrain with it, evaluate elsewhere without interactions.
    P2TrainAmplify,
    /// As P2, then also incorporate E2-1 interactions before evaluating E2.
    P3LearnToIncorporate,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [
        Protocol::P1FullyInductive,
        Protocol::P2TrainAmplify,
        Protocol::P3LearnToIncorporate,
    ];

    pub fn number(self) -> u8 {
        match self {
            Protocol::P1FullyInductive => 1,
            Protocol::P2TrainAmplify => 2,
            Protocol::P3LearnToIncorporate => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Protocol::ALL.into_iter().find(|p| p.number() == n)
    }

    pub fn interaction_splits(self) -> &'static [Partition] {
        match self {
            Protocol::P1FullyInductive | Protocol::P3LearnToIncorporate => &[Partition::E1_1, Partition::E2_1],
            Protocol::P2TrainAmplify => &[Partition::E1_1],
        }
    }

    pub fn retrains(self) -> bool {
        self != Protocol::P1FullyInductive
    }

    pub fn eval_splits(self) -> &'static [Partition] {
        match self {
            Protocol::P1FullyInductive => &[Partition::E1_1, Partition::E1_2, Partition::E2_1],
            Protocol::P2TrainAmplify => &[Partition::E1_2, Partition::E2_1],
            Protocol::P3LearnToIncorporate => &[Partition::E1_2, Partition::E2_1, Partition::E2_2],
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.number())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches(['p', 'P']);
        t.parse::<u8>()
            .ok()
            .and_then(Protocol::from_number)
            .ok_or_else(|| format!("unknown protocol {s:?} (1, 2 or 3)"))
    }
}

/// Everything a protocol run reads besides the model and proposals.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolSetup<'a> {
    /// The full multi-event graph without any interaction edges.
    pub graph: &'a InfoGraph,
    pub splits: &'a SplitSpec,
    /// E1-1 sources held out of the retraining loss for checkpoint selection.
    pub dev: &'a [NodeId],
    pub retrain_epochs: usize,
    /// Also report cluster purity per evaluated split.
    pub purity: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub protocol: Protocol,
    pub interaction_splits: Vec<Partition>,
    pub retrain: bool,
    /// Interaction edges present after incorporation that were not before.
    pub edges_added: usize,
    pub reports: Vec<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainReport>,
}

impl ProtocolRun {
    pub fn report(&self, split: Partition) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.split == split.display_name())
    }
}

/// Result of a protocol: the run summary plus the graph and model the
/// evaluation used.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub run: ProtocolRun,
    pub graph: InfoGraph,
    pub model: RgcnModel,
}

fn check_split(
    protocol: Protocol,
    split: Partition,
    splits: &SplitSpec,
    proposals: &[EdgeProposal],
) -> Result<(), InteractionError> {
    if !protocol.interaction_splits().contains(&split) {
        return Err(InteractionError::ProtocolSplitMismatch { protocol, split });
    }
    for p in proposals {
        for n in [p.src, p.dst] {
            if splits.require(n)?.event() != split.event() {
                return Err(InteractionError::InvalidEndpoint {
                    src: p.src,
                    dst: p.dst,
                    relation: p.relation,
                    reason: format!("{n} lies outside the event of {split}"),
                });
            }
        }
    }
    Ok(())
}

fn evaluate(
    model: &RgcnModel,
    g: &InfoGraph,
    setup: &ProtocolSetup<'_>,
    split: Partition,
    edges_added: usize,
) -> Result<EvalReport, InteractionError> {
    let purity_seed = setup.purity.then_some(setup.seed);
    evaluate_split(model, g, setup.splits, split, edges_added, purity_seed)
}

/// Scores `model` on the sources of `split`; with a seed, also clusters
/// every node of the split for purity.
pub fn evaluate_split(
    model: &RgcnModel,
    g: &InfoGraph,
    splits: &SplitSpec,
    split: Partition,
    edges_added: usize,
    purity_seed: Option<u64>,
) -> Result<EvalReport, InteractionError> {
    let sources = splits.members(NodeKind::Source, split);
    let preds = model.predict_sources(g, &sources)?;
    let mut report = EvalReport::from_predictions(split.display_name(), g, &preds, &sources, edges_added)?;
    if let Some(seed) = purity_seed {
        let nodes: Vec<NodeId> = NodeKind::ALL.iter().flat_map(|&k| splits.members(k, split)).collect();
        let emb = model.encode(g, &nodes)?;
        report.purity = Some(purity_by_kind(g, &emb, PurityK::default(), seed)?);
    }
    Ok(report)
}

fn retrain_on_e1(
    base: &RgcnModel,
    setup: &ProtocolSetup<'_>,
    g: &InfoGraph,
) -> Result<(RgcnModel, TrainReport), InteractionError> {
    let dev: BTreeSet<NodeId> = setup.dev.iter().copied().collect();
    let mut loss_sources = setup.splits.members(NodeKind::Source, Partition::Train);
    loss_sources.extend(
        setup
            .splits
            .members(NodeKind::Source, Partition::E1_1)
            .into_iter()
            .filter(|s| !dev.contains(s)),
    );
    let mut model = base.clone();
    let report = train(
        &mut model,
        TrainRequest {
            graph: g,
            sources: &loss_sources,
            dev: Some((g, setup.dev)),
            epochs: setup.retrain_epochs,
        },
    )?;
    Ok((model, report))
}

fn finish(
    protocol: Protocol,
    setup: &ProtocolSetup<'_>,
    graph: InfoGraph,
    model: RgcnModel,
    edges_added: usize,
    training: Option<TrainReport>,
) -> Result<ProtocolOutcome, InteractionError> {
    let reports = protocol
        .eval_splits()
        .iter()
        .map(|&split| evaluate(&model, &graph, setup, split, edges_added))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProtocolOutcome {
        run: ProtocolRun {
            protocol,
            interaction_splits: protocol.interaction_splits().to_vec(),
            retrain: protocol.retrains(),
            edges_added,
            reports,
            training,
        },
        graph,
        model,
    })
}

/// Runs one protocol from `base`. Proposals are keyed by the split they
/// were made on; an absent key means no interactions there.
pub fn run_protocol(
    base: &RgcnModel,
    setup: &ProtocolSetup<'_>,
    protocol: Protocol,
    proposals: &BTreeMap<Partition, Vec<EdgeProposal>>,
) -> Result<ProtocolOutcome, InteractionError> {
    for (&split, ps) in proposals {
        check_split(protocol, split, setup.splits, ps)?;
    }
    let none = Vec::new();
    let on = |p: Partition| proposals.get(&p).unwrap_or(&none);
    let mut g = setup.graph.clone();
    let before = g.interaction_edge_count();
    apply_proposals(&mut g, on(Partition::E1_1))?;
    if protocol == Protocol::P1FullyInductive {
        apply_proposals(&mut g, on(Partition::E2_1))?;
        let added = g.interaction_edge_count() - before;
        return finish(protocol, setup, g, base.clone(), added, None);
    }
    let (model, report) = retrain_on_e1(base, setup, &g)?;
    if protocol == Protocol::P3LearnToIncorporate {
        apply_proposals(&mut g, on(Partition::E2_1))?;
    }
    let added = g.interaction_edge_count() - before;
    finish(protocol, setup, g, model, added, Some(report))
}

/// Protocol 3 from a finished Protocol 2 outcome: same retrained model,
/// plus the E2-1 proposals. Equivalent to `run_protocol` with P3.
pub fn extend_to_p3(
    p2: &ProtocolOutcome,
    setup: &ProtocolSetup<'_>,
    e2_proposals: &[EdgeProposal],
) -> Result<ProtocolOutcome, InteractionError> {
    let protocol = Protocol::P3LearnToIncorporate;
    if p2.run.protocol != Protocol::P2TrainAmplify {
        return Err(InteractionError::ProtocolSplitMismatch {
            protocol: p2.run.protocol,
            split: Partition::E2_1,
        });
    }
    check_split(protocol, Partition::E2_1, setup.splits, e2_proposals)?;
    let mut g = p2.graph.clone();
    apply_proposals(&mut g, e2_proposals)?;
    let added = p2.run.edges_added + g.interaction_edge_count() - p2.graph.interaction_edge_count();
    finish(protocol, setup, g, p2.model.clone(), added, p2.run.training.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FactualityLabel, FeatureDims};
    use crate::sampler::{Criterion, FocalPair};
    use crate::subgraph::{build_subgraph, SubgraphLimits};
    use FactualityLabel::*;

    fn labels(ls: &[Option<FactualityLabel>]) -> UserFactuality {
        UserFactuality(ls.iter().enumerate().map(|(i, l)| (NodeId::user(i), *l)).collect())
    }

    fn users_graph(n: usize) -> InfoGraph {
        let mut g = InfoGraph::new(FeatureDims { user: 1, item: 1 });
        for _ in 0..n {
            g.add_node(NodeKind::User, vec![0.0]).unwrap();
        }
        g
    }

    fn subgraph_over(g: &InfoGraph, a: usize, b: usize, co: &[usize]) -> InteractionSubGraph {
        let mut g = g.clone();
        g.add_source(vec![0.0], High).unwrap();
        let art = g.add_node(NodeKind::Article, vec![0.0]).unwrap();
        for &u in [a, b].iter().chain(co) {
            g.add_edge(NodeId::user(u), art, Relation::Propagates).unwrap();
        }
        build_subgraph(
            &g,
            FocalPair {
                uj: NodeId::user(a),
                uk: NodeId::user(b),
                criterion: Criterion::Random,
                cluster_id: None,
                seed: 0,
            },
            &SubgraphLimits::default(),
        )
        .unwrap()
    }

    #[test]
    fn simulated_pairs_follow_gold_labels() {
        let g = users_graph(4);
        let sg = subgraph_over(&g, 0, 1, &[2]);
        let p = simulate_interactions(&[sg.clone()], &labels(&[Some(Low), Some(Low), Some(High)]));
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].src, p[0].dst), (NodeId::user(0), NodeId::user(1)));
        let p = simulate_interactions(&[sg], &labels(&[Some(Low), Some(Mixed), Some(High)]));
        assert!(p.is_empty());
        let sg = subgraph_over(&g, 0, 1, &[2, 3]);
        let p = simulate_interactions(&[sg], &labels(&[Some(Low), Some(Low), Some(Low), Some(High)]));
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn bulk_counts() {
        let users: Vec<NodeId> = (0..10).map(NodeId::user).collect();
        let gold = labels(&(0..10).map(|i| Some(if i % 2 == 0 { Low } else { High })).collect::<Vec<_>>());
        let all = simulate_bulk(&users, &gold, Partition::E2_1, 1.0, 1).unwrap();
        assert_eq!(all.len(), 20);
        let some = simulate_bulk(&users, &gold, Partition::E2_1, 0.25, 1).unwrap();
        assert_eq!(some.len(), 5);
        assert_eq!(some, simulate_bulk(&users, &gold, Partition::E2_1, 0.25, 1).unwrap());
        assert!(matches!(
            simulate_bulk(&users, &gold, Partition::E2_1, 0.0, 1),
            Err(InteractionError::InvalidFraction(_))
        ));
    }

    #[test]
    fn incorporate_is_idempotent_and_atomic() {
        let mut g = users_graph(4);
        let sg = subgraph_over(&g, 0, 1, &[2]);
        let mut reg = ScopeRegistry::new();
        reg.register_subgraph(&sg);
        let good = EdgeProposal::simulated(&sg.id, NodeId::user(1), NodeId::user(0), Relation::InteractUU);
        assert_eq!(incorporate(&mut g, &reg, &[good.clone()]).unwrap(), 1);
        assert_eq!(incorporate(&mut g, &reg, &[good.clone()]).unwrap(), 0);
        let outside = EdgeProposal::simulated(&sg.id, NodeId::user(0), NodeId::user(3), Relation::InteractUU);
        let fresh = EdgeProposal::simulated(&sg.id, NodeId::user(0), NodeId::user(2), Relation::InteractUU);
        let err = incorporate(&mut g, &reg, &[fresh, outside]).unwrap_err();
        assert!(matches!(err, InteractionError::InvalidEndpoint { .. }));
        assert_eq!(g.interaction_edge_count(), 1);
        let stale = EdgeProposal::simulated("sg-nope", NodeId::user(0), NodeId::user(2), Relation::InteractUU);
        assert!(matches!(incorporate(&mut g, &reg, &[stale]), Err(InteractionError::StaleSubgraph(_))));
    }

    #[test]
    fn shape_checks() {
        let ok = EdgeProposal::simulated("x", NodeId::article(2), NodeId::user(1), Relation::InteractUA);
        ok.check_shape().unwrap();
        assert_eq!(ok.oriented(), (NodeId::user(1), NodeId::article(2)));
        for bad in [
            EdgeProposal::simulated("x", NodeId::user(1), NodeId::user(1), Relation::InteractUU),
            EdgeProposal::simulated("x", NodeId::user(1), NodeId::source(1), Relation::InteractUA),
            EdgeProposal::simulated("x", NodeId::user(1), NodeId::user(2), Relation::FollowsUser),
        ] {
            assert!(bad.check_shape().is_err());
        }
    }

    #[test]
    fn log_round_trip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let log = InteractionLog::new(dir.path().join("log.jsonl"));
        assert!(log.read().unwrap().is_empty());
        let a = EdgeProposal::simulated("s", NodeId::user(0), NodeId::user(1), Relation::InteractUU);
        let mut b = EdgeProposal::simulated("s", NodeId::user(2), NodeId::user(1), Relation::InteractUU);
        b.provenance = Provenance::Human("ann".into());
        b.timestamp = 1_600_000_000;
        log.append(&[a.clone()]).unwrap();
        log.append(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(log.read().unwrap(), vec![a.clone(), b, a]);
        let mut g = users_graph(3);
        assert_eq!(log.replay(&mut g).unwrap(), 2);
        std::fs::write(log.path(), "{not json}\n").unwrap();
        assert!(matches!(log.read(), Err(InteractionError::CorruptLog { line: 1, .. })));
    }

    #[test]
    fn protocol_parsing() {
        assert_eq!("2".parse::<Protocol>().unwrap(), Protocol::P2TrainAmplify);
        assert_eq!("P3".parse::<Protocol>().unwrap(), Protocol::P3LearnToIncorporate);
        assert!("4".parse::<Protocol>().is_err());
        assert!(!Protocol::P1FullyInductive.retrains());
    }
}
