//! Seeded end-to-end benchmark: generate and degrade a graph, train the
//! base model, sample focal pairs, build sub-graphs, simulate the
//! interactor and run every protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{degrade, generate, DatagenError, GenConfig, GroundTruth};
use crate::graph::{GraphError, InfoGraph, NodeId, NodeKind, Partition, SplitSpec};
use crate::interaction::{
    extend_to_p3, run_protocol, simulate_interactions, EdgeProposal, InteractionError, Protocol,
    ProtocolRun, ProtocolSetup,
};
use crate::metrics::{embedding_change, EvalReport, MetricsError};
use crate::par;
use crate::rgcn::{train, RgcnConfig, RgcnError, RgcnModel, TrainReport, TrainRequest};
use crate::sampler::{
    confusion_pairs, confusion_scores, default_k, limit_pairs, mismatch_pairs, random_pairs,
    user_factuality, Criterion, FocalPair, LabelSource, SamplerError,
};
use crate::subgraph::{build_subgraph, InteractionSubGraph, SubgraphLimits};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] RgcnError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<ExperimentError>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: GenConfig,
    pub breakage: f64,
    pub model: RgcnConfig,
    /// Sub-graphs the interactor sees per interaction split.
    pub graphs_per_split: usize,
    /// Sampling criterion behind the protocol runs.
    pub criterion: Criterion,
    /// Also run Protocol 1 once per sampling criterion.
    pub ablation: bool,
    pub limits: SubgraphLimits,
    /// Epochs for Protocol 2/3 retraining; half the base epochs when unset.
    pub retrain_epochs: Option<usize>,
    pub purity: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GenConfig::default(),
            breakage: 0.5,
            model: RgcnConfig::desk(),
            graphs_per_split: 40,
            criterion: Criterion::Mismatch,
            ablation: true,
            limits: SubgraphLimits::uncapped(),
            retrain_epochs: None,
            purity: true,
        }
    }
}

impl ExperimentConfig {
    pub fn retrain_epochs(&self) -> usize {
        self.retrain_epochs.unwrap_or(self.model.epochs / 2).max(1)
    }
}

/// A generated, degraded graph ready for training.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub graph: InfoGraph,
    pub splits: SplitSpec,
    pub truth: GroundTruth,
    /// Every other E1-1 source, used for checkpoint selection.
    pub dev: Vec<NodeId>,
}

impl Benchmark {
    pub fn build(generator: &GenConfig, breakage: f64) -> Result<Self, ExperimentError> {
        let (clean, splits, truth) = generate(generator)?;
        let graph = degrade(&clean, &truth, breakage)?;
        let dev = dev_sources(&splits);
        Ok(Self { graph, splits, truth, dev })
    }

    pub fn setup(&self, retrain_epochs: usize, purity: bool, seed: u64) -> ProtocolSetup<'_> {
        ProtocolSetup {
            graph: &self.graph,
            splits: &self.splits,
            dev: &self.dev,
            retrain_epochs,
            purity,
            seed,
        }
    }

    /// Trains a fresh model on the training split, selecting on dev.
    pub fn train_base(&self, config: &RgcnConfig) -> Result<(RgcnModel, TrainReport), ExperimentError> {
        let mut model = RgcnModel::new(config.clone(), self.graph.dims())?;
        let sources = self.splits.members(NodeKind::Source, Partition::Train);
        let report = train(
            &mut model,
            TrainRequest {
                graph: &self.graph,
                sources: &sources,
                dev: Some((&self.graph, &self.dev)),
                epochs: config.epochs,
            },
        )?;
        Ok((model, report))
    }
}

/// Odd-positioned E1-1 sources in node order.
pub fn dev_sources(splits: &SplitSpec) -> Vec<NodeId> {
    splits
        .members(NodeKind::Source, Partition::E1_1)
        .into_iter()
        .skip(1)
        .step_by(2)
        .collect()
}

/// Focal pairs for one interaction split under `criterion`, capped at
/// `budget`. User labels come from the model's source predictions.
pub fn sample_pairs(
    g: &InfoGraph,
    splits: &SplitSpec,
    model: &RgcnModel,
    split: Partition,
    criterion: Criterion,
    budget: usize,
    seed: u64,
) -> Result<Vec<FocalPair>, ExperimentError> {
    let users = splits.members(NodeKind::User, split);
    let sources = event_members(splits, NodeKind::Source, split.event());
    let preds = model.predict_sources(g, &sources)?;
    let labels = user_factuality(g, &users, LabelSource::Predicted(&preds))?;
    let pairs = match criterion {
        Criterion::Random => limit_pairs(random_pairs(&labels, seed)?, budget, seed),
        Criterion::Confusion => {
            let mut p = confusion_pairs(&confusion_scores(g, &preds, &users)?, seed)?;
            p.truncate(budget);
            p
        }
        Criterion::Mismatch => {
            let emb = model.encode(g, &users)?;
            let report = mismatch_pairs(&emb, &labels, default_k(users.len()), seed)?;
            limit_pairs(report.pairs, budget, seed)
        }
    };
    Ok(pairs)
}

/// Every node of `kind` in any partition of `event`.
pub fn event_members(splits: &SplitSpec, kind: NodeKind, event: u8) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Partition::ALL
        .iter()
        .filter(|p| p.event() == event)
        .flat_map(|&p| splits.members(kind, p))
        .collect();
    out.sort_unstable();
    out
}

/// Sub-graphs for `pairs` and the simulated interactor's proposals on
/// them. Gold user labels are the majority over each user's linked
/// sources and articles.
pub fn simulate_split(
    g: &InfoGraph,
    pairs: &[FocalPair],
    limits: &SubgraphLimits,
) -> Result<(Vec<InteractionSubGraph>, Vec<EdgeProposal>), ExperimentError> {
    let subgraphs = pairs
        .iter()
        .map(|&p| build_subgraph(g, p, limits))
        .collect::<Result<Vec<_>, _>>()?;
    let mut users: Vec<NodeId> = subgraphs.iter().flat_map(|sg| sg.users()).collect();
    users.sort_unstable();
    users.dedup();
    let gold = user_factuality(g, &users, LabelSource::Gold)?;
    let proposals = simulate_interactions(&subgraphs, &gold);
    Ok((subgraphs, proposals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub base_training: TrainReport,
    /// Protocol 1 without interactions.
    pub baseline: ProtocolRun,
    pub p1: ProtocolRun,
    /// E2-1 under Protocol 1, per sampling criterion.
    pub ablation: BTreeMap<Criterion, EvalReport>,
    /// Protocol 2 without interactions ("no interactions, train").
    pub nit: ProtocolRun,
    pub p2: ProtocolRun,
    pub p3: ProtocolRun,
    /// Mean cosine similarity (%) of E2-1 user embeddings before and
    /// after Protocol 1 incorporation.
    pub embedding_change: f64,
    pub pairs: BTreeMap<Partition, Vec<FocalPair>>,
}

impl SeedResult {
    pub fn e2_1(run: &ProtocolRun) -> &EvalReport {
        run.report(Partition::E2_1).expect("every protocol evaluates E2-1")
    }
}

/// Runs the whole benchmark for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult, ExperimentError> {
    let bench = Benchmark::build(&cfg.generator.clone().with_seed(seed), cfg.breakage)?;
    let (base, base_training) = bench.train_base(&cfg.model.clone().with_seed(seed))?;
    let setup = bench.setup(cfg.retrain_epochs(), cfg.purity, seed);

    let criteria: Vec<Criterion> = if cfg.ablation {
        Criterion::ALL.to_vec()
    } else {
        vec![cfg.criterion]
    };
    let mut proposals_by: BTreeMap<Criterion, BTreeMap<Partition, Vec<EdgeProposal>>> = BTreeMap::new();
    let mut pairs = BTreeMap::new();
    for &c in &criteria {
        let mut by_split = BTreeMap::new();
        for split in [Partition::E1_1, Partition::E2_1] {
            let p = sample_pairs(&bench.graph, &bench.splits, &base, split, c, cfg.graphs_per_split, seed)?;
            let (_, proposals) = simulate_split(&bench.graph, &p, &cfg.limits)?;
            by_split.insert(split, proposals);
            if c == cfg.criterion {
                pairs.insert(split, p);
            }
        }
        proposals_by.insert(c, by_split);
    }
    let proposals = &proposals_by[&cfg.criterion];

    let baseline = run_protocol(&base, &setup, Protocol::P1FullyInductive, &BTreeMap::new())?;
    let mut ablation = BTreeMap::new();
    let mut p1 = None;
    for (&c, props) in &proposals_by {
        let out = run_protocol(&base, &setup, Protocol::P1FullyInductive, props)?;
        ablation.insert(c, SeedResult::e2_1(&out.run).clone());
        if c == cfg.criterion {
            p1 = Some(out);
        }
    }
    let p1 = p1.expect("protocol criterion is always sampled");

    let scope = bench.splits.members(NodeKind::User, Partition::E2_1);
    let before = base.encode(&bench.graph, &scope)?;
    let after = base.encode(&p1.graph, &scope)?;
    let change = embedding_change(&before, &after, &scope)?.percent;

    let nit = run_protocol(&base, &setup, Protocol::P2TrainAmplify, &BTreeMap::new())?;
    let e1_only: BTreeMap<Partition, Vec<EdgeProposal>> = proposals
        .iter()
        .filter(|(p, _)| **p == Partition::E1_1)
        .map(|(p, v)| (*p, v.clone()))
        .collect();
    let p2 = run_protocol(&base, &setup, Protocol::P2TrainAmplify, &e1_only)?;
    let p3 = extend_to_p3(&p2, &setup, &proposals[&Partition::E2_1])?;

    Ok(SeedResult {
        seed,
        base_training,
        baseline: baseline.run,
        p1: p1.run,
        ablation,
        nit: nit.run,
        p2: p2.run,
        p3: p3.run,
        embedding_change: change,
        pairs,
    })
}

/// Runs every seed, in parallel when the feature is on.
pub fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<SeedResult>, ExperimentError> {
    par::map(seeds, |&s| {
        run_seed(cfg, s).map_err(|e| ExperimentError::Seed {
            seed: s,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect()
}

/// Cross-seed aggregates of E2-1 accuracy and user purity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: usize,
    pub baseline_acc: f64,
    pub p1_acc: f64,
    /// Seeds where Protocol 1 beat the baseline on E2-1.
    pub p1_wins: usize,
    pub ablation_acc: BTreeMap<Criterion, f64>,
    pub nit_acc: f64,
    pub p2_acc: f64,
    pub p3_acc: f64,
    /// Seeds where Protocol 3 beat Protocol 2 on E2-1.
    pub p3_wins: usize,
    pub user_purity_before: Option<f64>,
    pub user_purity_after: Option<f64>,
    pub embedding_change: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

impl Summary {
    pub fn from_results(results: &[SeedResult]) -> Self {
        let acc = |f: fn(&SeedResult) -> &ProtocolRun| mean(results.iter().map(|r| SeedResult::e2_1(f(r)).accuracy));
        let wins = |a: fn(&SeedResult) -> &ProtocolRun, b: fn(&SeedResult) -> &ProtocolRun| {
            results
                .iter()
                .filter(|r| SeedResult::e2_1(a(r)).accuracy > SeedResult::e2_1(b(r)).accuracy)
                .count()
        };
        let user_purity = |f: fn(&SeedResult) -> &ProtocolRun| {
            let v: Option<Vec<f64>> = results
                .iter()
                .map(|r| SeedResult::e2_1(f(r)).purity.map(|p| p.users))
                .collect();
            v.map(|v| mean(v.into_iter()))
        };
        let mut ablation_acc = BTreeMap::new();
        for c in Criterion::ALL {
            let v: Vec<f64> = results
                .iter()
                .filter_map(|r| r.ablation.get(&c).map(|e| e.accuracy))
                .collect();
            if v.len() == results.len() && !v.is_empty() {
                ablation_acc.insert(c, mean(v.into_iter()));
            }
        }
        Self {
            seeds: results.len(),
            baseline_acc: acc(|r| &r.baseline),
            p1_acc: acc(|r| &r.p1),
            p1_wins: wins(|r| &r.p1, |r| &r.baseline),
            ablation_acc,
            nit_acc: acc(|r| &r.nit),
            p2_acc: acc(|r| &r.p2),
            p3_acc: acc(|r| &r.p3),
            p3_wins: wins(|r| &r.p3, |r| &r.p2),
            user_purity_before: user_purity(|r| &r.baseline),
            user_purity_after: user_purity(|r| &r.p1),
            embedding_change: mean(results.iter().map(|r| r.embedding_change)),
        }
    }
}
