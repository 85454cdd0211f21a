use std::collections::BTreeMap;

use factnet_core::datagen::GenConfig;
use factnet_core::experiment::{sample_pairs, simulate_split, Benchmark};
use factnet_core::graph::{NodeId, NodeKind, Partition, Relation};
use factnet_core::interaction::{
    evaluate_split, extend_to_p3, group_by_split, run_protocol, EdgeProposal, InteractionError, Protocol,
};
use factnet_core::rgcn::{RgcnConfig, RgcnModel};
use factnet_core::sampler::Criterion;
use factnet_core::subgraph::SubgraphLimits;

struct Fixture {
    bench: Benchmark,
    base: RgcnModel,
    proposals: BTreeMap<Partition, Vec<EdgeProposal>>,
}

fn fixture(seed: u64) -> Fixture {
    let gen = GenConfig {
        sources_per_class: 8,
        users_per_event: 90,
        ..GenConfig::default()
    }
    .with_seed(seed);
    let bench = Benchmark::build(&gen, 0.5).unwrap();
    let config = RgcnConfig {
        epochs: 6,
        ..RgcnConfig::desk()
    }
    .with_seed(seed);
    let (base, _) = bench.train_base(&config).unwrap();
    let mut proposals = BTreeMap::new();
    for split in [Partition::E1_1, Partition::E2_1] {
        let pairs = sample_pairs(&bench.graph, &bench.splits, &base, split, Criterion::Random, 4, seed).unwrap();
        let (_, ps) = simulate_split(&bench.graph, &pairs, &SubgraphLimits::default()).unwrap();
        assert!(!ps.is_empty());
        proposals.insert(split, ps);
    }
    Fixture { bench, base, proposals }
}

fn only(fx: &Fixture, split: Partition) -> BTreeMap<Partition, Vec<EdgeProposal>> {
    BTreeMap::from([(split, fx.proposals[&split].clone())])
}

#[test]
fn p1_without_proposals_is_the_baseline() {
    let fx = fixture(1);
    let setup = fx.bench.setup(3, true, 1);
    let out = run_protocol(&fx.base, &setup, Protocol::P1FullyInductive, &BTreeMap::new()).unwrap();
    assert_eq!(out.run.edges_added, 0);
    assert!(out.run.training.is_none());
    for report in &out.run.reports {
        let split: Partition = report.split.replace('-', "_").parse().unwrap();
        let direct = evaluate_split(&fx.base, &fx.bench.graph, &fx.bench.splits, split, 0, Some(1)).unwrap();
        assert_eq!(report, &direct);
    }
    assert_eq!(out.model.parameters(), fx.base.parameters());
}

#[test]
fn p3_without_e2_proposals_matches_p2() {
    let fx = fixture(2);
    let setup = fx.bench.setup(3, false, 2);
    let e1 = only(&fx, Partition::E1_1);
    let p2 = run_protocol(&fx.base, &setup, Protocol::P2TrainAmplify, &e1).unwrap();
    let p3 = run_protocol(&fx.base, &setup, Protocol::P3LearnToIncorporate, &e1).unwrap();
    for split in [Partition::E1_2, Partition::E2_1] {
        assert_eq!(p2.run.report(split), p3.run.report(split));
    }
    assert_eq!(p2.model.parameters(), p3.model.parameters());
}

#[test]
fn extending_p2_equals_running_p3_directly() {
    let fx = fixture(3);
    let setup = fx.bench.setup(3, true, 3);
    let p2 = run_protocol(&fx.base, &setup, Protocol::P2TrainAmplify, &only(&fx, Partition::E1_1)).unwrap();
    let extended = extend_to_p3(&p2, &setup, &fx.proposals[&Partition::E2_1]).unwrap();
    let direct = run_protocol(&fx.base, &setup, Protocol::P3LearnToIncorporate, &fx.proposals).unwrap();
    assert_eq!(extended.run, direct.run);
    assert!(extended.run.edges_added > p2.run.edges_added);

    let p1 = run_protocol(&fx.base, &setup, Protocol::P1FullyInductive, &BTreeMap::new()).unwrap();
    assert!(matches!(
        extend_to_p3(&p1, &setup, &[]),
        Err(InteractionError::ProtocolSplitMismatch { .. })
    ));
}

#[test]
fn protocols_reject_interactions_on_the_wrong_split() {
    let fx = fixture(4);
    let setup = fx.bench.setup(3, false, 4);
    let err = run_protocol(&fx.base, &setup, Protocol::P2TrainAmplify, &only(&fx, Partition::E2_1)).unwrap_err();
    assert!(matches!(
        err,
        InteractionError::ProtocolSplitMismatch {
            protocol: Protocol::P2TrainAmplify,
            split: Partition::E2_1
        }
    ));
    let misfiled = BTreeMap::from([(Partition::E1_1, fx.proposals[&Partition::E2_1].clone())]);
    let err = run_protocol(&fx.base, &setup, Protocol::P1FullyInductive, &misfiled).unwrap_err();
    assert!(matches!(err, InteractionError::InvalidEndpoint { .. }), "{err}");
}

#[test]
fn incorporation_only_adds_interaction_edges() {
    let fx = fixture(5);
    let setup = fx.bench.setup(3, false, 5);
    let g0 = &fx.bench.graph;
    let out = run_protocol(&fx.base, &setup, Protocol::P1FullyInductive, &fx.proposals).unwrap();
    let g1 = &out.graph;
    let nodes: Vec<NodeId> = g0.all_nodes().collect();
    assert_eq!(nodes, g1.all_nodes().collect::<Vec<_>>());
    for &n in &nodes {
        assert_eq!(g0.features(n).unwrap(), g1.features(n).unwrap());
        if n.kind == NodeKind::Source {
            assert_eq!(g0.label(n), g1.label(n));
        }
    }
    let before = g0.edges();
    assert_eq!(&g1.edges()[..before.len()], before);
    let added = &g1.edges()[before.len()..];
    assert!(added.iter().all(|e| e.rel.is_interaction()));
    assert_eq!(added.len(), out.run.edges_added);
    assert_eq!(g0.interaction_edge_count(), 0);
}

#[test]
fn duplicate_proposals_count_once() {
    let fx = fixture(6);
    let setup = fx.bench.setup(3, false, 6);
    let mut doubled = fx.proposals.clone();
    for ps in doubled.values_mut() {
        let copy: Vec<EdgeProposal> = ps
            .iter()
            .map(|p| EdgeProposal::simulated(&p.subgraph_id, p.dst, p.src, Relation::InteractUU))
            .collect();
        ps.extend(copy);
    }
    let once = run_protocol(&fx.base, &setup, Protocol::P1FullyInductive, &fx.proposals).unwrap();
    let twice = run_protocol(&fx.base, &setup, Protocol::P1FullyInductive, &doubled).unwrap();
    assert_eq!(once.run, twice.run);
}

#[test]
fn logged_proposals_group_by_event() {
    let fx = fixture(7);
    let all: Vec<EdgeProposal> = fx.proposals.values().flatten().cloned().collect();
    let grouped = group_by_split(&fx.bench.splits, all).unwrap();
    assert_eq!(grouped, fx.proposals);
    let train_users = fx.bench.splits.members(NodeKind::User, Partition::Train);
    let train_only = EdgeProposal::simulated("x", train_users[0], train_users[1], Relation::InteractUU);
    assert!(group_by_split(&fx.bench.splits, [train_only]).unwrap().is_empty());
}
