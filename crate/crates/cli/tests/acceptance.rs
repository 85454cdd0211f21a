//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Run alone with `cargo test -p factnet-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use factnet_core::experiment::{run_seeds, ExperimentConfig, SeedResult, Summary};
use factnet_core::graph::{FactualityLabel, FeatureDims, InfoGraph, NodeId, NodeKind, Relation};
use factnet_core::metrics::{accuracy, embedding_change, macro_f1, purity};
use factnet_core::rgcn::{gradient_check, NodeEmbeddings, Predictions, RgcnConfig, RgcnModel, SourcePrediction};
use factnet_core::sampler::{confusion_score, mismatch_pairs, Criterion, UserFactuality};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn label(i: usize) -> FactualityLabel {
    FactualityLabel::from_index(i).unwrap()
}

fn random_graph(seed: u64, n: usize) -> InfoGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = InfoGraph::new(FeatureDims { user: 3, item: 4 });
    let feats = |rng: &mut ChaCha8Rng, d: usize| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    for i in 0..n {
        match i % 3 {
            0 => {
                let l = label(rng.random_range(0..3));
                g.add_source(feats(&mut rng, 4), l).unwrap();
            }
            1 => {
                g.add_node(NodeKind::Article, feats(&mut rng, 4)).unwrap();
            }
            _ => {
                g.add_node(NodeKind::User, feats(&mut rng, 3)).unwrap();
            }
        }
    }
    let nodes: Vec<NodeId> = g.all_nodes().collect();
    for _ in 0..3 * n {
        let a = nodes[rng.random_range(0..nodes.len())];
        let b = nodes[rng.random_range(0..nodes.len())];
        let rel = Relation::ALL
            .into_iter()
            .filter(|r| r.signature() == (a.kind, b.kind))
            .nth(rng.random_range(0..2));
        if let Some(rel) = rel {
            if a != b {
                g.add_edge(a, b, rel).unwrap();
            }
        }
    }
    g
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..10 {
        let g = random_graph(seed, 10);
        let targets: Vec<(NodeId, FactualityLabel)> = g
            .nodes_of(NodeKind::Source)
            .filter_map(|s| g.label(s).map(|l| (s, l)))
            .collect();
        let cfg = RgcnConfig {
            layers: 2,
            hidden: 5,
            seed,
            ..RgcnConfig::default()
        };
        let model = RgcnModel::new(cfg, g.dims()).map_err(|e| e.to_string())?;
        let gc = gradient_check(&model, &g, &targets, 1e-5).map_err(|e| e.to_string())?;
        if gc.checked != model.parameter_count() {
            return Err(format!("seed {seed}: checked {} of {} parameters", gc.checked, model.parameter_count()));
        }
        checked += gc.checked;
        worst = worst.max(gc.max_rel_error);
    }
    let t = start.elapsed();
    check(
        worst < 1e-4 && t < Duration::from_secs(30),
        format!("10 graphs, {checked} parameters, max rel error {worst:.2e}, {:.1}s", t.as_secs_f64()),
    )
}

/// Replays the scan over clusters and members, checking every condition
/// on each emitted pair and that nothing eligible was skipped.
fn mismatch_oracle(
    emb: &NodeEmbeddings,
    labels: &UserFactuality,
    report: &factnet_core::sampler::MismatchReport,
) -> Result<(), String> {
    let cl = &report.clustering;
    // the clustering is a k-means fixed point
    for (u, &c) in &cl.assignment {
        let v = emb.get(*u).unwrap();
        let d = |m: &[f64]| v.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let own = d(&cl.centroids[c]);
        if cl.centroids.iter().any(|m| d(m) < own - 1e-9) {
            return Err(format!("{u} is nearer another centroid"));
        }
    }
    // cluster label = most frequent defined member label, ties to the lower label
    let mut expected_labels = BTreeMap::new();
    for c in 0..cl.k {
        let mut best: Option<(usize, usize)> = None;
        for l in 0..3 {
            let n = cl
                .assignment
                .iter()
                .filter(|(u, &cc)| cc == c && labels.get(**u) == Some(label(l)))
                .count();
            if n > 0 && best.is_none_or(|(_, bn)| n > bn) {
                best = Some((l, n));
            }
        }
        if let Some((l, _)) = best {
            expected_labels.insert(c, label(l));
        }
    }
    if expected_labels != cl.cluster_labels {
        return Err("cluster labels differ from majority count".into());
    }
    let mut used = BTreeSet::new();
    let mut expected_unpaired = Vec::new();
    let mut emitted = report.pairs.iter();
    for c in 0..cl.k {
        let Some(&cl_label) = expected_labels.get(&c) else { continue };
        let members: Vec<NodeId> = cl.assignment.iter().filter(|(_, &cc)| cc == c).map(|(u, _)| *u).collect();
        for &j in &members {
            let Some(fj) = labels.get(j) else { continue };
            if fj == cl_label || used.contains(&j) {
                continue;
            }
            let eligible: BTreeSet<NodeId> = members
                .iter()
                .copied()
                .filter(|&k| k != j && !used.contains(&k))
                .filter(|&k| labels.get(k).is_some_and(|fk| fk == cl_label && fk != fj))
                .collect();
            if eligible.is_empty() {
                expected_unpaired.push(j);
                continue;
            }
            let p = emitted.next().ok_or(format!("missing pair for {j}"))?;
            if p.uj != j || p.cluster_id != Some(c) || !eligible.contains(&p.uk) || p.criterion != Criterion::Mismatch {
                return Err(format!("pair {p:?} violates a condition for {j} in cluster {c}"));
            }
            used.insert(j);
            used.insert(p.uk);
        }
    }
    if emitted.next().is_some() {
        return Err("extra pairs emitted".into());
    }
    if expected_unpaired != report.unpaired {
        return Err("unpaired users differ".into());
    }
    Ok(())
}

fn mismatch() -> Verdict {
    let start = Instant::now();
    let mut pairs = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let centers: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let mut emb = BTreeMap::new();
        let mut labels = BTreeMap::new();
        for i in 0..40 {
            let c = i % 4;
            let u = NodeId::user(i);
            emb.insert(u, centers[c].iter().map(|x| x + rng.random_range(-1.0..1.0)).collect());
            let l = if rng.random_bool(0.15) {
                None
            } else if rng.random_bool(0.7) {
                Some(label(c % 3))
            } else {
                Some(label(rng.random_range(0..3)))
            };
            labels.insert(u, l);
        }
        let emb = NodeEmbeddings(emb);
        let labels = UserFactuality(labels);
        let report = mismatch_pairs(&emb, &labels, 4, seed).map_err(|e| e.to_string())?;
        mismatch_oracle(&emb, &labels, &report).map_err(|e| format!("instance {seed}: {e}"))?;
        pairs += report.pairs.len();
    }
    let t = start.elapsed();
    check(
        t < Duration::from_secs(10),
        format!("20 instances of 40 users, k=4, {pairs} pairs verified, {:.2}s", t.as_secs_f64()),
    )
}

fn confusion_fixture() -> Verdict {
    let mut g = InfoGraph::new(FeatureDims { user: 1, item: 1 });
    let low = g.add_source(vec![0.0], FactualityLabel::Low).map_err(|e| e.to_string())?;
    let high = g.add_source(vec![0.0], FactualityLabel::High).map_err(|e| e.to_string())?;
    let u = g.add_node(NodeKind::User, vec![0.0]).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        let a = g.add_node(NodeKind::Article, vec![0.0]).map_err(|e| e.to_string())?;
        g.add_edge(low, a, Relation::Publishes).map_err(|e| e.to_string())?;
        g.add_edge(u, a, Relation::Propagates).map_err(|e| e.to_string())?;
    }
    g.add_edge(u, high, Relation::FollowsSource).map_err(|e| e.to_string())?;
    let preds: Predictions = [
        (low, SourcePrediction::from_probs([0.7, 0.2, 0.1])),
        (high, SourcePrediction::from_probs([0.05, 0.05, 0.9])),
    ]
    .into();
    let score = confusion_score(&g, &preds, u).map_err(|e| e.to_string())?;
    check(score == 0.75, format!("3 articles at 0.7 and 1 source at 0.9 give {score}"))
}

struct Trend {
    summary: Summary,
    results: Vec<SeedResult>,
    elapsed: Duration,
}

fn trend_run() -> Result<Trend, String> {
    let cfg = ExperimentConfig::default();
    let seeds: Vec<u64> = (0..10).collect();
    let start = Instant::now();
    let results = run_seeds(&cfg, &seeds).map_err(|e| e.to_string())?;
    Ok(Trend {
        summary: Summary::from_results(&results),
        results,
        elapsed: start.elapsed(),
    })
}

fn e2(r: &factnet_core::interaction::ProtocolRun) -> f64 {
    SeedResult::e2_1(r).accuracy
}

fn protocol_one(t: &Trend) -> Verdict {
    let s = &t.summary;
    let gain = 100.0 * (s.p1_acc - s.baseline_acc);
    check(
        s.p1_wins >= 8 && gain >= 3.0 && t.elapsed < Duration::from_secs(600),
        format!(
            "E2-1 accuracy {:.2} -> {:.2} ({gain:+.2} points), wins {}/10, {:.0}s",
            100.0 * s.baseline_acc,
            100.0 * s.p1_acc,
            s.p1_wins,
            t.elapsed.as_secs_f64()
        ),
    )
}

fn sampler_ablation(t: &Trend) -> Verdict {
    let a = &t.summary.ablation_acc;
    let (Some(&m), Some(&r), Some(&c)) = (
        a.get(&Criterion::Mismatch),
        a.get(&Criterion::Random),
        a.get(&Criterion::Confusion),
    ) else {
        return Err("ablation missing a criterion".into());
    };
    check(
        m >= r,
        format!(
            "E2-1 accuracy mismatch {:.2}, random {:.2}, confusion {:.2}",
            100.0 * m,
            100.0 * r,
            100.0 * c
        ),
    )
}

fn protocols_two_three(t: &Trend) -> Verdict {
    let s = &t.summary;
    let p2_wins = t.results.iter().filter(|r| e2(&r.p2) > e2(&r.nit)).count();
    check(
        s.p2_acc > s.nit_acc && s.p3_wins >= 7,
        format!(
            "E2-1 accuracy no-interaction train {:.2}, P2 {:.2} (wins {p2_wins}/10), P3 {:.2}, P3 beats P2 in {}/10",
            100.0 * s.nit_acc,
            100.0 * s.p2_acc,
            100.0 * s.p3_acc,
            s.p3_wins
        ),
    )
}

fn brute_purity(assignment: &[usize], labels: &[FactualityLabel]) -> f64 {
    let clusters: BTreeSet<usize> = assignment.iter().copied().collect();
    let mut hits = 0;
    for c in clusters {
        let mut best = 0;
        for l in 0..3 {
            let n = (0..labels.len())
                .filter(|&i| assignment[i] == c && labels[i] == label(l))
                .count();
            best = best.max(n);
        }
        hits += best;
    }
    hits as f64 / labels.len() as f64
}

fn purity_trend(t: &Trend) -> Verdict {
    use FactualityLabel::*;
    let fixtures: Vec<(Vec<usize>, Vec<FactualityLabel>)> = vec![
        (vec![0, 0, 0, 1, 1, 1], vec![Low, Low, High, High, High, Mixed]),
        (vec![0, 1, 2, 0, 1, 2], vec![Low, Mixed, High, Low, Mixed, High]),
        (vec![0; 5], vec![Low, Mixed, High, Mixed, Low]),
        (vec![3, 3, 7, 7, 7, 9], vec![High, Low, Mixed, Mixed, Low, Low]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut all = fixtures;
    for _ in 0..20 {
        let n = rng.random_range(1..30);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let l: Vec<FactualityLabel> = (0..n).map(|_| label(rng.random_range(0..3))).collect();
        all.push((a, l));
    }
    for (a, l) in &all {
        if purity(a, l) != brute_purity(a, l) {
            return Err(format!("purity mismatch on {a:?} / {l:?}"));
        }
    }
    let (Some(before), Some(after)) = (t.summary.user_purity_before, t.summary.user_purity_after) else {
        return Err("purity not computed".into());
    };
    check(
        after >= before,
        format!(
            "user purity {:.2} -> {:.2}; oracle agrees on {} fixtures",
            100.0 * before,
            100.0 * after,
            all.len()
        ),
    )
}

fn embedding_sanity(t: &Trend) -> Verdict {
    let g = random_graph(5, 30);
    let model = RgcnModel::new(RgcnConfig::desk(), g.dims()).map_err(|e| e.to_string())?;
    let users: Vec<NodeId> = g.nodes_of(NodeKind::User).collect();
    let emb = model.encode(&g, &users).map_err(|e| e.to_string())?;
    let same = embedding_change(&emb, &emb, &users).map_err(|e| e.to_string())?.percent;
    if same != 100.0 {
        return Err(format!("self change is {same}"));
    }
    let mut seen = 0;
    for r in &t.results {
        if r.p1.edges_added > 0 {
            seen += 1;
            if r.embedding_change >= 100.0 {
                return Err(format!("seed {}: {} edges added, change {}", r.seed, r.p1.edges_added, r.embedding_change));
            }
        }
    }
    let mean = t.summary.embedding_change;
    check(
        seen > 0,
        format!("self 100%, after P1 {mean:.2}% on average, below 100 in all {seen} seeds with edges"),
    )
}

fn pipeline(dir: &Path) -> Result<(), String> {
    let steps: &[&[&str]] = &[
        &["datagen"],
        &["train"],
        &["sample", "--split", "E1_1"],
        &["sample", "--split", "E2_1"],
        &["simulate", "--split", "E1_1"],
        &["simulate", "--split", "E2_1"],
        &["run", "--protocol", "1"],
        &["run", "--protocol", "2"],
        &["run", "--protocol", "3"],
        &["eval"],
        &["report"],
    ];
    for step in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_factnet"))
            .arg("--dir")
            .arg(dir)
            .args(["--seed", "11"])
            .args(*step)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{step:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn determinism() -> Verdict {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let mut files: Vec<String> = std::fs::read_dir(a.path())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    for f in &files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            return Err(format!("{f} differs between reruns"));
        }
    }
    check(
        files.iter().any(|f| f == "report.txt") && files.iter().any(|f| f == "report.json"),
        format!("{} files byte-identical across two full runs, {:.0}s", files.len(), start.elapsed().as_secs_f64()),
    )
}

/// Per-class counts straight from the label lists.
fn oracle_scores(gold: &[usize], pred: &[usize]) -> (f64, f64) {
    let n = gold.len();
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    let mut f1_sum = 0.0;
    for c in 0..3 {
        let tp = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p == c).count() as f64;
        let fp = gold.iter().zip(pred).filter(|(g, p)| **g != c && **p == c).count() as f64;
        let fn_ = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p != c).count() as f64;
        f1_sum += if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    }
    (correct as f64 / n as f64, f1_sum / 3.0)
}

fn metric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let n = rng.random_range(1..40);
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let pred: Vec<usize> = gold
            .iter()
            .map(|&g| if rng.random_bool(0.5) { g } else { rng.random_range(0..3) })
            .collect();
        let to_map = |v: &[usize]| -> BTreeMap<NodeId, FactualityLabel> {
            v.iter().enumerate().map(|(i, &l)| (NodeId::source(i), label(l))).collect()
        };
        let (g, p) = (to_map(&gold), to_map(&pred));
        let acc = accuracy(&p, &g).map_err(|e| e.to_string())?;
        let f1 = macro_f1(&p, &g).map_err(|e| e.to_string())?;
        let (oacc, of1) = oracle_scores(&gold, &pred);
        worst = worst.max((acc - oacc).abs()).max((f1 - of1).abs());
    }
    check(worst <= 1e-12, format!("25 prediction sets, max deviation {worst:.1e}"))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    };
    report(1, "gradient correctness", &mut gradients);
    report(2, "mismatch pair oracle", &mut mismatch);
    report(3, "confusion score fixture", &mut confusion_fixture);
    match trend_run() {
        Ok(t) => {
            report(4, "protocol 1 trend", &mut || protocol_one(&t));
            report(5, "sampler ablation", &mut || sampler_ablation(&t));
            report(6, "protocols 2 and 3", &mut || protocols_two_three(&t));
            report(7, "purity trend", &mut || purity_trend(&t));
            report(8, "embedding change", &mut || embedding_sanity(&t));
        }
        Err(e) => {
            for (n, name) in [
                (4, "protocol 1 trend"),
                (5, "sampler ablation"),
                (6, "protocols 2 and 3"),
                (7, "purity trend"),
                (8, "embedding change"),
            ] {
                report(n, name, &mut || Err(format!("benchmark failed: {e}")));
            }
        }
    }
    report(9, "pipeline determinism", &mut determinism);
    report(10, "metric oracles", &mut metric_oracles);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
