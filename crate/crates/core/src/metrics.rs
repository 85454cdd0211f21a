//! Accuracy, macro-F1, cluster purity and embedding change.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{FactualityLabel, InfoGraph, NodeId, NodeKind};
use crate::kmeans::{kmeans, KMeansConfig, KMeansError};
use crate::numerics::dot;
use crate::rgcn::{NodeEmbeddings, Predictions};
use crate::sampler::{default_k, user_factuality, LabelSource, SamplerError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("{0} is present on one side only")]
    KeyMismatch(NodeId),
    #[error("need at least {k} {kind} items with embeddings and labels, have {n}")]
    TooFewItems { kind: NodeKind, n: usize, k: usize },
    #[error("every vector pair had a zero vector")]
    AllZeroVectors,
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// `counts[gold][pred]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (FactualityLabel, FactualityLabel)>) -> Self {
        let mut counts = [[0; 3]; 3];
        for (gold, pred) in pairs {
            counts[gold.index()][pred.index()] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let trace: usize = (0..3).map(|i| self.counts[i][i]).sum();
        trace as f64 / self.total() as f64
    }

    /// Per-class F1; a class with no gold and no predicted members scores 0.
    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.counts[class][class] as f64;
        let predicted: usize = (0..3).map(|g| self.counts[g][class]).sum();
        let actual: usize = self.counts[class].iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    /// Unweighted mean of the three per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        (0..3).map(|c| self.f1(c)).sum::<f64>() / 3.0
    }
}

fn paired(
    preds: &BTreeMap<NodeId, FactualityLabel>,
    gold: &BTreeMap<NodeId, FactualityLabel>,
) -> Result<ConfusionMatrix, MetricsError> {
    if preds.is_empty() && gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(n) = preds.keys().find(|n| !gold.contains_key(n)) {
        return Err(MetricsError::KeyMismatch(*n));
    }
    if let Some(n) = gold.keys().find(|n| !preds.contains_key(n)) {
        return Err(MetricsError::KeyMismatch(*n));
    }
    Ok(ConfusionMatrix::from_pairs(
        gold.iter().map(|(n, g)| (*g, preds[n])),
    ))
}

pub fn confusion(
    preds: &BTreeMap<NodeId, FactualityLabel>,
    gold: &BTreeMap<NodeId, FactualityLabel>,
) -> Result<ConfusionMatrix, MetricsError> {
    paired(preds, gold)
}

pub fn accuracy(
    preds: &BTreeMap<NodeId, FactualityLabel>,
    gold: &BTreeMap<NodeId, FactualityLabel>,
) -> Result<f64, MetricsError> {
    Ok(paired(preds, gold)?.accuracy())
}

pub fn macro_f1(
    preds: &BTreeMap<NodeId, FactualityLabel>,
    gold: &BTreeMap<NodeId, FactualityLabel>,
) -> Result<f64, MetricsError> {
    Ok(paired(preds, gold)?.macro_f1())
}

/// Fraction of items matching their cluster's most frequent class.
pub fn purity(assignment: &[usize], labels: &[FactualityLabel]) -> f64 {
    let mut per: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for (&c, l) in assignment.iter().zip(labels) {
        per.entry(c).or_default()[l.index()] += 1;
    }
    let hits: usize = per.values().map(|v| *v.iter().max().unwrap()).sum();
    hits as f64 / labels.len() as f64
}

/// k-means the given vectors and score the clustering against `labels`.
pub fn cluster_purity(
    kind: NodeKind,
    items: &[(Vec<f64>, FactualityLabel)],
    k: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    if items.len() < k || items.is_empty() {
        return Err(MetricsError::TooFewItems {
            kind,
            n: items.len(),
            k,
        });
    }
    let points: Vec<Vec<f64>> = items.iter().map(|(v, _)| v.clone()).collect();
    let labels: Vec<FactualityLabel> = items.iter().map(|(_, l)| *l).collect();
    let km = kmeans(&points, &KMeansConfig::new(k, seed))?;
    Ok(purity(&km.assignment, &labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Purity {
    pub sources: f64,
    pub articles: f64,
    pub users: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurityK {
    pub sources: Option<usize>,
    pub articles: Option<usize>,
    pub users: Option<usize>,
}

impl Default for PurityK {
    /// Three clusters for sources; the sampler's default for the rest.
    fn default() -> Self {
        Self {
            sources: Some(3),
            articles: None,
            users: None,
        }
    }
}

/// Gold label per node: sources carry their own, articles inherit their
/// publisher's, users the majority over their linked sources/articles.
pub fn gold_labels(
    g: &InfoGraph,
    nodes: impl IntoIterator<Item = NodeId>,
) -> Result<BTreeMap<NodeId, FactualityLabel>, MetricsError> {
    let mut out = BTreeMap::new();
    let mut users = Vec::new();
    for n in nodes {
        let l = match n.kind {
            NodeKind::Source => g.label(n),
            NodeKind::Article => g.publisher(n).and_then(|s| g.label(s)),
            NodeKind::User => {
                users.push(n);
                None
            }
        };
        if let Some(l) = l {
            out.insert(n, l);
        }
    }
    out.extend(user_factuality(g, &users, LabelSource::Gold)?.defined());
    Ok(out)
}

/// Purity per node kind over every embedded node with a gold label.
pub fn purity_by_kind(
    g: &InfoGraph,
    emb: &NodeEmbeddings,
    k: PurityK,
    seed: u64,
) -> Result<Purity, MetricsError> {
    let gold = gold_labels(g, emb.nodes())?;
    let mut by_kind: [Vec<(Vec<f64>, FactualityLabel)>; 3] = Default::default();
    for (n, v) in emb.iter() {
        if let Some(&l) = gold.get(&n) {
            by_kind[n.kind as usize].push((v.to_vec(), l));
        }
    }
    let score = |kind: NodeKind, k: Option<usize>| {
        let items = &by_kind[kind as usize];
        cluster_purity(kind, items, k.unwrap_or_else(|| default_k(items.len())), seed)
    };
    Ok(Purity {
        sources: score(NodeKind::Source, k.sources)?,
        articles: score(NodeKind::Article, k.articles)?,
        users: score(NodeKind::User, k.users)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingChange {
    /// Mean cosine similarity times 100; lower means more change.
    pub percent: f64,
    pub compared: usize,
    /// Users skipped because one of their vectors is zero.
    pub zero_vectors: Vec<NodeId>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot(a, b) / (na * nb).sqrt())
}

/// Mean cosine similarity (as a percentage) between each scoped node's
/// embedding before and after.
pub fn embedding_change(
    before: &NodeEmbeddings,
    after: &NodeEmbeddings,
    scope: &[NodeId],
) -> Result<EmbeddingChange, MetricsError> {
    if scope.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    let mut compared = 0;
    let mut zero = Vec::new();
    for &u in scope {
        let a = before.get(u).ok_or(MetricsError::KeyMismatch(u))?;
        let b = after.get(u).ok_or(MetricsError::KeyMismatch(u))?;
        match cosine(a, b) {
            Some(c) => {
                sum += c;
                compared += 1;
            }
            None => zero.push(u),
        }
    }
    if compared == 0 {
        return Err(MetricsError::AllZeroVectors);
    }
    Ok(EmbeddingChange {
        percent: 100.0 * sum / compared as f64,
        compared,
        zero_vectors: zero,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub edges_added: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<Purity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_change: Option<f64>,
}

impl EvalReport {
    /// Scores predictions for `sources` against the gold labels in `g`.
    pub fn from_predictions(
        split: impl Into<String>,
        g: &InfoGraph,
        preds: &Predictions,
        sources: &[NodeId],
        edges_added: usize,
    ) -> Result<Self, MetricsError> {
        let gold: BTreeMap<NodeId, FactualityLabel> =
            sources.iter().filter_map(|&s| g.label(s).map(|l| (s, l))).collect();
        let pred: BTreeMap<NodeId, FactualityLabel> = gold
            .keys()
            .map(|s| preds.get(s).map(|p| (*s, p.label)).ok_or(MetricsError::KeyMismatch(*s)))
            .collect::<Result<_, _>>()?;
        let cm = paired(&pred, &gold)?;
        Ok(Self {
            split: split.into(),
            n: cm.total(),
            accuracy: cm.accuracy(),
            macro_f1: cm.macro_f1(),
            edges_added,
            purity: None,
            embedding_change: None,
        })
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Aligned plain-text table, one row per report: split, Acc, F1, # Edges,
/// plus purity and embedding-change columns when any row has them.
pub fn render_table(rows: &[(String, EvalReport)]) -> String {
    let with_purity = rows.iter().any(|(_, r)| r.purity.is_some());
    let with_change = rows.iter().any(|(_, r)| r.embedding_change.is_some());
    let mut header = vec!["Setting", "Split", "Acc", "F1", "# Edges"];
    if with_purity {
        header.extend(["Pur(S)", "Pur(A)", "Pur(U)"]);
    }
    if with_change {
        header.push("Emb %");
    }
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (name, r) in rows {
        let mut row = vec![
            name.clone(),
            r.split.clone(),
            pct(r.accuracy),
            pct(r.macro_f1),
            r.edges_added.to_string(),
        ];
        if with_purity {
            match r.purity {
                Some(p) => row.extend([pct(p.sources), pct(p.articles), pct(p.users)]),
                None => row.extend(["-".into(), "-".into(), "-".into()]),
            }
        }
        if with_change {
            row.push(r.embedding_change.map_or("-".into(), |c| format!("{c:.2}")));
        }
        table.push(row);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c < 2 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}
