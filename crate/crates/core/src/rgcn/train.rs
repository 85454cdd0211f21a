use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RgcnError, RgcnModel};
use crate::graph::{FactualityLabel, InfoGraph, NodeId, NodeKind, Partition, SplitSpec};
use crate::numerics::{Adam, AdamConfig, Matrix, NumericsError};

/// What to fit and, optionally, what to select checkpoints on.
#[derive(Debug, Clone, Copy)]
pub struct TrainRequest<'a> {
    pub graph: &'a InfoGraph,
    /// Labelled sources that enter the loss.
    pub sources: &'a [NodeId],
    /// Held-out sources (and the graph they live in) for checkpoint selection.
    pub dev: Option<(&'a InfoGraph, &'a [NodeId])>,
    pub epochs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Dev accuracy after each epoch (empty without a dev set).
    pub dev_accuracy: Vec<f64>,
    /// Epoch whose parameters were kept, when selecting on dev.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.loss_curve.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_curve.last().copied()
    }
}

fn divergence(epoch: usize) -> impl Fn(RgcnError) -> RgcnError {
    move |e| match e {
        RgcnError::Numerics(NumericsError::NonFiniteValue { .. }) => RgcnError::Divergence { epoch },
        other => other,
    }
}

/// Mini-batch Adam on the mean cross-entropy of `req.sources`.
///
/// Message passing always covers the full closure of the training
/// sources; batches only select which sources enter each step's loss.
/// Sources are reshuffled every epoch from the model seed.
pub fn train(model: &mut RgcnModel, req: TrainRequest<'_>) -> Result<TrainReport, RgcnError> {
    let targets: Vec<(NodeId, FactualityLabel)> = req
        .sources
        .iter()
        .filter_map(|&s| req.graph.label(s).map(|l| (s, l)))
        .collect();
    if targets.is_empty() {
        return Err(RgcnError::EmptyTrainSet);
    }
    let frag = model.fragment(req.graph, req.sources)?;
    let dev = match req.dev {
        Some((g, sources)) if !sources.is_empty() && model.config.select_on_dev => {
            Some((model.fragment(g, sources)?, g, sources))
        }
        _ => None,
    };

    let cfg = model.config.clone();
    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &model.values,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order = targets.clone();
    let mut report = TrainReport::default();
    // (accuracy, -loss) of the kept checkpoint
    let mut best: Option<((f64, f64), Vec<Matrix>)> = None;

    for epoch in 0..req.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = model
                .loss_and_gradients(&frag, batch)
                .map_err(divergence(epoch))?;
            if !loss.is_finite() {
                return Err(RgcnError::Divergence { epoch });
            }
            total += loss * batch.len() as f64;
            let refs: Vec<Option<&Matrix>> = grads.iter().map(Option::as_ref).collect();
            opt.step(&mut model.values, &refs);
            if model.values.iter().any(|m| !m.is_finite()) {
                return Err(RgcnError::Divergence { epoch });
            }
        }
        report.loss_curve.push(total / order.len() as f64);

        if let Some((dev_frag, dev_graph, dev_sources)) = &dev {
            let preds = model
                .predict_fragment(dev_frag, dev_sources)
                .map_err(divergence(epoch))?;
            let mut correct = 0usize;
            let mut nll = 0.0;
            let mut counted = 0usize;
            for (s, p) in &preds {
                if let Some(gold) = dev_graph.label(*s) {
                    counted += 1;
                    correct += usize::from(p.label == gold);
                    nll -= p.probs[gold.index()].max(1e-300).ln();
                }
            }
            let acc = correct as f64 / counted.max(1) as f64;
            report.dev_accuracy.push(acc);
            let key = (acc, -nll / counted.max(1) as f64);
            if best.as_ref().is_none_or(|(k, _)| key >= *k) {
                best = Some((key, model.values.clone()));
                report.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, values)) = best {
        model.values = values;
    }
    Ok(report)
}

/// Trains on every labelled source of the `Train` partition, after
/// checking that the splits keep training and held-out events apart.
pub fn train_on_split(
    model: &mut RgcnModel,
    g: &InfoGraph,
    splits: &SplitSpec,
    dev: Option<&[NodeId]>,
) -> Result<TrainReport, RgcnError> {
    let violations = splits.validate(g)?;
    if !violations.is_empty() {
        return Err(RgcnError::SplitViolation(violations.len()));
    }
    let sources = splits.members(NodeKind::Source, Partition::Train);
    let epochs = model.config.epochs;
    train(
        model,
        TrainRequest {
            graph: g,
            sources: &sources,
            dev: dev.map(|d| (g, d)),
            epochs,
        },
    )
}
