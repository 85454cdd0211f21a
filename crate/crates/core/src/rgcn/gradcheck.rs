use serde::{Deserialize, Serialize};

use super::{RgcnError, RgcnModel};
use crate::graph::{FactualityLabel, InfoGraph, NodeId};

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter position and flat index of the worst entry.
    pub worst: Option<(usize, usize)>,
}

/// Relative error with a floor on the denominator, so entries whose true
/// gradient is essentially zero are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares every parameter's analytic gradient of the mean cross-entropy
/// over `targets` against `(L(w+eps) - L(w-eps)) / 2eps`.
pub fn gradient_check(
    model: &RgcnModel,
    g: &InfoGraph,
    targets: &[(NodeId, FactualityLabel)],
    eps: f64,
) -> Result<GradCheck, RgcnError> {
    let active: Vec<NodeId> = targets.iter().map(|(s, _)| *s).collect();
    let frag = model.fragment(g, &active)?;
    let (_, grads) = model.loss_and_gradients(&frag, targets)?;
    let mut probe = model.clone();
    let mut out = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
    };
    for (p, grad) in grads.iter().enumerate() {
        for i in 0..model.parameters()[p].len() {
            let w = model.parameters()[p].data()[i];
            probe.parameters_mut()[p].data_mut()[i] = w + eps;
            let up = probe.loss(&frag, targets)?;
            probe.parameters_mut()[p].data_mut()[i] = w - eps;
            let down = probe.loss(&frag, targets)?;
            probe.parameters_mut()[p].data_mut()[i] = w;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grad.as_ref().map_or(0.0, |m| m.data()[i]);
            let rel = relative_error(analytic, numeric);
            out.max_abs_error = out.max_abs_error.max((analytic - numeric).abs());
            if rel > out.max_rel_error || out.worst.is_none() {
                out.max_rel_error = out.max_rel_error.max(rel);
                out.worst = Some((p, i));
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
