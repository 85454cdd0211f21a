use serde::{Deserialize, Serialize};

use super::RgcnError;
use crate::graph::FactualityLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RgcnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Source nodes per optimisation step; the loss is their mean
    /// cross-entropy, with message passing over the whole fragment.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub use_basis_decomposition: bool,
    pub num_bases: usize,
    /// Route interaction edges through the weights of the base relation
    /// with the same endpoint kinds (user-user through follows, user-article
    /// through propagation, user-source through source follows). When off,
    /// every interaction relation gets its own weights.
    pub tie_interaction_relations: bool,
    /// Keep the parameters with the best dev accuracy seen during training.
    pub select_on_dev: bool,
}

impl Default for RgcnConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            hidden: 128,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            use_basis_decomposition: false,
            num_bases: 4,
            tie_interaction_relations: true,
            select_on_dev: true,
        }
    }
}

impl RgcnConfig {
    /// Smaller model used for the synthetic benchmark and tests.
    pub fn desk() -> Self {
        Self {
            layers: 3,
            hidden: 32,
            learning_rate: 1e-2,
            epochs: 150,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, relation_count: usize) -> Result<(), RgcnError> {
        let bad = |m: String| Err(RgcnError::InvalidConfig(m));
        if self.layers == 0 || self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("layers, hidden, batch_size and epochs must be positive".into());
        }
        if self.hidden < FactualityLabel::COUNT {
            return bad(format!(
                "hidden ({}) must be at least the class count ({})",
                self.hidden,
                FactualityLabel::COUNT
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.use_basis_decomposition && (self.num_bases == 0 || self.num_bases > relation_count)
        {
            return bad(format!(
                "num_bases must be in 1..={relation_count}, got {}",
                self.num_bases
            ));
        }
        Ok(())
    }
}
