use std::path::Path;

use factnet_core::datagen::GenConfig;
use factnet_core::experiment::ExperimentConfig;
use factnet_core::rgcn::RgcnConfig;
use factnet_core::sampler::Criterion;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Pipeline settings read from a TOML or JSON file; command-line flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub breakage: f64,
    pub generator: GenConfig,
    pub model: RgcnConfig,
    pub sampling: SamplingConfig,
    pub serve: ServeConfig,
    pub benchmark: BenchmarkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub split: String,
    pub criterion: Criterion,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seeds: u64,
    pub ablation: bool,
    /// Simulated sub-graphs per interaction split.
    pub graphs_per_split: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        Self {
            seed: 0,
            breakage: exp.breakage,
            generator: exp.generator,
            model: exp.model,
            sampling: SamplingConfig::default(),
            serve: ServeConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            split: "E2_1".into(),
            criterion: Criterion::Mismatch,
            count: 20,
        }
    }
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
        }
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seeds: 10,
            ablation: true,
            graphs_per_split: ExperimentConfig::default().graphs_per_split,
        }
    }
}

impl PipelineConfig {
    /// `.toml` files are read as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            generator: self.generator.clone(),
            breakage: self.breakage,
            model: self.model.clone(),
            graphs_per_split: self.benchmark.graphs_per_split,
            criterion: self.sampling.criterion,
            ablation: self.benchmark.ablation,
            ..ExperimentConfig::default()
        }
    }
}
