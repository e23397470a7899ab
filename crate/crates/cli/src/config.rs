use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unitdub::diffusion::SamplerConfig;
use unitdub::flow::FlowSuiteConfig;
use unitdub::rng::derive_seed;
use unitdub::toy::{ToyTaskSpec, TrainConfig};

use crate::exit::{CliError, CliResult};

/// Seed streams handed to each section when the run seed is resolved.
const TASK_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const SAMPLER_STREAM: u64 = 3;
const FLOW_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_pairs: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { n_pairs: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub nfe_grid: Vec<usize>,
    pub duration_ratios: Vec<f64>,
    pub histogram_bins: usize,
    pub histogram_range: [f64; 2],
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            nfe_grid: vec![1, 4, 16],
            duration_ratios: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            histogram_bins: 20,
            histogram_range: [0.0, 1.0],
        }
    }
}

/// The resolved configuration of a run. Every section seed is derived from
/// the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub task: ToyTaskSpec,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
    pub flow: FlowSuiteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: ToyTaskSpec::standard(),
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            eval: EvalConfig::default(),
            flow: FlowSuiteConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads the config file (or defaults), applies the seed flag and
    /// validates the result.
    pub fn resolve(path: Option<&Path>, seed_flag: Option<u64>) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("invalid config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = seed_flag {
            cfg.seed = seed;
        }
        cfg.task.seed = derive_seed(cfg.seed, TASK_STREAM);
        cfg.train.seed = derive_seed(cfg.seed, TRAIN_STREAM);
        cfg.sampler.seed = derive_seed(cfg.seed, SAMPLER_STREAM);
        cfg.flow.seed = derive_seed(cfg.seed, FLOW_STREAM);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.task.validate().map_err(CliError::config)?;
        self.sampler.validate().map_err(CliError::config)?;
        self.train.schedule.validate().map_err(CliError::config)?;
        self.flow.testbed.validate().map_err(CliError::config)?;
        if !(0.0..1.0).contains(&self.train.label_smoothing) {
            return Err(CliError::config("train.label_smoothing must lie in [0, 1)"));
        }
        if self.eval.nfe_grid.is_empty() || self.eval.nfe_grid.contains(&0) {
            return Err(CliError::config(
                "eval.nfe_grid must be non-empty and positive",
            ));
        }
        if self.eval.duration_ratios.is_empty()
            || self
                .eval
                .duration_ratios
                .iter()
                .any(|r| !(*r > 0.0) || !r.is_finite())
        {
            return Err(CliError::config(
                "eval.duration_ratios must be non-empty and positive",
            ));
        }
        let [lo, hi] = self.eval.histogram_range;
        if self.eval.histogram_bins == 0 || !(lo < hi) {
            return Err(CliError::config(
                "eval histogram needs bins > 0 and lo < hi",
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
