//! Run configuration: one TOML document with a section per stage. Command-line
//! flags override values read from the file.

use std::path::Path;

use dpe_core::evaluation::EvalConfig;
use dpe_core::inference::DEFAULT_K_POOL;
use dpe_core::pipeline::BuildConfig;
use dpe_core::synthetic::SynthConfig;
use dpe_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub k_pool: usize,
    /// Overrides the trained model's lambda when set.
    pub lambda: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: vec![1, 5],
            k_pool: DEFAULT_K_POOL,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub build: BuildConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }

    /// Applies the global `--seed` and `--threads` flags.
    pub fn apply_globals(&mut self, seed: Option<u64>, threads: Option<usize>) {
        if let Some(s) = seed {
            self.train.rng_seed = s;
            self.build.split_seed = s;
            self.synth.seed = s;
        }
        if let Some(t) = threads {
            self.train.threads = t;
        }
    }

    pub fn eval_config(&self, model_lambda: f64, threads: usize) -> EvalConfig {
        EvalConfig {
            ks: self.eval.ks.clone(),
            k_pool: self.eval.k_pool,
            lambda: self.eval.lambda.unwrap_or(model_lambda),
            threads,
        }
    }
}
