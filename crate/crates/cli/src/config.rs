//! The run configuration file (TOML). Unknown keys are rejected.

use anyhow::{bail, Context, Result};
use quadrec::harness::{Algorithm, PriorSpec, TrialSpec, DEFAULT_SUCCESS_THRESHOLD};
use quadrec::{PgdConfig, SparseConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: Problem,
    pub prior: PriorSpec,
    pub algorithm: AlgorithmSection,
    pub experiment: Experiment,
    pub output: Output,
}

/// Problem size and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Problem {
    /// Ambient dimension (default 100).
    pub n: usize,
    /// Sparsity or latent dimension (default 10).
    pub k: usize,
    /// Number of measurements (default 200).
    pub m: usize,
    /// Base seed (default 0); `--seed` overrides it.
    pub seed: u64,
    /// Largest ensemble kept in memory, in bytes (default 2 GiB).
    pub memory_budget: Option<u64>,
}

impl Default for Problem {
    fn default() -> Self {
        Self { n: 100, k: 10, m: 200, seed: 0, memory_budget: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    /// `wf`, `twf`, `ppower`, `pgd` or `ppower_then_pgd` (default `twf`).
    pub name: Algorithm,
    /// Relative distance that counts as a success (default 1e-3).
    pub success_threshold: f64,
    pub sparse: SparseConfig,
    pub pgd: PgdConfig,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            name: Algorithm::Twf,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            sparse: SparseConfig::default(),
            pgd: PgdConfig::default(),
        }
    }
}

/// Experiment axes. Axes have no defaults: grids and sweeps require them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    pub k_values: Option<Vec<usize>>,
    pub m_values: Option<Vec<usize>>,
    /// Trials per cell or per measurement count (default 100).
    pub trials: usize,
    /// Algorithms compared by a generative sweep (default: all three).
    pub sweep_algorithms: Vec<Algorithm>,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            k_values: None,
            m_values: None,
            trials: 100,
            sweep_algorithms: vec![Algorithm::PPower, Algorithm::Pgd, Algorithm::PPowerThenPgd],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    /// Output directory (default `out`); `--out` overrides it.
    pub directory: String,
    /// Also write one row per trial to `trials.csv` (default true).
    pub write_trials: bool,
}

impl Default for Output {
    fn default() -> Self {
        Self { directory: "out".into(), write_trials: true }
    }
}

/// A parsed configuration together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Verbatim text of the config file, or the rendered defaults.
    pub text: String,
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).context("invalid config")?;
        Ok(Self { config, text: text.to_string() })
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in {}", p.display()))
            }
            None => {
                let config = RunConfig::default();
                let text = toml::to_string(&config).context("cannot render default config")?;
                Ok(Self { config, text })
            }
        }
    }
}

impl RunConfig {
    pub fn trial_template(&self) -> Result<TrialSpec> {
        let p = &self.problem;
        let spec = TrialSpec {
            n: p.n,
            k: p.k,
            m: p.m,
            algorithm: self.algorithm.name,
            prior: self.prior,
            sparse: self.algorithm.sparse,
            pgd: self.algorithm.pgd,
            trial_seed: p.seed,
            success_threshold: self.algorithm.success_threshold,
            memory_budget: p.memory_budget,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn axes(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let (Some(k), Some(m)) = (&self.experiment.k_values, &self.experiment.m_values) else {
            bail!("experiment.k_values and experiment.m_values are required for a grid");
        };
        if k.is_empty() || m.is_empty() || self.experiment.trials == 0 {
            bail!("grid axes must be non-empty and experiment.trials >= 1");
        }
        Ok((k.clone(), m.clone()))
    }

    pub fn m_axis(&self) -> Result<Vec<usize>> {
        match &self.experiment.m_values {
            Some(m) if !m.is_empty() && self.experiment.trials > 0 => Ok(m.clone()),
            _ => bail!("experiment.m_values (non-empty) and experiment.trials >= 1 are required for a sweep"),
        }
    }
}
