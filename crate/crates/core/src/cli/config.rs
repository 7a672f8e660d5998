//! TOML experiment configuration. Unknown keys are rejected.

use std::path::PathBuf;

use serde::Deserialize;

use super::table::Format;
use super::CliError;
use crate::kernels::{DiscreteLossDistribution, LossRange};
use crate::sim::{Coupling, SlackKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Bound,
    Coverage,
    Sweep,
    Fixpoint,
}

impl Command {
    pub fn is_stochastic(self) -> bool {
        self != Command::Bound
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub trials: Option<usize>,
    pub environment: Option<EnvironmentConfig>,
    #[serde(default)]
    pub eta: EtaConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub coverage: CoverageConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub fixpoint: FixpointConfig,
    pub bound: Option<BoundConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_delta() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub preset: Option<String>,
    pub laws: Option<Vec<LawConfig>>,
    /// Required with `laws`; overrides the preset's range otherwise.
    pub range: Option<[f64; 2]>,
    #[serde(default)]
    pub coupling: Coupling,
    /// Defaults to uniform.
    pub prior: Option<Vec<f64>>,
}

/// Either `{ bernoulli = p }` or `{ support = [...], probs = [...] }`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub bernoulli: Option<f64>,
    pub support: Option<Vec<f64>>,
    pub probs: Option<Vec<f64>>,
}

impl LawConfig {
    pub fn build(&self) -> crate::Result<DiscreteLossDistribution> {
        match (self.bernoulli, &self.support, &self.probs) {
            (Some(p), None, None) => DiscreteLossDistribution::bernoulli(p),
            (None, Some(s), Some(p)) => DiscreteLossDistribution::new(s.clone(), p.clone()),
            _ => Err(crate::Error::InvalidDistribution(
                "give either `bernoulli` or both `support` and `probs`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtaConfig {
    /// Learning rate of the fixed-`eta` bounds.
    pub fixed: f64,
    /// Grid range and ratio.
    pub u: f64,
    pub v: f64,
    pub grid_alpha: f64,
    /// Ratio `alpha` and upper limit `v` of the tuned bounds.
    pub alpha: f64,
    pub cap: f64,
    pub slack: SlackKind,
    pub hypothesis: usize,
}

impl Default for EtaConfig {
    fn default() -> Self {
        EtaConfig {
            fixed: 1.0,
            u: 0.1,
            v: 10.0,
            grid_alpha: 2.0,
            alpha: 2.0,
            cap: 1.0,
            slack: SlackKind::Hoeffding,
            hypothesis: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    #[default]
    Erm,
    Gibbs,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub rule: RuleName,
    pub eta: f64,
    pub alpha: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            rule: RuleName::Erm,
            eta: 1.0,
            alpha: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    /// Defaults to every in-probability kind.
    pub kinds: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kinds: Option<Vec<String>>,
    pub n_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixpointConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FixpointConfig {
    fn default() -> Self {
        FixpointConfig {
            max_iters: 20,
            tol: 1e-4,
        }
    }
}

/// Inputs of a single bound evaluation. Which fields are needed depends
/// on `kind`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kind: String,
    /// `R_n` of the hypothesis, or of the posterior.
    pub empirical: Option<f64>,
    /// Empirical risk of the reference hypothesis (excess-risk kinds).
    pub reference_empirical: Option<f64>,
    /// Per-hypothesis empirical risks (union kinds).
    pub risks: Option<Vec<f64>>,
    pub prior: Option<Vec<f64>>,
    /// Defaults to the empirical risk minimizer.
    pub selected: Option<usize>,
    pub kl: Option<f64>,
    pub sec_moment: Option<f64>,
    #[serde(default = "unit_range")]
    pub range: [f64; 2],
    /// Defaults to `eta.fixed` for the fixed-`eta` kinds; omitted means
    /// tuned for the others.
    pub eta: Option<f64>,
    /// Upper limit of `eta`; defaults to `eta.cap`. May be `inf` for the
    /// variance kinds when the range starts at 0.
    pub v: Option<f64>,
    pub alpha: Option<f64>,
    pub slack: Option<SlackKind>,
}

fn unit_range() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Named environments: hypotheses' loss laws and the loss range.
pub fn preset(name: &str) -> Option<(Vec<DiscreteLossDistribution>, LossRange)> {
    let bern = |p| DiscreteLossDistribution::bernoulli(p).expect("valid preset");
    let unit = LossRange::new(0.0, 1.0).expect("valid preset");
    let laws = match name {
        "bernoulli_single" => vec![bern(0.5)],
        "bernoulli_grid10" => (1..=10).map(|i| bern(0.05 * i as f64)).collect(),
        "asymmetric3" => [[0.6, 0.3, 0.1], [0.5, 0.3, 0.2], [0.75, 0.05, 0.2]]
            .iter()
            .map(|p| {
                DiscreteLossDistribution::new(vec![0.0, 0.25, 1.0], p.to_vec())
                    .expect("valid preset")
            })
            .collect(),
        "lowvar" => vec![bern(0.01), bern(0.02)],
        _ => return None,
    };
    Some((laws, unit))
}

pub const PRESETS: [&str; 4] = [
    "bernoulli_single",
    "bernoulli_grid10",
    "asymmetric3",
    "lowvar",
];
