//! Command-line front end: one TOML config in, one table out.

mod config;
mod table;

use std::path::PathBuf;

use clap::Parser;

pub use config::{
    preset, BoundConfig, Command, CoverageConfig, EnvironmentConfig, EstimatorConfig, EtaConfig,
    ExperimentConfig, FixpointConfig, LawConfig, OutputConfig, RuleName, SweepConfig, PRESETS,
};
pub use table::{parse_csv, parse_text, Cell, Format, Table};

use crate::bounds::{
    build_eta_grid, chernoff_bound, excess_risk_bounds, hoeffding_bound, pac_bayes_bound,
    pac_bayes_expectation_bound, pac_bayes_grid_bound, pac_hoeffding_bound, pac_variance_bound,
    union_bound, union_bound_eta_opt, variance_bound, BoundReport, EtaCap, EtaGrid, ExcessFlavor,
    SampleSize, SlackModel,
};
use crate::error::Error;
use crate::kernels::{ConfidenceLevel, EtaValue, LossRange};
use crate::posterior::{
    fixed_point_iteration, FixedPointOptions, GibbsParams, PosteriorRule, ProbVector,
};
use crate::sim::{
    argmin_risk, run_coverage, tightness_sweep, BoundKind, CoverageSetup, Environment, EtaPolicy,
    SlackKind,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

/// Library errors during validation name the config field; a few variants
/// are genuine numerical dead ends.
fn at(field: &'static str) -> impl Fn(Error) -> CliError {
    move |e| match e {
        Error::AllMassZero | Error::ZeroPriorMass { .. } => {
            CliError::Numerical(format!("{field}: {e}"))
        }
        _ => CliError::Validation(format!("{field}: {e}")),
    }
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {reason}"))
}

fn require<T: Copy>(value: Option<T>, field: &str) -> Result<T, CliError> {
    value.ok_or_else(|| invalid(field, "required for this command"))
}

#[derive(Debug, Parser)]
#[command(
    name = "pacbound",
    version,
    about = "Concentration and PAC-Bayes bound experiments"
)]
pub struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; overrides `output.path`. Without one the table goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; overrides `output.format`.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the rayon default.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

/// Parses the config, runs it on a dedicated pool and writes the output.
/// Returns the process exit code.
pub fn main_with_args(args: Args) -> i32 {
    match execute(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| invalid("threads", e))?;
    let table = pool.install(|| run(&config))?;

    let format = args.format.or(config.output.format).unwrap_or_default();
    let path = args.out.as_ref().or(config.output.path.as_ref());
    if config.command == Command::Bound {
        print!("{}", table.to_text());
    }
    match path {
        Some(p) => std::fs::write(p, table.render(format))
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            if config.command != Command::Bound {
                print!("{}", table.render(format));
            }
            Ok(())
        }
    }
}

/// Runs one configured command and returns its table.
pub fn run(config: &ExperimentConfig) -> Result<Table, CliError> {
    if config.command.is_stochastic() && config.seed.is_none() {
        return Err(invalid("seed", "required for stochastic commands"));
    }
    match config.command {
        Command::Bound => run_bound(config),
        Command::Coverage => run_coverage_cmd(config),
        Command::Sweep => run_sweep(config),
        Command::Fixpoint => run_fixpoint(config),
    }
}

fn sample_size(n: Option<usize>, field: &str) -> Result<SampleSize, CliError> {
    SampleSize::new(require(n, field)?).map_err(|e| invalid(field, e))
}

fn confidence(config: &ExperimentConfig) -> Result<ConfidenceLevel, CliError> {
    ConfidenceLevel::new(config.delta).map_err(at("delta"))
}

fn eta_value(x: f64, field: &'static str) -> Result<EtaValue, CliError> {
    EtaValue::new(x).map_err(at(field))
}

fn grid(config: &ExperimentConfig) -> Result<EtaGrid, CliError> {
    let e = &config.eta;
    build_eta_grid(
        eta_value(e.u, "eta.u")?,
        eta_value(e.v, "eta.v")?,
        e.grid_alpha,
    )
    .map_err(at("eta.grid_alpha"))
}

fn environment(config: &ExperimentConfig) -> Result<(Environment, ProbVector), CliError> {
    let env_cfg = config
        .environment
        .as_ref()
        .ok_or_else(|| invalid("environment", "required for this command"))?;
    let (laws, default_range) = match (&env_cfg.preset, &env_cfg.laws) {
        (Some(name), None) => {
            let (laws, range) = preset(name).ok_or_else(|| {
                invalid(
                    "environment.preset",
                    format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")),
                )
            })?;
            (laws, Some(range))
        }
        (None, Some(laws)) => {
            let built = laws
                .iter()
                .map(LawConfig::build)
                .collect::<crate::Result<Vec<_>>>()
                .map_err(at("environment.laws"))?;
            (built, None)
        }
        _ => {
            return Err(invalid(
                "environment",
                "give exactly one of `preset` and `laws`",
            ))
        }
    };
    let range = match (env_cfg.range, default_range) {
        (Some([a, b]), _) => LossRange::new(a, b).map_err(at("environment.range"))?,
        (None, Some(r)) => r,
        (None, None) => return Err(invalid("environment.range", "required with `laws`")),
    };
    let env = Environment::new(laws, range)
        .map_err(at("environment.laws"))?
        .with_coupling(env_cfg.coupling);
    let prior = match &env_cfg.prior {
        Some(w) => ProbVector::new(w.clone()).map_err(at("environment.prior"))?,
        None => ProbVector::uniform(env.len()).map_err(at("environment"))?,
    };
    if prior.len() != env.len() {
        return Err(invalid(
            "environment.prior",
            format!("has {} weights for {} hypotheses", prior.len(), env.len()),
        ));
    }
    Ok((env, prior))
}

fn coverage_setup(config: &ExperimentConfig, n: SampleSize) -> Result<CoverageSetup, CliError> {
    let (env, prior) = environment(config)?;
    let e = &config.eta;
    let policy = EtaPolicy {
        fixed: eta_value(e.fixed, "eta.fixed")?,
        grid: grid(config)?,
        alpha: e.alpha,
        cap: eta_value(e.cap, "eta.cap")?,
        slack: e.slack,
        fixed_hypothesis: e.hypothesis,
    };
    if !(e.alpha > 1.0 && e.alpha.is_finite()) {
        return Err(invalid(
            "eta.alpha",
            format!("must be > 1, got {}", e.alpha),
        ));
    }
    if e.hypothesis >= env.len() {
        return Err(invalid(
            "eta.hypothesis",
            format!(
                "index {} out of range for {} hypotheses",
                e.hypothesis,
                env.len()
            ),
        ));
    }
    let est = &config.estimator;
    let rule = match est.rule {
        RuleName::Erm => PosteriorRule::Erm,
        RuleName::Gibbs => {
            if !(est.alpha >= 1.0 && est.alpha.is_finite()) {
                return Err(invalid(
                    "estimator.alpha",
                    format!("must be >= 1, got {}", est.alpha),
                ));
            }
            PosteriorRule::Gibbs {
                eta: eta_value(est.eta, "estimator.eta")?,
                alpha: est.alpha,
            }
        }
    };
    Ok(CoverageSetup::new(env, n, confidence(config)?)
        .with_policy(policy)
        .with_prior(prior)
        .with_rule(rule))
}

fn parse_kinds(
    names: &Option<Vec<String>>,
    field: &'static str,
    default: &[BoundKind],
) -> Result<Vec<BoundKind>, CliError> {
    match names {
        None => Ok(default.to_vec()),
        Some(list) if list.is_empty() => Err(invalid(field, "must list at least one kind")),
        Some(list) => list
            .iter()
            .map(|s| s.parse::<BoundKind>().map_err(at(field)))
            .collect(),
    }
}

fn in_probability_kinds() -> Vec<BoundKind> {
    BoundKind::ALL
        .into_iter()
        .filter(|k| k.is_in_probability())
        .collect()
}

fn numerical(e: Error) -> CliError {
    CliError::Numerical(e.to_string())
}

fn run_coverage_cmd(config: &ExperimentConfig) -> Result<Table, CliError> {
    let trials = require(config.trials, "trials")?;
    if trials < 100 {
        return Err(invalid(
            "trials",
            format!("must be >= 100 for coverage, got {trials}"),
        ));
    }
    let kinds = parse_kinds(
        &config.coverage.kinds,
        "coverage.kinds",
        &in_probability_kinds(),
    )?;
    if let Some(k) = kinds.iter().find(|k| !k.is_in_probability()) {
        return Err(invalid(
            "coverage.kinds",
            format!("`{k}` holds in expectation, not with probability 1 - delta"),
        ));
    }
    let setup = coverage_setup(config, sample_size(config.n, "n")?)?;
    let seed = config.seed.expect("checked in run");
    let mut table = Table::new([
        "kind",
        "n",
        "trials",
        "violations",
        "delta",
        "violation_rate",
        "pass_threshold",
        "passed",
    ]);
    for kind in kinds {
        let stats = run_coverage(&setup, kind, trials, seed).map_err(at("coverage"))?;
        table.push(vec![
            kind.name().into(),
            setup.n.get().into(),
            stats.trials.into(),
            stats.violations.into(),
            stats.delta.into(),
            stats.violation_rate.into(),
            stats.pass_threshold.into(),
            stats.passed().into(),
        ]);
    }
    Ok(table)
}

fn run_sweep(config: &ExperimentConfig) -> Result<Table, CliError> {
    let trials = require(config.trials, "trials")?;
    if trials == 0 {
        return Err(invalid("trials", "must be >= 1"));
    }
    let kinds = parse_kinds(&config.sweep.kinds, "sweep.kinds", &BoundKind::ALL)?;
    let n_list = config
        .sweep
        .n_list
        .as_ref()
        .ok_or_else(|| invalid("sweep.n_list", "required for sweep"))?
        .iter()
        .map(|&n| SampleSize::new(n).map_err(at("sweep.n_list")))
        .collect::<Result<Vec<_>, _>>()?;
    if n_list.is_empty() {
        return Err(invalid(
            "sweep.n_list",
            "must list at least one sample size",
        ));
    }
    let setup = coverage_setup(config, n_list[0])?;
    let rows = tightness_sweep(
        &setup,
        &n_list,
        &kinds,
        trials,
        config.seed.expect("checked in run"),
    )
    .map_err(at("sweep"))?;
    let mut table = Table::new(["kind", "n", "mean_total", "mean_left", "mean_gap"]);
    for r in rows {
        table.push(vec![
            r.kind.name().into(),
            r.n.into(),
            r.mean_total.into(),
            r.mean_left.into(),
            r.mean_gap.into(),
        ]);
    }
    Ok(table)
}

fn run_fixpoint(config: &ExperimentConfig) -> Result<Table, CliError> {
    let trials = require(config.trials, "trials")?;
    let n = sample_size(config.n, "n")?;
    let (env, prior) = environment(config)?;
    let est = &config.estimator;
    let params = GibbsParams::new(eta_value(est.eta, "estimator.eta")?, est.alpha, n)
        .map_err(at("estimator.alpha"))?;
    let opts = FixedPointOptions {
        trials,
        max_iters: config.fixpoint.max_iters,
        tol: config.fixpoint.tol,
        seed: config.seed.expect("checked in run"),
        delta: confidence(config)?,
        grid: grid(config)?,
    };
    let result = fixed_point_iteration(&env, &prior, params, &opts).map_err(|e| match e {
        Error::InvalidParameter { name, .. } => invalid(&format!("fixpoint.{name}"), e),
        Error::EtaOutOfRange { .. } => invalid("estimator.eta", e),
        other => numerical(other),
    })?;
    let mut headers = vec!["iteration".to_string()];
    headers.extend((0..env.len()).map(|h| format!("prior_{h}")));
    headers.extend(["bound_mean", "bound_std_error", "tv_distance"].map(String::from));
    let mut table = Table::new(headers);
    for step in &result.trace {
        let mut row: Vec<Cell> = vec![step.iteration.into()];
        row.extend(step.prior.iter().map(|&w| Cell::Real(w)));
        row.extend([
            step.bound_mean.into(),
            step.bound_std_error.into(),
            step.tv_distance.into(),
        ]);
        table.push(row);
    }
    Ok(table)
}

fn opt_eta(x: Option<f64>, field: &'static str) -> Result<Option<EtaValue>, CliError> {
    x.map(|v| eta_value(v, field)).transpose()
}

fn run_bound(config: &ExperimentConfig) -> Result<Table, CliError> {
    let b = config
        .bound
        .as_ref()
        .ok_or_else(|| invalid("bound", "section required for the bound command"))?;
    let kind: BoundKind = b.kind.parse().map_err(at("bound.kind"))?;
    let n = sample_size(config.n, "n")?;
    let delta = confidence(config)?;
    let range = LossRange::new(b.range[0], b.range[1]).map_err(at("bound.range"))?;
    let alpha = b.alpha.unwrap_or(config.eta.alpha);
    let fixed_eta = || eta_value(b.eta.unwrap_or(config.eta.fixed), "bound.eta");
    let cap = || eta_value(b.v.unwrap_or(config.eta.cap), "bound.v");
    let empirical = || require(b.empirical, "bound.empirical");
    let kl = || require(b.kl, "bound.kl");
    let sec = || require(b.sec_moment, "bound.sec_moment");
    let prior_for = |k: usize| match &b.prior {
        Some(w) => ProbVector::new(w.clone()).map_err(at("bound.prior")),
        None => ProbVector::uniform(k).map_err(at("bound.risks")),
    };

    let report: BoundReport = match kind {
        BoundKind::Chernoff => {
            chernoff_bound(empirical()?, n, fixed_eta()?, delta).map_err(at("bound"))?
        }
        BoundKind::Hoeffding => {
            hoeffding_bound(empirical()?, n, range, delta).map_err(at("bound"))?
        }
        BoundKind::Variance => {
            let v = EtaCap::from_f64(b.v.unwrap_or(config.eta.cap)).map_err(at("bound.v"))?;
            variance_bound(
                empirical()?,
                sec()?,
                n,
                range.lower(),
                v,
                fixed_eta()?,
                delta,
            )
            .map_err(at("bound"))?
        }
        BoundKind::Union | BoundKind::UnionEtaOpt => {
            let risks = b
                .risks
                .as_ref()
                .ok_or_else(|| invalid("bound.risks", "required for union kinds"))?;
            if risks.is_empty() {
                return Err(invalid("bound.risks", "must be nonempty"));
            }
            let prior = prior_for(risks.len())?;
            let selected = b.selected.unwrap_or_else(|| argmin_risk(risks));
            if kind == BoundKind::Union {
                union_bound(risks, &prior, selected, n, fixed_eta()?, delta).map_err(at("bound"))?
            } else {
                let model = match b.slack.unwrap_or(config.eta.slack) {
                    SlackKind::Hoeffding => SlackModel::Hoeffding(range),
                    SlackKind::Variance => SlackModel::Variance {
                        sec_moment: sec()?,
                        a: range.lower(),
                        v: EtaCap::from_f64(b.v.unwrap_or(config.eta.cap))
                            .map_err(at("bound.v"))?,
                    },
                };
                union_bound_eta_opt(risks, &prior, selected, n, delta, model)
                    .map_err(at("bound"))?
            }
        }
        BoundKind::PacBayes => {
            pac_bayes_bound(empirical()?, kl()?, n, fixed_eta()?, delta).map_err(at("bound"))?
        }
        BoundKind::PacBayesExpectation => {
            pac_bayes_expectation_bound(empirical()?, kl()?, n, fixed_eta()?)
                .map_err(at("bound"))?
        }
        BoundKind::PacBayesGrid => {
            pac_bayes_grid_bound(empirical()?, kl()?, n, fixed_eta()?, &grid(config)?, delta)
                .map_err(at("bound"))?
        }
        BoundKind::PacHoeffding => pac_hoeffding_bound(
            empirical()?,
            kl()?,
            n,
            range,
            alpha,
            cap()?,
            delta,
            opt_eta(b.eta, "bound.eta")?,
        )
        .map_err(at("bound"))?,
        BoundKind::PacVariance => pac_variance_bound(
            empirical()?,
            kl()?,
            sec()?,
            n,
            range.lower(),
            range.upper(),
            alpha,
            cap()?,
            delta,
            opt_eta(b.eta, "bound.eta")?,
        )
        .map_err(at("bound"))?,
        BoundKind::ExcessHoeffding | BoundKind::ExcessVariance => {
            let flavor = if kind == BoundKind::ExcessHoeffding {
                ExcessFlavor::Hoeffding
            } else {
                ExcessFlavor::Variance
            };
            let rel_sec = match flavor {
                ExcessFlavor::Hoeffding => b.sec_moment.unwrap_or(0.0),
                ExcessFlavor::Variance => sec()?,
            };
            excess_risk_bounds(
                empirical()?,
                require(b.reference_empirical, "bound.reference_empirical")?,
                kl()?,
                rel_sec,
                n,
                range.upper(),
                alpha,
                cap()?,
                delta,
                flavor,
                opt_eta(b.eta, "bound.eta")?,
            )
            .map_err(at("bound"))?
        }
    };
    if !report.total.is_finite() {
        return Err(CliError::Numerical(format!(
            "{kind} bound is not finite (total = {}); check `bound.kl` and the prior",
            report.total
        )));
    }
    let mut table = Table::new([
        "kind",
        "empirical_term",
        "slack_term",
        "complexity_term",
        "total",
        "eta_used",
    ]);
    table.push(vec![
        kind.name().into(),
        report.empirical_term.into(),
        report.slack_term.into(),
        report.complexity_term.into(),
        report.total.into(),
        match report.eta_used {
            Some(e) => Cell::Real(e.get()),
            None => Cell::Text("none".into()),
        },
    ]);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    #[test]
    fn hoeffding_bound_command() {
        let t = run(&cfg(
            "command = \"bound\"\nn = 100\ndelta = 0.05\n[bound]\nkind = \"hoeffding\"\nempirical = 0.2\n",
        ))
        .unwrap();
        let Cell::Real(total) = t.rows[0][4] else {
            panic!()
        };
        assert!((total - 0.322_387_341_534_040_8).abs() < 1e-15);
        assert!((total - 0.322387).abs() < 1e-6);
    }

    #[test]
    fn coverage_with_zero_trials_names_trials() {
        let err = run(&cfg(
            "command = \"coverage\"\nseed = 1\nn = 10\ntrials = 0\n[environment]\npreset = \"bernoulli_single\"\n",
        ))
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("trials"), "{err}");
    }

    #[test]
    fn missing_seed_is_a_validation_error() {
        let err = run(&cfg("command = \"sweep\"\ntrials = 10\n")).unwrap_err();
        assert!(err.to_string().starts_with("seed"), "{err}");
    }

    #[test]
    fn infinite_kl_is_numerical() {
        let err = run(&cfg(
            "command = \"bound\"\nn = 10\n[bound]\nkind = \"pac_bayes\"\nempirical = 0.1\nkl = inf\n",
        ))
        .unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn fixpoint_single_hypothesis() {
        let t = run(&cfg(
            "command = \"fixpoint\"\nseed = 3\nn = 20\ntrials = 50\n[environment]\npreset = \"bernoulli_single\"\n[estimator]\neta = 1.0\nalpha = 2.0\n",
        ))
        .unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0][4], Cell::Real(0.0));
    }
}
