//! Monte Carlo checks of the `1 - delta` guarantees.
//!
//! Each trial samples a dataset, forms the posterior, evaluates the target
//! side exactly from the environment and compares it with the bound.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    chernoff_bound, excess_risk_bounds, hoeffding_bound, hoeffding_constants, pac_bayes_bound,
    pac_bayes_grid_bound, pac_hoeffding_bound, pac_variance_bound, union_bound,
    union_bound_eta_opt, variance_constants, EtaCap, EtaGrid, ExcessFlavor, SampleSize, SlackModel,
};
use crate::error::{Error, Result};
use crate::kernels::{m_eta, ConfidenceLevel, EtaValue};
use crate::posterior::{kl_divergence, PosteriorRule, ProbVector};
use crate::sim::env::{
    best_hypothesis, empirical_risks, relative_loss_env, sample_with_rng, trial_rng, Environment,
};
use crate::stats::mean_and_std_error;

/// Slack added to the bound before a trial counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-12;
/// Points of the check grid used for bounds uniform in `eta`.
pub const CHECK_GRID_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Fixed hypothesis, `M_eta` target.
    Chernoff,
    /// Fixed hypothesis, Hoeffding form, `R` target.
    Hoeffding,
    /// Fixed hypothesis, variance form, `R` target.
    Variance,
    /// Selected hypothesis, fixed `eta`, `M_eta` target.
    Union,
    /// Selected hypothesis, tuned `eta`, `R` target.
    UnionEtaOpt,
    /// Posterior, fixed `eta`, `M_eta` target.
    PacBayes,
    /// In-expectation PAC-Bayes; checked as a mean, not a quantile.
    PacBayesExpectation,
    /// Posterior, all `eta` on a grid range, `M_eta` target.
    PacBayesGrid,
    PacHoeffding,
    PacVariance,
    ExcessHoeffding,
    ExcessVariance,
}

impl BoundKind {
    pub const ALL: [BoundKind; 12] = [
        BoundKind::Chernoff,
        BoundKind::Hoeffding,
        BoundKind::Variance,
        BoundKind::Union,
        BoundKind::UnionEtaOpt,
        BoundKind::PacBayes,
        BoundKind::PacBayesExpectation,
        BoundKind::PacBayesGrid,
        BoundKind::PacHoeffding,
        BoundKind::PacVariance,
        BoundKind::ExcessHoeffding,
        BoundKind::ExcessVariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Chernoff => "chernoff",
            BoundKind::Hoeffding => "hoeffding",
            BoundKind::Variance => "variance",
            BoundKind::Union => "union",
            BoundKind::UnionEtaOpt => "union_eta_opt",
            BoundKind::PacBayes => "pac_bayes",
            BoundKind::PacBayesExpectation => "pac_bayes_expectation",
            BoundKind::PacBayesGrid => "pac_bayes_grid",
            BoundKind::PacHoeffding => "pac_hoeffding",
            BoundKind::PacVariance => "pac_variance",
            BoundKind::ExcessHoeffding => "excess_hoeffding",
            BoundKind::ExcessVariance => "excess_variance",
        }
    }

    pub fn is_in_probability(self) -> bool {
        self != BoundKind::PacBayesExpectation
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownBoundKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlackKind {
    #[default]
    Hoeffding,
    Variance,
}

/// Learning-rate settings shared by every bound kind.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPolicy {
    /// `eta` for fixed-`eta` kinds.
    pub fixed: EtaValue,
    /// Range and ratio of the grid bound.
    pub grid: EtaGrid,
    /// Grid ratio of the tuned bounds.
    pub alpha: f64,
    /// Upper limit `v` of the tuned and variance-type bounds.
    pub cap: EtaValue,
    /// Slack model of the tuned union bound.
    pub slack: SlackKind,
    /// Hypothesis evaluated by the fixed-hypothesis kinds.
    pub fixed_hypothesis: usize,
}

impl Default for EtaPolicy {
    fn default() -> Self {
        let eta = |x| EtaValue::new(x).expect("positive constant");
        EtaPolicy {
            fixed: eta(1.0),
            grid: crate::bounds::build_eta_grid(eta(0.1), eta(10.0), 2.0)
                .expect("valid default grid"),
            alpha: 2.0,
            cap: eta(1.0),
            slack: SlackKind::Hoeffding,
            fixed_hypothesis: 0,
        }
    }
}

/// Everything a Monte Carlo run needs apart from the kind, trials and seed.
#[derive(Debug, Clone)]
pub struct CoverageSetup {
    pub env: Environment,
    pub n: SampleSize,
    pub delta: ConfidenceLevel,
    pub policy: EtaPolicy,
    pub rule: PosteriorRule,
    pub prior: ProbVector,
}

impl CoverageSetup {
    /// Uniform prior, ERM posterior, default policy.
    pub fn new(env: Environment, n: SampleSize, delta: ConfidenceLevel) -> Self {
        let prior = ProbVector::uniform(env.len()).expect("environment is nonempty");
        CoverageSetup {
            env,
            n,
            delta,
            policy: EtaPolicy::default(),
            rule: PosteriorRule::Erm,
            prior,
        }
    }

    pub fn with_rule(mut self, rule: PosteriorRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_policy(mut self, policy: EtaPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_prior(mut self, prior: ProbVector) -> Self {
        self.prior = prior;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageStats {
    pub trials: usize,
    pub violations: usize,
    pub delta: f64,
    pub violation_rate: f64,
    pub pass_threshold: f64,
}

impl CoverageStats {
    fn new(trials: usize, violations: usize, delta: f64) -> Self {
        let t = trials as f64;
        CoverageStats {
            trials,
            violations,
            delta,
            violation_rate: violations as f64 / t,
            pass_threshold: delta + 3.0 * (delta * (1.0 - delta) / t).sqrt(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violation_rate <= self.pass_threshold
    }
}

/// Per-trial result: whether any checked `eta` was violated, plus the
/// target and bound at the kind's reference `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TrialOutcome {
    pub violated: bool,
    pub left: f64,
    pub total: f64,
}

/// Data-independent quantities for one (setup, kind) pair.
pub(crate) struct KindContext<'a> {
    setup: &'a CoverageSetup,
    kind: BoundKind,
    true_risks: Vec<f64>,
    sec_moments: Vec<f64>,
    /// `M_eta(h)` for each check `eta` (row) and hypothesis (column).
    m_table: Vec<Vec<f64>>,
    check_etas: Vec<EtaValue>,
    reference: usize,
    rel_sec_moments: Vec<f64>,
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<EtaValue>> {
    if count < 2 || lo >= hi {
        return Ok(vec![EtaValue::new(lo)?]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            let x = if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            };
            EtaValue::new(x)
        })
        .collect()
}

impl<'a> KindContext<'a> {
    pub fn new(setup: &'a CoverageSetup, kind: BoundKind) -> Result<Self> {
        let env = &setup.env;
        if setup.prior.len() != env.len() {
            return Err(Error::DimensionMismatch {
                expected: env.len(),
                found: setup.prior.len(),
            });
        }
        let range = env.range();
        let policy = &setup.policy;
        if policy.fixed_hypothesis >= env.len() {
            return Err(Error::IndexOutOfRange {
                index: policy.fixed_hypothesis,
                len: env.len(),
            });
        }
        let check_etas = match kind {
            BoundKind::Chernoff
            | BoundKind::Union
            | BoundKind::PacBayes
            | BoundKind::PacBayesExpectation => vec![policy.fixed],
            BoundKind::PacBayesGrid => log_spaced(
                policy.grid.u().get(),
                policy.grid.v().get(),
                CHECK_GRID_POINTS,
            )?,
            BoundKind::PacHoeffding => {
                let u = hoeffding_constants(range, policy.alpha, policy.cap, setup.n)?.u;
                log_spaced(u.get(), policy.cap.get(), CHECK_GRID_POINTS)?
            }
            BoundKind::PacVariance => {
                let u = variance_constants(
                    range.lower(),
                    range.upper(),
                    policy.alpha,
                    policy.cap,
                    setup.n,
                )?
                .u;
                log_spaced(u.get(), policy.cap.get(), CHECK_GRID_POINTS)?
            }
            BoundKind::ExcessHoeffding | BoundKind::ExcessVariance => {
                if range.lower() < 0.0 {
                    return Err(Error::param(
                        "range",
                        "excess-risk bounds need losses in [0, b]",
                    ));
                }
                let b = range.upper();
                let u = if kind == BoundKind::ExcessHoeffding {
                    hoeffding_constants(
                        crate::kernels::LossRange::new(-b, b)?,
                        policy.alpha,
                        policy.cap,
                        setup.n,
                    )?
                    .u
                } else {
                    variance_constants(-b, b, policy.alpha, policy.cap, setup.n)?.u
                };
                log_spaced(u.get(), policy.cap.get(), CHECK_GRID_POINTS)?
            }
            BoundKind::Hoeffding | BoundKind::Variance | BoundKind::UnionEtaOpt => Vec::new(),
        };
        let uses_m = matches!(
            kind,
            BoundKind::Chernoff
                | BoundKind::Union
                | BoundKind::PacBayes
                | BoundKind::PacBayesExpectation
                | BoundKind::PacBayesGrid
        );
        let m_table = if uses_m {
            check_etas
                .iter()
                .map(|&e| env.hypotheses().iter().map(|d| m_eta(d, e)).collect())
                .collect()
        } else {
            Vec::new()
        };
        let reference = best_hypothesis(env);
        let rel_sec_moments = if kind == BoundKind::ExcessVariance {
            relative_loss_env(env)?.second_moments()
        } else {
            Vec::new()
        };
        let variance_type = matches!(kind, BoundKind::Variance | BoundKind::PacVariance)
            || (kind == BoundKind::UnionEtaOpt && policy.slack == SlackKind::Variance);
        if variance_type && range.lower() > 0.0 {
            return Err(Error::param(
                "range",
                "variance-type bounds need a loss lower bound a <= 0",
            ));
        }
        Ok(KindContext {
            setup,
            kind,
            true_risks: env.true_risks(),
            sec_moments: env.second_moments(),
            m_table,
            check_etas,
            reference,
            rel_sec_moments,
        })
    }

    /// Evaluates one trial from its empirical risks.
    pub fn evaluate(&self, risks: &[f64]) -> Result<TrialOutcome> {
        let s = self.setup;
        let (n, delta, policy) = (s.n, s.delta, &s.policy);
        let range = s.env.range();
        let post = s.rule.apply_to_risks(&s.prior, risks, n)?;
        let kl = kl_divergence(&post, &s.prior)?;
        let emp = post.expectation(risks)?;
        let fixed_h = policy.fixed_hypothesis;
        let selected = post.argmax();

        let single = |left: f64, total: f64| TrialOutcome {
            violated: left > total + VIOLATION_TOL,
            left,
            total,
        };
        // Bound uniform over the check etas: violation if any of them is.
        let uniform = |lefts: &dyn Fn(usize) -> f64,
                       totals: &dyn Fn(usize) -> Result<f64>,
                       reference: (f64, f64)|
         -> Result<TrialOutcome> {
            let mut violated = reference.0 > reference.1 + VIOLATION_TOL;
            for j in 0..self.check_etas.len() {
                violated |= lefts(j) > totals(j)? + VIOLATION_TOL;
            }
            Ok(TrialOutcome {
                violated,
                left: reference.0,
                total: reference.1,
            })
        };

        match self.kind {
            BoundKind::Chernoff => {
                let r = chernoff_bound(risks[fixed_h], n, policy.fixed, delta)?;
                Ok(single(self.m_table[0][fixed_h], r.total))
            }
            BoundKind::Hoeffding => {
                let r = hoeffding_bound(risks[fixed_h], n, range, delta)?;
                Ok(single(self.true_risks[fixed_h], r.total))
            }
            BoundKind::Variance => {
                // the tuned eta depends only on the true second moment, so it is data-independent
                let model = SlackModel::Variance {
                    sec_moment: self.sec_moments[fixed_h],
                    a: range.lower(),
                    v: EtaCap::Finite(policy.cap),
                };
                let one = ProbVector::point_mass(1, 0)?;
                let r = union_bound_eta_opt(&[risks[fixed_h]], &one, 0, n, delta, model)?;
                Ok(single(self.true_risks[fixed_h], r.total))
            }
            BoundKind::Union => {
                let r = union_bound(risks, &s.prior, selected, n, policy.fixed, delta)?;
                Ok(single(self.m_table[0][selected], r.total))
            }
            BoundKind::UnionEtaOpt => {
                let model = match policy.slack {
                    SlackKind::Hoeffding => SlackModel::Hoeffding(range),
                    SlackKind::Variance => SlackModel::Variance {
                        sec_moment: self.sec_moments[selected],
                        a: range.lower(),
                        v: EtaCap::Finite(policy.cap),
                    },
                };
                let r = union_bound_eta_opt(risks, &s.prior, selected, n, delta, model)?;
                Ok(single(self.true_risks[selected], r.total))
            }
            BoundKind::PacBayes => {
                let r = pac_bayes_bound(emp, kl, n, policy.fixed, delta)?;
                Ok(single(post.expectation(&self.m_table[0])?, r.total))
            }
            BoundKind::PacBayesExpectation => {
                let r = crate::bounds::pac_bayes_expectation_bound(emp, kl, n, policy.fixed)?;
                Ok(single(post.expectation(&self.m_table[0])?, r.total))
            }
            BoundKind::PacBayesGrid => {
                let grid = &policy.grid;
                let reference_eta =
                    EtaValue::new(policy.fixed.get().clamp(grid.u().get(), grid.v().get()))?;
                let m_ref: Vec<f64> = s
                    .env
                    .hypotheses()
                    .iter()
                    .map(|d| m_eta(d, reference_eta))
                    .collect();
                let ref_total = pac_bayes_grid_bound(emp, kl, n, reference_eta, grid, delta)?.total;
                let lefts = |j: usize| post.expectation(&self.m_table[j]).unwrap_or(f64::NAN);
                let totals = |j: usize| {
                    Ok(pac_bayes_grid_bound(emp, kl, n, self.check_etas[j], grid, delta)?.total)
                };
                uniform(&lefts, &totals, (post.expectation(&m_ref)?, ref_total))
            }
            BoundKind::PacHoeffding => {
                let left = post.expectation(&self.true_risks)?;
                let bound = |eta| {
                    pac_hoeffding_bound(emp, kl, n, range, policy.alpha, policy.cap, delta, eta)
                };
                let reference = bound(None)?.total;
                let totals = |j: usize| Ok(bound(Some(self.check_etas[j]))?.total);
                uniform(&|_| left, &totals, (left, reference))
            }
            BoundKind::PacVariance => {
                let left = post.expectation(&self.true_risks)?;
                let sec = post.expectation(&self.sec_moments)?;
                let bound = |eta| {
                    pac_variance_bound(
                        emp,
                        kl,
                        sec,
                        n,
                        range.lower(),
                        range.upper(),
                        policy.alpha,
                        policy.cap,
                        delta,
                        eta,
                    )
                };
                let reference = bound(None)?.total;
                let totals = |j: usize| Ok(bound(Some(self.check_etas[j]))?.total);
                uniform(&|_| left, &totals, (left, reference))
            }
            BoundKind::ExcessHoeffding | BoundKind::ExcessVariance => {
                let h_star = self.reference;
                let left = post.expectation(&self.true_risks)? - self.true_risks[h_star];
                let (flavor, rel_sec) = if self.kind == BoundKind::ExcessHoeffding {
                    (ExcessFlavor::Hoeffding, 0.0)
                } else {
                    (
                        ExcessFlavor::Variance,
                        post.expectation(&self.rel_sec_moments)?,
                    )
                };
                let bound = |eta| {
                    excess_risk_bounds(
                        emp,
                        risks[h_star],
                        kl,
                        rel_sec,
                        n,
                        range.upper(),
                        policy.alpha,
                        policy.cap,
                        delta,
                        flavor,
                        eta,
                    )
                };
                let reference = bound(None)?.total;
                let totals = |j: usize| Ok(bound(Some(self.check_etas[j]))?.total);
                uniform(&|_| left, &totals, (left, reference))
            }
        }
    }
}

pub(crate) fn trial_risks(setup: &CoverageSetup, trials: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            empirical_risks(&sample_with_rng(
                &setup.env,
                setup.n,
                &mut trial_rng(seed, t),
            ))
        })
        .collect()
}

pub(crate) fn evaluate_trials(
    setup: &CoverageSetup,
    kind: BoundKind,
    risks: &[Vec<f64>],
) -> Result<Vec<TrialOutcome>> {
    let ctx = KindContext::new(setup, kind)?;
    risks.par_iter().map(|r| ctx.evaluate(r)).collect()
}

/// Counts trials where the target exceeds the bound.
pub fn run_coverage(
    setup: &CoverageSetup,
    kind: BoundKind,
    trials: usize,
    seed: u64,
) -> Result<CoverageStats> {
    if trials < 100 {
        return Err(Error::param(
            "trials",
            format!("must be >= 100, got {trials}"),
        ));
    }
    if !kind.is_in_probability() {
        return Err(Error::UnsupportedBoundKind(
            "pac_bayes_expectation is an in-expectation bound; use run_expectation_check",
        ));
    }
    let outcomes = evaluate_trials(setup, kind, &trial_risks(setup, trials, seed))?;
    let violations = outcomes.iter().filter(|o| o.violated).count();
    Ok(CoverageStats::new(trials, violations, setup.delta.get()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationStats {
    pub trials: usize,
    /// Mean over trials of `E_post[M_eta] - E_post[R_n] - KL / (eta n)`.
    pub mean_slack: f64,
    pub std_error: f64,
}

impl ExpectationStats {
    /// The in-expectation bound says the true mean is `<= 0`.
    pub fn passed(&self) -> bool {
        self.mean_slack <= 3.0 * self.std_error + VIOLATION_TOL
    }
}

/// Checks the in-expectation PAC-Bayes bound at `setup.policy.fixed`.
pub fn run_expectation_check(
    setup: &CoverageSetup,
    trials: usize,
    seed: u64,
) -> Result<ExpectationStats> {
    if trials < 2 {
        return Err(Error::param(
            "trials",
            format!("must be >= 2, got {trials}"),
        ));
    }
    let eta = setup.policy.fixed;
    let ctx = KindContext::new(setup, BoundKind::PacBayesExpectation)?;
    let m = &ctx.m_table[0];
    let slacks = trial_risks(setup, trials, seed)
        .par_iter()
        .map(|r| {
            let post = setup.rule.apply_to_risks(&setup.prior, r, setup.n)?;
            let kl = kl_divergence(&post, &setup.prior)?;
            let bound =
                crate::bounds::pac_bayes_expectation_bound(post.expectation(r)?, kl, setup.n, eta)?;
            Ok(post.expectation(m)? - bound.total)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean_slack, std_error) = mean_and_std_error(&slacks);
    Ok(ExpectationStats {
        trials,
        mean_slack,
        std_error,
    })
}
