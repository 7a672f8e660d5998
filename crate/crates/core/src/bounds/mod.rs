//! Every bound as an explicit decomposition into empirical, slack and
//! complexity parts.
//!
//! All functions here are pure; logarithms are natural and `log_alpha(x)`
//! is `ln x / ln alpha`.

mod grid;
mod tuned;

pub use grid::{build_eta_grid, eta_truncation_penalty, pac_bayes_grid_bound, EtaGrid};
pub use tuned::{
    excess_risk_bounds, hoeffding_constants, pac_hoeffding_bound, pac_variance_bound,
    variance_constants, ExcessFlavor, TuningConstants,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{phi, ConfidenceLevel, EtaValue, LossRange};
use crate::posterior::ProbVector;

/// Number of examples `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct SampleSize(usize);

impl SampleSize {
    pub fn new(n: usize) -> Result<Self> {
        if n >= 1 {
            Ok(SampleSize(n))
        } else {
            Err(Error::InvalidSampleSize)
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl TryFrom<usize> for SampleSize {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        SampleSize::new(n)
    }
}

impl From<SampleSize> for usize {
    fn from(n: SampleSize) -> usize {
        n.0
    }
}

/// Upper limit `v` on the learning rate. `Unbounded` is only meaningful
/// when the loss lower bound is zero, where `phi(-v a) = phi(0)` for all `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaCap {
    Finite(EtaValue),
    Unbounded,
}

impl EtaCap {
    pub fn from_f64(v: f64) -> Result<Self> {
        if v == f64::INFINITY {
            Ok(EtaCap::Unbounded)
        } else {
            EtaValue::new(v).map(EtaCap::Finite)
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            EtaCap::Finite(v) => v.get(),
            EtaCap::Unbounded => f64::INFINITY,
        }
    }
}

/// `phi(-v a)` for a loss lower bound `a <= 0`.
pub(crate) fn variance_factor(a: f64, v: EtaCap) -> Result<f64> {
    if a > 0.0 || !a.is_finite() {
        return Err(Error::param(
            "a",
            format!("lower loss bound must be <= 0, got {a}"),
        ));
    }
    match v {
        EtaCap::Finite(v) => Ok(phi(-v.get() * a)),
        EtaCap::Unbounded if a == 0.0 => Ok(0.5),
        EtaCap::Unbounded => Err(Error::param(
            "v",
            "an unbounded eta cap requires the loss lower bound a = 0",
        )),
    }
}

/// Right-hand side of a bound split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub empirical_term: f64,
    pub slack_term: f64,
    pub complexity_term: f64,
    pub total: f64,
    /// `None` where the optimal learning rate degenerates to 0 or infinity
    /// and the report holds the finite limit instead.
    pub eta_used: Option<EtaValue>,
}

impl BoundReport {
    pub(crate) fn assemble(
        empirical_term: f64,
        slack_term: f64,
        complexity_term: f64,
        eta_used: Option<EtaValue>,
    ) -> Self {
        BoundReport {
            empirical_term,
            slack_term,
            complexity_term,
            total: empirical_term + slack_term + complexity_term,
            eta_used,
        }
    }

    fn limit(empirical_term: f64) -> Self {
        Self::assemble(empirical_term, 0.0, 0.0, None)
    }
}

/// How `M_eta` is converted into a bound on the true risk `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlackModel {
    /// Losses in `[a, b]`: `R <= M_eta + eta (b-a)^2 / 8`.
    Hoeffding(LossRange),
    /// Losses `>= a` with `a <= 0` and `eta <= v`:
    /// `R <= M_eta + eta phi(-v a) E[loss^2]`.
    Variance { sec_moment: f64, a: f64, v: EtaCap },
}

fn check_empirical(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {value}")))
    }
}

fn check_kl(kl: f64) -> Result<()> {
    if kl >= 0.0 {
        Ok(())
    } else {
        Err(Error::param("kl", format!("must be >= 0, got {kl}")))
    }
}

/// `M_eta(h) <= R_n(h) + ln(1/delta) / (eta n)` for a fixed hypothesis.
pub fn chernoff_bound(
    empirical_risk: f64,
    n: SampleSize,
    eta: EtaValue,
    delta: ConfidenceLevel,
) -> Result<BoundReport> {
    check_empirical("empirical_risk", empirical_risk)?;
    let complexity = delta.log_inv() / (eta.get() * n.as_f64());
    Ok(BoundReport::assemble(
        empirical_risk,
        0.0,
        complexity,
        Some(eta),
    ))
}

/// Minimizes `eta w^2/8 + log_term/(eta n)` in closed form.
fn hoeffding_tuned(empirical: f64, log_term: f64, n: SampleSize, range: LossRange) -> BoundReport {
    let w2 = range.width() * range.width();
    if log_term == 0.0 || w2 == 0.0 {
        return BoundReport::limit(empirical);
    }
    let nf = n.as_f64();
    let eta = (8.0 * log_term / (nf * w2)).sqrt();
    match EtaValue::new(eta) {
        Ok(e) => BoundReport::assemble(empirical, eta * w2 / 8.0, log_term / (eta * nf), Some(e)),
        // log_term so large that eta overflows; the bound is vacuous
        Err(_) => BoundReport::assemble(empirical, f64::INFINITY, 0.0, None),
    }
}

/// Hoeffding's inequality `R(h) <= R_n(h) + sqrt(ln(1/delta) (b-a)^2 / (2n))`
/// at the optimal `eta = sqrt(8 ln(1/delta) / (n (b-a)^2))`.
///
/// At `delta = 1` (optimal `eta` is 0) and for a zero-width range (optimal
/// `eta` is infinite) the finite limit `R_n` is returned with `eta_used`
/// unset.
pub fn hoeffding_bound(
    empirical_risk: f64,
    n: SampleSize,
    range: LossRange,
    delta: ConfidenceLevel,
) -> Result<BoundReport> {
    check_empirical("empirical_risk", empirical_risk)?;
    Ok(hoeffding_tuned(empirical_risk, delta.log_inv(), n, range))
}

/// Variance-type bound
/// `R(h) <= R_n(h) + eta phi(-v a) E[loss^2] + ln(1/delta) / (eta n)`,
/// valid for `0 < eta <= v` when every loss is `>= a`, `a <= 0`.
#[allow(clippy::too_many_arguments)]
pub fn variance_bound(
    empirical_risk: f64,
    sec_moment: f64,
    n: SampleSize,
    a: f64,
    v: EtaCap,
    eta: EtaValue,
    delta: ConfidenceLevel,
) -> Result<BoundReport> {
    check_empirical("empirical_risk", empirical_risk)?;
    if !(sec_moment >= 0.0 && sec_moment.is_finite()) {
        return Err(Error::param(
            "sec_moment",
            format!("must be >= 0, got {sec_moment}"),
        ));
    }
    let factor = variance_factor(a, v)?;
    if eta.get() > v.as_f64() {
        return Err(Error::EtaOutOfRange {
            eta: eta.get(),
            lo: 0.0,
            hi: v.as_f64(),
        });
    }
    let slack = eta.get() * factor * sec_moment;
    let complexity = delta.log_inv() / (eta.get() * n.as_f64());
    Ok(BoundReport::assemble(
        empirical_risk,
        slack,
        complexity,
        Some(eta),
    ))
}

fn prior_log_inv(empirical_risks: &[f64], prior: &ProbVector, selected: usize) -> Result<f64> {
    if empirical_risks.len() != prior.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.len(),
            found: empirical_risks.len(),
        });
    }
    if selected >= prior.len() {
        return Err(Error::IndexOutOfRange {
            index: selected,
            len: prior.len(),
        });
    }
    let mass = prior.weights()[selected];
    if mass <= 0.0 {
        return Err(Error::ZeroPriorMass { index: selected });
    }
    check_empirical("empirical_risks", empirical_risks[selected])?;
    Ok(-mass.ln())
}

/// Union bound over a countable class at a fixed `eta`:
/// `M_eta(h) <= R_n(h) + ln(1/(pi(h) delta)) / (eta n)` for the selected `h`.
pub fn union_bound(
    empirical_risks: &[f64],
    prior: &ProbVector,
    selected: usize,
    n: SampleSize,
    eta: EtaValue,
    delta: ConfidenceLevel,
) -> Result<BoundReport> {
    let log_prior = prior_log_inv(empirical_risks, prior, selected)?;
    let complexity = (log_prior + delta.log_inv()) / (eta.get() * n.as_f64());
    Ok(BoundReport::assemble(
        empirical_risks[selected],
        0.0,
        complexity,
        Some(eta),
    ))
}

/// Union bound with `eta` tuned for the selected hypothesis.
///
/// Since the statement holds for every `eta > 0` simultaneously, the slack
/// model's optimal `eta` is used with no extra cost: closed form
/// `sqrt(8 L / (n (b-a)^2))` for Hoeffding, `sqrt(L / (n phi E[loss^2]))`
/// capped at `v` for the variance model, with `L = ln(1/(pi(h) delta))`.
pub fn union_bound_eta_opt(
    empirical_risks: &[f64],
    prior: &ProbVector,
    selected: usize,
    n: SampleSize,
    delta: ConfidenceLevel,
    slack_model: SlackModel,
) -> Result<BoundReport> {
    let log_term = prior_log_inv(empirical_risks, prior, selected)? + delta.log_inv();
    let empirical = empirical_risks[selected];
    match slack_model {
        SlackModel::Hoeffding(range) => Ok(hoeffding_tuned(empirical, log_term, n, range)),
        SlackModel::Variance { sec_moment, a, v } => {
            if !(sec_moment >= 0.0 && sec_moment.is_finite()) {
                return Err(Error::param(
                    "sec_moment",
                    format!("must be >= 0, got {sec_moment}"),
                ));
            }
            let slope = variance_factor(a, v)? * sec_moment;
            Ok(variance_tuned(empirical, slope, log_term, n, v))
        }
    }
}

/// Minimizes `eta slope + log_term/(eta n)` over `(0, v]`.
fn variance_tuned(
    empirical: f64,
    slope: f64,
    log_term: f64,
    n: SampleSize,
    v: EtaCap,
) -> BoundReport {
    let nf = n.as_f64();
    if log_term == 0.0 {
        return BoundReport::limit(empirical);
    }
    let unconstrained = if slope > 0.0 {
        (log_term / (nf * slope)).sqrt()
    } else {
        f64::INFINITY
    };
    let eta = unconstrained.min(v.as_f64());
    match EtaValue::new(eta) {
        Ok(e) => BoundReport::assemble(empirical, eta * slope, log_term / (eta * nf), Some(e)),
        Err(_) if eta == f64::INFINITY => BoundReport::limit(empirical),
        Err(_) => BoundReport::assemble(empirical, f64::INFINITY, 0.0, None),
    }
}

/// PAC-Bayes bound in probability at a fixed `eta`:
/// `E_post[M_eta] <= E_post[R_n] + (KL + ln(1/delta)) / (eta n)`.
pub fn pac_bayes_bound(
    posterior_empirical_risk: f64,
    kl: f64,
    n: SampleSize,
    eta: EtaValue,
    delta: ConfidenceLevel,
) -> Result<BoundReport> {
    check_empirical("posterior_empirical_risk", posterior_empirical_risk)?;
    check_kl(kl)?;
    let complexity = (kl + delta.log_inv()) / (eta.get() * n.as_f64());
    Ok(BoundReport::assemble(
        posterior_empirical_risk,
        0.0,
        complexity,
        Some(eta),
    ))
}

/// PAC-Bayes bound in expectation over the sample: the complexity drops
/// the `ln(1/delta)` term.
pub fn pac_bayes_expectation_bound(
    posterior_empirical_risk: f64,
    kl: f64,
    n: SampleSize,
    eta: EtaValue,
) -> Result<BoundReport> {
    check_empirical("posterior_empirical_risk", posterior_empirical_risk)?;
    check_kl(kl)?;
    let complexity = kl / (eta.get() * n.as_f64());
    Ok(BoundReport::assemble(
        posterior_empirical_risk,
        0.0,
        complexity,
        Some(eta),
    ))
}
