//! Scalar primitives shared by every bound: the `phi` function of the
//! variance-type inequality, the Cramér-Chernoff surrogate `M_eta`,
//! log-sum-exp and a one-dimensional minimizer for the learning rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A learning rate `eta > 0`, in inverse loss units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EtaValue(f64);

impl EtaValue {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(EtaValue(value))
        } else {
            Err(Error::InvalidEta(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for EtaValue {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        EtaValue::new(value)
    }
}

impl From<EtaValue> for f64 {
    fn from(eta: EtaValue) -> f64 {
        eta.0
    }
}

/// Closed interval `[a, b]` containing every loss value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRange {
    a: f64,
    b: f64,
}

impl LossRange {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && a <= b {
            Ok(LossRange { a, b })
        } else {
            Err(Error::InvalidRange { a, b })
        }
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, z: f64) -> bool {
        self.a <= z && z <= self.b
    }
}

/// Failure probability `delta` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(delta: f64) -> Result<Self> {
        if delta > 0.0 && delta <= 1.0 {
            Ok(ConfidenceLevel(delta))
        } else {
            Err(Error::InvalidDelta(delta))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// `ln(1/delta)`, always nonnegative.
    #[inline]
    pub fn log_inv(self) -> f64 {
        -self.0.ln()
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        ConfidenceLevel::new(value)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(delta: ConfidenceLevel) -> f64 {
        delta.0
    }
}

const PROB_SUM_TOL: f64 = 1e-12;

/// Finite-support law of a single hypothesis's per-example loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct DiscreteLossDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteLossDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        DiscreteLossDistribution::new(raw.support, raw.probs)
    }
}

impl DiscreteLossDistribution {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} support points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if let Some(z) = support.iter().find(|z| !z.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "non-finite support value {z}"
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "invalid probability {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(DiscreteLossDistribution { support, probs })
    }

    pub fn point_mass(z: f64) -> Result<Self> {
        Self::new(vec![z], vec![1.0])
    }

    /// Loss 1 with probability `p`, loss 0 otherwise.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::two_point(0.0, 1.0, p)
    }

    /// Loss `hi` with probability `p`, loss `lo` otherwise.
    pub fn two_point(lo: f64, hi: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!(
                "invalid probability {p}"
            )));
        }
        Self::new(vec![lo, hi], vec![1.0 - p, p])
    }

    /// Uniform law over the given values.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let k = values.len();
        Self::new(values, vec![1.0 / k as f64; k])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Support points carrying positive probability.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support
            .iter()
            .copied()
            .zip(self.probs.iter().copied())
            .filter(|&(_, p)| p > 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(z, p)| p * z).sum()
    }

    pub fn second_moment(&self) -> f64 {
        second_moment(self)
    }

    pub fn m_eta(&self, eta: EtaValue) -> f64 {
        m_eta(self, eta)
    }

    pub fn min_support(&self) -> f64 {
        self.support.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_support(&self) -> f64 {
        self.support
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Below this magnitude `phi` is evaluated by its power series.
const PHI_SERIES_SWITCH: f64 = 1.0;
const PHI_SERIES_TERMS: usize = 19;

/// `phi(x) = (e^x - x - 1) / x^2`, extended continuously by `phi(0) = 1/2`.
///
/// For `|x| < 1` the series `sum_k x^k / (k+2)!` is summed to 19 terms
/// (truncation below 1e-17); elsewhere `(expm1(x) - x) / x^2` has no
/// cancellation.
pub fn phi(x: f64) -> f64 {
    if x.abs() < PHI_SERIES_SWITCH {
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 1..PHI_SERIES_TERMS {
            term *= x / (k + 2) as f64;
            sum += term;
        }
        sum
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

/// `ln sum_i exp(t_i)` with max subtraction.
pub fn log_sum_exp(terms: &[f64]) -> Result<f64> {
    let max = terms
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, t| {
            Some(acc.map_or(t, |m| m.max(t)))
        })
        .ok_or(Error::EmptyInput)?;
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if terms.len() == 1 {
        return Ok(max);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Cramér-Chernoff surrogate `M_eta = -(1/eta) ln E[exp(-eta * loss)]`.
///
/// The loss is shifted by its smallest atom `c` so that
/// `E[exp(-eta (loss - c))] = 1 + s` with `s = sum p_i expm1(-eta d_i)`.
/// For `s > -1/2` the logarithm is `ln_1p(s)`, otherwise the log-sum-exp of
/// `ln p_i - eta d_i`; both are the same quantity, the first keeps full
/// relative accuracy when `eta` is small.
pub fn m_eta(dist: &DiscreteLossDistribution, eta: EtaValue) -> f64 {
    let eta = eta.get();
    let shift = dist.atoms().map(|(z, _)| z).fold(f64::INFINITY, f64::min);
    let s: f64 = dist
        .atoms()
        .map(|(z, p)| p * (-eta * (z - shift)).exp_m1())
        .sum();
    let log_mgf = if s > -0.5 {
        s.ln_1p()
    } else {
        let terms: Vec<f64> = dist
            .atoms()
            .map(|(z, p)| p.ln() - eta * (z - shift))
            .collect();
        // atoms() is nonempty for a valid distribution
        log_sum_exp(&terms).expect("distribution has at least one atom")
    };
    shift - log_mgf / eta
}

/// `E[loss^2]`.
pub fn second_moment(dist: &DiscreteLossDistribution) -> f64 {
    dist.atoms().map(|(z, p)| p * z * z).sum()
}

const GOLDEN: f64 = 0.381_966_011_250_105_1; // 2 - golden ratio
const BRACKET_LOG_TOL: f64 = 1e-7;
const ARGMIN_LOG_TOL: f64 = 1e-9;

/// Minimizes a unimodal objective over `[lo, hi]`.
///
/// The search runs in `ln eta`, so tolerances are relative to the argmin
/// rather than to the interval. Golden-section search narrows the bracket
/// to a relative width of `1e-7`. Function values alone cannot locate a
/// smooth minimum much better than `sqrt(f64::EPSILON)`, so the bracket is
/// then bisected on the sign of a central difference quotient down to
/// `1e-9` relative.
pub fn minimize_eta<F>(objective: F, lo: EtaValue, hi: EtaValue) -> Result<(EtaValue, f64)>
where
    F: Fn(f64) -> f64,
{
    let (lo, hi) = (lo.get(), hi.get());
    if lo >= hi {
        return Err(Error::InvalidInterval { lo, hi });
    }
    let at = |t: f64| objective(t.exp().clamp(lo, hi));

    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut x1 = a + GOLDEN * (b - a);
    let mut x2 = b - GOLDEN * (b - a);
    let mut f1 = at(x1);
    let mut f2 = at(x2);
    while b - a > BRACKET_LOG_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + GOLDEN * (b - a);
            f1 = at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - GOLDEN * (b - a);
            f2 = at(x2);
        }
    }

    // Difference step ~ cbrt(eps) relative; bias and rounding noise in the
    // root of the quotient are both far below the final tolerance.
    while b - a > ARGMIN_LOG_TOL {
        let mid = (0.5 * (a + b)).exp();
        let step = 6e-6 * mid;
        let slope = objective(mid + step) - objective(mid - step);
        let t = 0.5 * (a + b);
        if slope > 0.0 {
            b = t;
        } else if slope < 0.0 {
            a = t;
        } else {
            a = t;
            b = t;
        }
    }

    let best = (0.5 * (a + b)).exp().clamp(lo, hi);
    Ok((EtaValue::new(best)?, objective(best)))
}
