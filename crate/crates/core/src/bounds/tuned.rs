//! PAC-Bayes bounds on the true risk with `eta` optimized over `(0, v]`.
//!
//! After the Hoeffding or variance-type step the optimal `eta` is bounded
//! below by a data-independent `u`, so the grid bound on `[u, v]` applies
//! with `ln ceil(log_alpha(v/u))` replaced by `ln(log_alpha(n)/2 + C)`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::{check_empirical, check_kl, variance_factor, BoundReport, EtaCap, SampleSize};
use crate::error::{Error, Result};
use crate::kernels::{ConfidenceLevel, EtaValue, LossRange};

/// Constants of a tuned bound: additive `C`, the lower end `u` of the
/// `eta` range and `ln(log_alpha(n)/2 + C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningConstants {
    pub c: f64,
    pub u: EtaValue,
    pub log_factor: f64,
}

fn log_base(x: f64, alpha: f64) -> f64 {
    x.ln() / alpha.ln()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("must be > 1, got {alpha}")))
    }
}

fn finish_constants(c: f64, u: f64, n: SampleSize, alpha: f64) -> Result<TuningConstants> {
    let log_factor = (0.5 * log_base(n.as_f64(), alpha) + c).ln();
    Ok(TuningConstants {
        c,
        u: EtaValue::new(u)?,
        log_factor,
    })
}

/// `C = max{log_alpha(v (b-a) / sqrt(8 alpha)), 0} + e` and
/// `u = min{sqrt(8 alpha / (b-a)^2), v} / sqrt(n)`.
pub fn hoeffding_constants(
    range: LossRange,
    alpha: f64,
    v: EtaValue,
    n: SampleSize,
) -> Result<TuningConstants> {
    check_alpha(alpha)?;
    let w = range.width();
    if w == 0.0 {
        return Err(Error::DegenerateRange);
    }
    let root = (8.0 * alpha).sqrt();
    let c = log_base(v.get() * w / root, alpha).max(0.0) + E;
    let u = (root / w).min(v.get()) / n.as_f64().sqrt();
    finish_constants(c, u, n, alpha)
}

/// With `m = max{a^2, b^2}` and `f = phi(-a v)`:
/// `C = max{log_alpha(v m f / alpha) / 2, 0} + e` and
/// `u = min{sqrt(alpha / (f m)), v} / sqrt(n)`.
pub fn variance_constants(
    a: f64,
    b: f64,
    alpha: f64,
    v: EtaValue,
    n: SampleSize,
) -> Result<TuningConstants> {
    check_alpha(alpha)?;
    if !b.is_finite() || b < a {
        return Err(Error::InvalidRange { a, b });
    }
    let f = variance_factor(a, EtaCap::Finite(v))?;
    let m = (a * a).max(b * b);
    if m == 0.0 {
        return Err(Error::DegenerateRange);
    }
    let c = (0.5 * log_base(v.get() * m * f / alpha, alpha)).max(0.0) + E;
    let u = (alpha / (f * m)).sqrt().min(v.get()) / n.as_f64().sqrt();
    finish_constants(c, u, n, alpha)
}

/// Shared tail: slack `eta slope`, complexity `alpha L / (eta n)` with
/// `L = KL + ln(1/delta) + log_factor`; an omitted `eta` is the
/// unconstrained minimizer clamped to `[u, v]`.
#[allow(clippy::too_many_arguments)]
fn tuned_report(
    empirical: f64,
    slope: f64,
    kl: f64,
    n: SampleSize,
    alpha: f64,
    v: EtaValue,
    delta: ConfidenceLevel,
    consts: TuningConstants,
    eta: Option<EtaValue>,
) -> Result<BoundReport> {
    let weight = alpha * (kl + delta.log_inv() + consts.log_factor) / n.as_f64();
    let eta = match eta {
        Some(e) if e.get() <= v.get() => e,
        Some(e) => {
            return Err(Error::EtaOutOfRange {
                eta: e.get(),
                lo: 0.0,
                hi: v.get(),
            })
        }
        None => {
            let unconstrained = if slope > 0.0 {
                (weight / slope).sqrt()
            } else {
                f64::INFINITY
            };
            EtaValue::new(unconstrained.clamp(consts.u.get(), v.get()))?
        }
    };
    Ok(BoundReport::assemble(
        empirical,
        eta.get() * slope,
        weight / eta.get(),
        Some(eta),
    ))
}

/// PAC-Hoeffding: for losses in `[a, b]`, simultaneously for all
/// `eta` in `(0, v]`,
/// `E_post[R] <= E_post[R_n] + eta (b-a)^2/8
///   + alpha (KL + ln(1/delta) + ln(log_alpha(n)/2 + C)) / (eta n)`.
#[allow(clippy::too_many_arguments)]
pub fn pac_hoeffding_bound(
    posterior_empirical_risk: f64,
    kl: f64,
    n: SampleSize,
    range: LossRange,
    alpha: f64,
    v: EtaValue,
    delta: ConfidenceLevel,
    eta: Option<EtaValue>,
) -> Result<BoundReport> {
    check_empirical("posterior_empirical_risk", posterior_empirical_risk)?;
    check_kl(kl)?;
    let consts = hoeffding_constants(range, alpha, v, n)?;
    let slope = range.width() * range.width() / 8.0;
    tuned_report(
        posterior_empirical_risk,
        slope,
        kl,
        n,
        alpha,
        v,
        delta,
        consts,
        eta,
    )
}

/// PAC-Variance: for losses in `[a, b]` with `a <= 0`, simultaneously for
/// all `eta` in `(0, v]`,
/// `E_post[R] <= E_post[R_n] + eta phi(-a v) E_post[E loss^2]
///   + alpha (KL + ln(1/delta) + ln(log_alpha(n)/2 + C)) / (eta n)`.
#[allow(clippy::too_many_arguments)]
pub fn pac_variance_bound(
    posterior_empirical_risk: f64,
    kl: f64,
    posterior_sec_moment: f64,
    n: SampleSize,
    a: f64,
    b: f64,
    alpha: f64,
    v: EtaValue,
    delta: ConfidenceLevel,
    eta: Option<EtaValue>,
) -> Result<BoundReport> {
    check_empirical("posterior_empirical_risk", posterior_empirical_risk)?;
    check_kl(kl)?;
    if !(posterior_sec_moment >= 0.0 && posterior_sec_moment.is_finite()) {
        return Err(Error::param(
            "posterior_sec_moment",
            format!("must be >= 0, got {posterior_sec_moment}"),
        ));
    }
    let consts = variance_constants(a, b, alpha, v, n)?;
    let slope = variance_factor(a, EtaCap::Finite(v))? * posterior_sec_moment;
    tuned_report(
        posterior_empirical_risk,
        slope,
        kl,
        n,
        alpha,
        v,
        delta,
        consts,
        eta,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcessFlavor {
    Hoeffding,
    Variance,
}

/// Excess-risk bound on `E_post[R] - R(h*)` for losses in `[0, b]`, through
/// the relative loss `loss(h) - loss(h*)` which lies in `[-b, b]`.
///
/// The Hoeffding flavor is the PAC-Hoeffding bound on a range of width
/// `2b` (slack `eta b^2 / 2`); the variance flavor is PAC-Variance with
/// `a = -b`, so the slack is `eta phi(b v) E_post[E loss'^2]`.
#[allow(clippy::too_many_arguments)]
pub fn excess_risk_bounds(
    posterior_empirical_risk: f64,
    ref_empirical_risk: f64,
    kl: f64,
    posterior_sec_moment_relative: f64,
    n: SampleSize,
    b: f64,
    alpha: f64,
    v: EtaValue,
    delta: ConfidenceLevel,
    flavor: ExcessFlavor,
    eta: Option<EtaValue>,
) -> Result<BoundReport> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("b", format!("must be > 0, got {b}")));
    }
    check_empirical("ref_empirical_risk", ref_empirical_risk)?;
    let relative = posterior_empirical_risk - ref_empirical_risk;
    match flavor {
        ExcessFlavor::Hoeffding => pac_hoeffding_bound(
            relative,
            kl,
            n,
            LossRange::new(-b, b)?,
            alpha,
            v,
            delta,
            eta,
        ),
        ExcessFlavor::Variance => pac_variance_bound(
            relative,
            kl,
            posterior_sec_moment_relative,
            n,
            -b,
            b,
            alpha,
            v,
            delta,
            eta,
        ),
    }
}
