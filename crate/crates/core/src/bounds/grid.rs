use serde::Serialize;

use super::{check_empirical, check_kl, BoundReport, SampleSize};
use crate::error::{Error, Result};
use crate::kernels::{ConfidenceLevel, EtaValue};

/// Geometric grid `u alpha^i`, `i = 0 .. ceil(log_alpha(v/u)) - 1`.
///
/// Every `eta` in `[u, v]` has a grid point with `eta_i <= eta <= alpha eta_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaGrid {
    u: EtaValue,
    v: EtaValue,
    alpha: f64,
    points: Vec<EtaValue>,
}

impl EtaGrid {
    pub fn u(&self) -> EtaValue {
        self.u
    }

    pub fn v(&self) -> EtaValue {
        self.v
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn points(&self) -> &[EtaValue] {
        &self.points
    }

    pub fn cardinality(&self) -> usize {
        self.points.len()
    }

    /// Largest grid point `eta_i <= eta`, provided `eta <= alpha eta_i`.
    pub fn covering_point(&self, eta: EtaValue) -> Option<EtaValue> {
        let idx = self.points.partition_point(|p| p.get() <= eta.get());
        let point = *self.points.get(idx.checked_sub(1)?)?;
        (eta.get() <= self.alpha * point.get()).then_some(point)
    }

    pub fn contains(&self, eta: EtaValue) -> bool {
        self.u.get() <= eta.get() && eta.get() <= self.v.get()
    }
}

pub fn build_eta_grid(u: EtaValue, v: EtaValue, alpha: f64) -> Result<EtaGrid> {
    if u >= v {
        return Err(Error::InvalidGrid(format!(
            "need u < v, got u = {}, v = {}",
            u.get(),
            v.get()
        )));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidGrid(format!("need alpha > 1, got {alpha}")));
    }
    let ratio = (v.get() / u.get()).ln() / alpha.ln();
    // Snap ratios within rounding of an integer so that e.g. log_2(2) = 1.
    let nearest = ratio.round();
    let mut count = if (ratio - nearest).abs() <= 1e-12 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    }
    .max(1.0) as usize;
    // The covering argument needs u alpha^count >= v.
    while u.get() * alpha.powi(count as i32) < v.get() * (1.0 - 1e-12) {
        count += 1;
    }
    let points = (0..count)
        .map(|i| EtaValue::new(u.get() * alpha.powi(i as i32)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EtaGrid {
        u,
        v,
        alpha,
        points,
    })
}

/// PAC-Bayes bound holding simultaneously for all `eta` in `[u, v]`:
/// complexity `alpha (KL + ln(1/delta) + ln |grid|) / (eta n)`.
pub fn pac_bayes_grid_bound(
    posterior_empirical_risk: f64,
    kl: f64,
    n: SampleSize,
    eta: EtaValue,
    grid: &EtaGrid,
    delta: ConfidenceLevel,
) -> Result<BoundReport> {
    check_empirical("posterior_empirical_risk", posterior_empirical_risk)?;
    check_kl(kl)?;
    if !grid.contains(eta) {
        return Err(Error::EtaOutOfRange {
            eta: eta.get(),
            lo: grid.u.get(),
            hi: grid.v.get(),
        });
    }
    let log_card = (grid.cardinality() as f64).ln();
    let complexity = grid.alpha * (kl + delta.log_inv() + log_card) / (eta.get() * n.as_f64());
    Ok(BoundReport::assemble(
        posterior_empirical_risk,
        0.0,
        complexity,
        Some(eta),
    ))
}

/// Extra cost `2B/v` of restricting `min_eta (eta A + B/eta)` to `eta <= v`.
pub fn eta_truncation_penalty(a: f64, b: f64, v: EtaValue) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("A", format!("must be > 0, got {a}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("B", format!("must be > 0, got {b}")));
    }
    Ok(2.0 * b / v.get())
}
