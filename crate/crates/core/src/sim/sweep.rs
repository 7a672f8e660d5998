//! Monte Carlo tightness comparison across bound kinds and sample sizes.

use serde::Serialize;

use crate::bounds::SampleSize;
use crate::error::{Error, Result};
use crate::sim::coverage::{evaluate_trials, trial_risks, BoundKind, CoverageSetup};
use crate::stats::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: BoundKind,
    pub n: usize,
    pub mean_total: f64,
    pub mean_left: f64,
    pub mean_gap: f64,
}

/// Mean bound, target and gap per (kind, n); `setup.n` is ignored.
///
/// Every kind at a given `n` sees the same datasets.
pub fn tightness_sweep(
    setup: &CoverageSetup,
    n_list: &[SampleSize],
    kinds: &[BoundKind],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::param("trials", "must be positive"));
    }
    if kinds.is_empty() {
        return Err(Error::param("kinds", "at least one bound kind is required"));
    }
    if n_list.is_empty() {
        return Err(Error::param(
            "n_list",
            "at least one sample size is required",
        ));
    }
    let mut rows = Vec::with_capacity(kinds.len() * n_list.len());
    for &n in n_list {
        let at_n = CoverageSetup { n, ..setup.clone() };
        let risks = trial_risks(&at_n, trials, seed);
        for &kind in kinds {
            let outcomes = evaluate_trials(&at_n, kind, &risks)?;
            let (mut total, mut left) = (CompensatedSum::default(), CompensatedSum::default());
            for o in &outcomes {
                total.add(o.total);
                left.add(o.left);
            }
            let t = trials as f64;
            let (mean_total, mean_left) = (total.value() / t, left.value() / t);
            rows.push(SweepRow {
                kind,
                n: n.get(),
                mean_total,
                mean_left,
                mean_gap: mean_total - mean_left,
            });
        }
    }
    Ok(rows)
}
