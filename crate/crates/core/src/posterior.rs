//! Distributions over a finite hypothesis class: KL divergence, Gibbs
//! posteriors, localized priors and the alternating prior/posterior
//! iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{pac_bayes_grid_bound, EtaGrid, SampleSize};
use crate::error::{Error, Result};
use crate::kernels::{log_sum_exp, ConfidenceLevel, EtaValue};
use crate::sim::{argmin_risk, empirical_risks, sample_with_rng, trial_rng, Dataset, Environment};
use crate::stats::{mean_and_std_error, RunningMean};

const PROB_SUM_TOL: f64 = 1e-10;

/// Probability vector over hypotheses, used both as prior and posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        ProbVector::new(weights)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.weights
    }
}

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProbVector("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidProbVector(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidProbVector(format!("weights sum to {total}")));
        }
        Ok(ProbVector { weights })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidProbVector("no weights".into()));
        }
        Ok(ProbVector {
            weights: vec![1.0 / k as f64; k],
        })
    }

    pub fn point_mass(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::IndexOutOfRange { index, len: k });
        }
        let mut weights = vec![0.0; k];
        weights[index] = 1.0;
        Ok(ProbVector { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `sum_h weight_h values_h`.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(values)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| w * v)
            .sum())
    }

    /// Index of the largest weight, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn total_variation(&self, other: &ProbVector) -> Result<f64> {
        if other.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(0.5
            * self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }
}

/// `KL(post || prior) = sum post_i ln(post_i / prior_i)`, with `0 ln 0 = 0`.
/// Returns `+inf` when `post` puts mass where `prior` has none.
pub fn kl_divergence(post: &ProbVector, prior: &ProbVector) -> Result<f64> {
    if post.len() != prior.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.len(),
            found: post.len(),
        });
    }
    let mut kl = 0.0;
    for (&p, &q) in post.weights.iter().zip(&prior.weights) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += p * (p / q).ln();
    }
    // rounding can leave a tiny negative sum for post ~= prior
    Ok(kl.max(0.0))
}

/// Temperature of the Gibbs transform: weights `prior e^{-(eta/alpha) n r}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsParams {
    pub eta: EtaValue,
    pub alpha: f64,
    pub n: SampleSize,
}

impl GibbsParams {
    pub fn new(eta: EtaValue, alpha: f64, n: SampleSize) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be >= 1, got {alpha}")));
        }
        Ok(GibbsParams { eta, alpha, n })
    }

    /// `(eta / alpha) n`.
    pub fn exponent(&self) -> f64 {
        self.eta.get() / self.alpha * self.n.as_f64()
    }
}

fn gibbs_transform(prior: &ProbVector, risks: &[f64], scale: f64) -> Result<ProbVector> {
    if risks.len() != prior.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.len(),
            found: risks.len(),
        });
    }
    if let Some(r) = risks.iter().find(|r| !r.is_finite()) {
        return Err(Error::param("risks", format!("must be finite, got {r}")));
    }
    if prior.weights.iter().all(|w| *w == 0.0) {
        return Err(Error::AllMassZero);
    }
    let logits: Vec<f64> = prior
        .weights
        .iter()
        .zip(risks)
        .map(|(&w, &r)| {
            if w > 0.0 {
                w.ln() - scale * r
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let log_norm = log_sum_exp(&logits)?;
    let mut weights: Vec<f64> = logits.iter().map(|l| (l - log_norm).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(ProbVector { weights })
}

/// Gibbs posterior `prior(h) e^{-(eta/alpha) n R_n(h)}`, normalized.
pub fn gibbs_posterior(
    prior: &ProbVector,
    empirical_risks: &[f64],
    params: GibbsParams,
) -> Result<ProbVector> {
    gibbs_transform(prior, empirical_risks, params.exponent())
}

/// The localized prior: the same Gibbs transform applied to true risks.
pub fn localized_prior_true_risk(
    base_prior: &ProbVector,
    true_risks: &[f64],
    params: GibbsParams,
) -> Result<ProbVector> {
    gibbs_transform(base_prior, true_risks, params.exponent())
}

/// A data-dependent posterior rule.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorRule {
    /// Ignores the data.
    Constant(ProbVector),
    /// Point mass on the empirical risk minimizer.
    Erm,
    /// Gibbs posterior of the supplied prior with `n` taken from the data.
    Gibbs { eta: EtaValue, alpha: f64 },
}

impl PosteriorRule {
    pub fn apply(&self, prior: &ProbVector, data: &Dataset) -> Result<ProbVector> {
        self.apply_to_risks(prior, &empirical_risks(data), data.n())
    }

    pub(crate) fn apply_to_risks(
        &self,
        prior: &ProbVector,
        risks: &[f64],
        n: SampleSize,
    ) -> Result<ProbVector> {
        match self {
            PosteriorRule::Constant(q) => Ok(q.clone()),
            PosteriorRule::Erm => ProbVector::point_mass(risks.len(), argmin_risk(risks)),
            PosteriorRule::Gibbs { eta, alpha } => {
                gibbs_posterior(prior, risks, GibbsParams::new(*eta, *alpha, n)?)
            }
        }
    }
}

fn running_mean_vector(vectors: &[ProbVector]) -> Result<ProbVector> {
    let k = vectors.first().ok_or(Error::EmptyInput)?.len();
    let mut means = vec![RunningMean::default(); k];
    for v in vectors {
        for (m, w) in means.iter_mut().zip(v.weights()) {
            m.push(*w);
        }
    }
    ProbVector::new(means.iter().map(RunningMean::value).collect())
}

/// Monte Carlo estimate of the bound-optimal prior `E_D[posterior(D)]`.
///
/// Trial `t` draws its dataset from stream `t` of `seed`; the result does
/// not depend on the number of worker threads.
pub fn optimal_prior_monte_carlo(
    env: &Environment,
    n: SampleSize,
    prior: &ProbVector,
    rule: &PosteriorRule,
    trials: usize,
    seed: u64,
) -> Result<ProbVector> {
    if trials == 0 {
        return Err(Error::param("trials", "must be >= 1"));
    }
    if prior.len() != env.len() {
        return Err(Error::DimensionMismatch {
            expected: env.len(),
            found: prior.len(),
        });
    }
    let posteriors = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let data = sample_with_rng(env, n, &mut trial_rng(seed, t));
            rule.apply(prior, &data)
        })
        .collect::<Result<Vec<_>>>()?;
    running_mean_vector(&posteriors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOptions {
    pub trials: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Confidence level of the grid bound reported per iteration.
    pub delta: ConfidenceLevel,
    /// Grid of the reported bound; must contain the Gibbs `eta`.
    pub grid: EtaGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointStep {
    pub iteration: usize,
    /// Prior in force during this iteration.
    pub prior: Vec<f64>,
    /// Monte Carlo mean of the grid bound with Gibbs posteriors of `prior`.
    pub bound_mean: f64,
    pub bound_std_error: f64,
    /// Total variation between `prior` and the next prior.
    pub tv_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub prior: ProbVector,
    pub trace: Vec<FixedPointStep>,
    pub converged: bool,
}

/// Alternates Gibbs posteriors (optimal for the current prior) with the
/// Monte Carlo average of those posteriors (optimal prior for them).
///
/// The same `trials` datasets are reused at every iteration, so the
/// reported bound is the exact expectation under their empirical
/// distribution and each step can only lower it. Stops once the total
/// variation between successive priors drops below `tol`.
pub fn fixed_point_iteration(
    env: &Environment,
    init_prior: &ProbVector,
    params: GibbsParams,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    if opts.trials == 0 {
        return Err(Error::param("trials", "must be >= 1"));
    }
    if opts.max_iters == 0 {
        return Err(Error::param("max_iters", "must be >= 1"));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::param(
            "tol",
            format!("must be > 0, got {}", opts.tol),
        ));
    }
    if init_prior.len() != env.len() {
        return Err(Error::DimensionMismatch {
            expected: env.len(),
            found: init_prior.len(),
        });
    }
    if !opts.grid.contains(params.eta) {
        return Err(Error::EtaOutOfRange {
            eta: params.eta.get(),
            lo: opts.grid.u().get(),
            hi: opts.grid.v().get(),
        });
    }

    let n = params.n;
    let risks: Vec<Vec<f64>> = (0..opts.trials as u64)
        .into_par_iter()
        .map(|t| empirical_risks(&sample_with_rng(env, n, &mut trial_rng(opts.seed, t))))
        .collect();

    let mut prior = init_prior.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 0..opts.max_iters {
        let evaluated = risks
            .par_iter()
            .map(|r| {
                let post = gibbs_posterior(&prior, r, params)?;
                let kl = kl_divergence(&post, &prior)?;
                let emp = post.expectation(r)?;
                let bound = pac_bayes_grid_bound(emp, kl, n, params.eta, &opts.grid, opts.delta)?;
                Ok((post, bound.total))
            })
            .collect::<Result<Vec<_>>>()?;
        let (posteriors, bounds): (Vec<ProbVector>, Vec<f64>) = evaluated.into_iter().unzip();
        let (bound_mean, bound_std_error) = mean_and_std_error(&bounds);
        let next = running_mean_vector(&posteriors)?;
        let tv_distance = next.total_variation(&prior)?;
        trace.push(FixedPointStep {
            iteration,
            prior: prior.weights.clone(),
            bound_mean,
            bound_std_error,
            tv_distance,
        });
        prior = next;
        if tv_distance < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(FixedPointResult {
        prior,
        trace,
        converged,
    })
}
