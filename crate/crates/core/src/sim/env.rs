use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::SampleSize;
use crate::error::{Error, Result};
use crate::kernels::{DiscreteLossDistribution, LossRange};

/// How losses of different hypotheses on the same example are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// One uniform draw per example, pushed through every hypothesis's
    /// inverse CDF.
    #[default]
    Shared,
    /// An independent uniform draw per hypothesis and example.
    Independent,
}

/// Inverse CDF of a discrete law over its positive-probability atoms.
#[derive(Debug, Clone, PartialEq)]
struct Quantiles {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Quantiles {
    fn new(dist: &DiscreteLossDistribution) -> Self {
        let mut atoms: Vec<(f64, f64)> = dist.atoms().collect();
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = atoms
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Quantiles {
            values: atoms.into_iter().map(|(z, _)| z).collect(),
            cumulative,
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        let idx = self.cumulative.partition_point(|c| *c <= u);
        self.values[idx.min(self.values.len() - 1)]
    }
}

/// One loss law per hypothesis, i.i.d. across examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    hypotheses: Vec<DiscreteLossDistribution>,
    labels: Option<Vec<String>>,
    range: LossRange,
    coupling: Coupling,
    quantiles: Vec<Quantiles>,
}

impl Environment {
    pub fn new(hypotheses: Vec<DiscreteLossDistribution>, range: LossRange) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::param(
                "hypotheses",
                "environment needs at least one law",
            ));
        }
        for (h, law) in hypotheses.iter().enumerate() {
            if !(range.contains(law.min_support()) && range.contains(law.max_support())) {
                return Err(Error::param(
                    "hypotheses",
                    format!(
                        "law {h} has support outside [{}, {}]",
                        range.lower(),
                        range.upper()
                    ),
                ));
            }
        }
        let quantiles = hypotheses.iter().map(Quantiles::new).collect();
        Ok(Environment {
            hypotheses,
            labels: None,
            range,
            coupling: Coupling::Shared,
            quantiles,
        })
    }

    pub fn with_coupling(mut self, coupling: Coupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.hypotheses.len() {
            return Err(Error::DimensionMismatch {
                expected: self.hypotheses.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn hypotheses(&self) -> &[DiscreteLossDistribution] {
        &self.hypotheses
    }

    pub fn hypothesis(&self, h: usize) -> Result<&DiscreteLossDistribution> {
        self.hypotheses.get(h).ok_or(Error::IndexOutOfRange {
            index: h,
            len: self.hypotheses.len(),
        })
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn range(&self) -> LossRange {
        self.range
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn true_risks(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|d| d.mean()).collect()
    }

    pub fn second_moments(&self) -> Vec<f64> {
        self.hypotheses.iter().map(|d| d.second_moment()).collect()
    }
}

/// Induced loss table of a sample: `n` rows (examples) by `K` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: SampleSize,
    k: usize,
    losses: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = SampleSize::new(rows.len())?;
        let k = rows[0].len();
        if k == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        Ok(Dataset {
            n,
            k,
            losses: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n(&self) -> SampleSize {
        self.n
    }

    pub fn num_hypotheses(&self) -> usize {
        self.k
    }

    pub fn loss(&self, row: usize, h: usize) -> f64 {
        self.losses[row * self.k + h]
    }

    pub fn column(&self, h: usize) -> impl Iterator<Item = f64> + '_ {
        self.losses.iter().skip(h).step_by(self.k).copied()
    }
}

/// Generator for stream `stream` of `seed`. Every trial of every Monte
/// Carlo routine owns one stream, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_with_rng<R: Rng + ?Sized>(env: &Environment, n: SampleSize, rng: &mut R) -> Dataset {
    let k = env.len();
    let mut losses = Vec::with_capacity(n.get() * k);
    for _ in 0..n.get() {
        match env.coupling {
            Coupling::Shared => {
                let u: f64 = rng.random();
                losses.extend(env.quantiles.iter().map(|q| q.quantile(u)));
            }
            Coupling::Independent => {
                for q in &env.quantiles {
                    losses.push(q.quantile(rng.random()));
                }
            }
        }
    }
    Dataset { n, k, losses }
}

/// Draws `n` i.i.d. examples; a deterministic function of `(env, n, seed)`.
pub fn sample_dataset(env: &Environment, n: SampleSize, seed: u64) -> Dataset {
    sample_with_rng(env, n, &mut trial_rng(seed, 0))
}

/// `R_n(h)`, the mean of column `h`.
pub fn empirical_risk(data: &Dataset, h: usize) -> Result<f64> {
    if h >= data.k {
        return Err(Error::IndexOutOfRange {
            index: h,
            len: data.k,
        });
    }
    Ok(data.column(h).sum::<f64>() / data.n.as_f64())
}

pub fn empirical_risks(data: &Dataset) -> Vec<f64> {
    let mut sums = vec![0.0; data.k];
    for row in data.losses.chunks_exact(data.k) {
        sums.iter_mut().zip(row).for_each(|(s, z)| *s += z);
    }
    let n = data.n.as_f64();
    sums.into_iter().map(|s| s / n).collect()
}

/// `R(h)`, exact.
pub fn true_risk(env: &Environment, h: usize) -> Result<f64> {
    env.hypothesis(h).map(|d| d.mean())
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin_risk(risks: &[f64]) -> usize {
    let mut best = 0;
    for (i, r) in risks.iter().enumerate() {
        if *r < risks[best] {
            best = i;
        }
    }
    best
}

/// Empirical risk minimizer.
pub fn erm(data: &Dataset) -> usize {
    argmin_risk(&empirical_risks(data))
}

/// `h* = argmin_h R(h)`.
pub fn best_hypothesis(env: &Environment) -> usize {
    argmin_risk(&env.true_risks())
}

fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Result<DiscreteLossDistribution> {
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (z, p) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == z => last.1 += p,
            _ => merged.push((z, p)),
        }
    }
    let (support, probs) = merged.into_iter().unzip();
    DiscreteLossDistribution::new(support, probs)
}

fn relative_law(env: &Environment, h: usize, reference: usize) -> Result<DiscreteLossDistribution> {
    if h == reference {
        return DiscreteLossDistribution::point_mass(0.0);
    }
    let (qh, qr) = (&env.quantiles[h], &env.quantiles[reference]);
    let atoms = match env.coupling {
        Coupling::Shared => {
            let mut cuts: Vec<f64> = qh
                .cumulative
                .iter()
                .chain(&qr.cumulative)
                .copied()
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut prev = 0.0;
            let mut atoms = Vec::with_capacity(cuts.len());
            for cut in cuts {
                if cut > prev {
                    let mid = 0.5 * (prev + cut);
                    atoms.push((qh.quantile(mid) - qr.quantile(mid), cut - prev));
                    prev = cut;
                }
            }
            atoms
        }
        Coupling::Independent => {
            let mut atoms = Vec::new();
            for (z, p) in env.hypotheses[h].atoms() {
                for (w, q) in env.hypotheses[reference].atoms() {
                    atoms.push((z - w, p * q));
                }
            }
            atoms
        }
    };
    merge_atoms(atoms)
}

/// Environment of relative losses `loss(h) - loss(h*)` on a shared example,
/// with `h*` the lowest-index minimizer of the true risk. The range becomes
/// `[a - b, b - a]`.
pub fn relative_loss_env(env: &Environment) -> Result<Environment> {
    let reference = best_hypothesis(env);
    let laws = (0..env.len())
        .map(|h| relative_law(env, h, reference))
        .collect::<Result<Vec<_>>>()?;
    let w = env.range.width();
    let mut rel = Environment::new(laws, LossRange::new(-w, w)?)?;
    rel.coupling = env.coupling;
    rel.labels = env.labels.clone();
    Ok(rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> LossRange {
        LossRange::new(0.0, 1.0).unwrap()
    }
    fn n(k: usize) -> SampleSize {
        SampleSize::new(k).unwrap()
    }

    #[test]
    fn point_mass_laws_fill_the_table() {
        let laws = vec![
            DiscreteLossDistribution::point_mass(0.25).unwrap(),
            DiscreteLossDistribution::point_mass(0.75).unwrap(),
        ];
        let env = Environment::new(laws, unit()).unwrap();
        let data = sample_dataset(&env, n(12), 3);
        assert!(data.column(0).all(|z| z == 0.25));
        assert!(data.column(1).all(|z| z == 0.75));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let env = Environment::new(
            vec![DiscreteLossDistribution::bernoulli(0.4).unwrap()],
            unit(),
        )
        .unwrap();
        assert_eq!(
            sample_dataset(&env, n(50), 11),
            sample_dataset(&env, n(50), 11)
        );
        assert_ne!(
            sample_dataset(&env, n(50), 11),
            sample_dataset(&env, n(50), 12)
        );
    }

    #[test]
    fn bernoulli_column_mean_concentrates() {
        let env = Environment::new(
            vec![DiscreteLossDistribution::bernoulli(0.3).unwrap()],
            unit(),
        )
        .unwrap();
        let data = sample_dataset(&env, n(100_000), 2024);
        let mean = empirical_risk(&data, 0).unwrap();
        assert!((mean - 0.3).abs() < 0.005, "{mean}");
    }

    #[test]
    fn empirical_risk_examples() {
        let data = Dataset::from_rows(vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(empirical_risk(&data, 0).unwrap(), 0.0);
        assert_eq!(empirical_risk(&data, 1).unwrap(), 0.5);
        assert!(empirical_risk(&data, 2).is_err());
        let single = Dataset::from_rows(vec![vec![0.7]]).unwrap();
        assert_eq!(empirical_risk(&single, 0).unwrap(), 0.7);
        assert_eq!(empirical_risks(&data), vec![0.0, 0.5]);
    }

    #[test]
    fn true_risk_examples() {
        let laws = vec![
            DiscreteLossDistribution::bernoulli(0.3).unwrap(),
            DiscreteLossDistribution::point_mass(0.7).unwrap(),
            DiscreteLossDistribution::uniform(vec![-1.0, 0.0, 1.0]).unwrap(),
        ];
        let env = Environment::new(laws, LossRange::new(-1.0, 1.0).unwrap()).unwrap();
        assert!((true_risk(&env, 0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(true_risk(&env, 1).unwrap(), 0.7);
        assert!(true_risk(&env, 2).unwrap().abs() < 1e-15);
        assert!(true_risk(&env, 3).is_err());
    }

    #[test]
    fn erm_examples() {
        assert_eq!(argmin_risk(&[0.5]), 0);
        assert_eq!(argmin_risk(&[0.4, 0.2, 0.2]), 1);
        assert_eq!(argmin_risk(&[0.1, 0.3]), 0);
        let data = Dataset::from_rows(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(erm(&data), 0);
    }

    #[test]
    fn environment_rejects_out_of_range_support() {
        let laws = vec![DiscreteLossDistribution::point_mass(2.0).unwrap()];
        assert!(Environment::new(laws, unit()).is_err());
        assert!(Environment::new(vec![], unit()).is_err());
    }

    #[test]
    fn relative_loss_independent_coupling() {
        let (p, q) = (0.6, 0.3);
        let laws = vec![
            DiscreteLossDistribution::bernoulli(p).unwrap(),
            DiscreteLossDistribution::bernoulli(q).unwrap(),
        ];
        let env = Environment::new(laws, unit())
            .unwrap()
            .with_coupling(Coupling::Independent);
        let rel = relative_loss_env(&env).unwrap();
        let law = rel.hypothesis(0).unwrap();
        let prob_of = |z: f64| -> f64 { law.atoms().filter(|a| a.0 == z).map(|a| a.1).sum() };
        // brute force over the four joint outcomes
        let mut expected = [0.0; 3];
        for (lh, ph) in [(0.0, 1.0 - p), (1.0, p)] {
            for (lr, pr) in [(0.0, 1.0 - q), (1.0, q)] {
                expected[(lh - lr + 1.0) as usize] += ph * pr;
            }
        }
        assert!((prob_of(1.0) - p * (1.0 - q)).abs() < 1e-15);
        assert!((prob_of(-1.0) - q * (1.0 - p)).abs() < 1e-15);
        for (i, z) in [-1.0, 0.0, 1.0].iter().enumerate() {
            assert!((prob_of(*z) - expected[i]).abs() < 1e-15);
        }
        assert_eq!(
            rel.hypothesis(1).unwrap(),
            &DiscreteLossDistribution::point_mass(0.0).unwrap()
        );
        assert_eq!(rel.range(), LossRange::new(-1.0, 1.0).unwrap());
    }

    #[test]
    fn relative_loss_shared_coupling_matches_sampled_pairs() {
        let laws = vec![
            DiscreteLossDistribution::new(vec![0.0, 0.5, 1.0], vec![0.5, 0.2, 0.3]).unwrap(),
            DiscreteLossDistribution::new(vec![0.0, 0.2, 1.0], vec![0.6, 0.3, 0.1]).unwrap(),
        ];
        let env = Environment::new(laws, unit()).unwrap();
        let rel = relative_loss_env(&env).unwrap();
        let diff = rel.hypothesis(0).unwrap();
        let gap = true_risk(&env, 0).unwrap() - true_risk(&env, 1).unwrap();
        assert!((diff.mean() - gap).abs() < 1e-15);

        let data = sample_dataset(&env, n(1), 5);
        let observed = data.loss(0, 0) - data.loss(0, 1);
        assert!(diff.support().contains(&observed));
    }
}
