//! Order-deterministic accumulators for Monte Carlo aggregates.

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Incremental mean `m += (x - m) / k`; a constant sequence returns the
/// constant exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMean {
    mean: f64,
    count: u64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }

    pub fn value(&self) -> f64 {
        self.mean
    }
}

/// Sample mean and standard error of the mean (0 for fewer than two values).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = values.len() as f64;
    let mut sum = CompensatedSum::default();
    values.iter().for_each(|v| sum.add(*v));
    let mean = sum.value() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq = CompensatedSum::default();
    values.iter().for_each(|v| sq.add((v - mean) * (v - mean)));
    let var = sq.value() / (k - 1.0);
    (mean, (var / k).sqrt())
}
