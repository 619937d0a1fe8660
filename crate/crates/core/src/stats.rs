//! Streaming statistics and the Cauchy kernel shared by learning and scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Embedding;

/// Lower bound on a class's scalar variance.
pub const VAR_FLOOR: f64 = 1e-12;

/// Welford accumulator over a scalar stream.
///
/// Variance is the population form (`m2 / count`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(count: u64, mean: f64, m2: f64) -> Self {
        RunningStats { count, mean, m2 }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

impl Extend<f64> for RunningStats {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut stats = RunningStats::new();
        stats.extend(iter);
        stats
    }
}

/// Per-dimension Welford accumulator over a vector stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningVecStats {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVecStats {
    pub fn new(dim: usize) -> Self {
        RunningVecStats {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn from_parts(count: u64, mean: Vec<f64>, m2: Vec<f64>) -> Self {
        RunningVecStats { count, mean, m2 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &xj) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = xj - *mean;
            *mean += delta / n;
            *m2 += delta * (xj - *mean);
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// Per-dimension population variance.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.m2.iter().map(|m2| (m2 / n).max(0.0)).collect()
    }

    /// Trace of the diagonal covariance, floored at [`VAR_FLOOR`].
    pub fn var_scalar(&self) -> f64 {
        if self.count == 0 {
            return VAR_FLOOR;
        }
        let n = self.count as f64;
        let total: f64 = self.m2.iter().map(|m2| m2 / n).sum();
        total.max(VAR_FLOOR)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `1 / (1 + d2 / var_scalar)`; never exceeds 1 for non-negative `d2`.
#[inline]
pub(crate) fn kernel(d2: f64, var_scalar: f64) -> f64 {
    1.0 / (1.0 + d2 / var_scalar)
}

/// Squared Euclidean distance.
pub fn squared_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(sq_dist(a.values(), b.values()))
}

/// Cauchy density of `x` around `mean` with scale `var_scalar`, in (0, 1].
pub fn cauchy_density(x: &Embedding, mean: &Embedding, var_scalar: f64) -> Result<f64> {
    check_dims(mean.dim(), x.dim())?;
    if !(var_scalar.is_finite() && var_scalar >= VAR_FLOOR) {
        return Err(Error::InvalidConfig(format!(
            "var_scalar {var_scalar} is below the floor {VAR_FLOOR}"
        )));
    }
    Ok(kernel(sq_dist(x.values(), mean.values()), var_scalar))
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}
