//! Standard errors, Wilson intervals and z-scores.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A point estimate with its standard error and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl EstimateWithError {
    pub fn new(value: f64, stderr: f64, n: u64) -> Self {
        EstimateWithError { value, stderr, n }
    }

    /// `|value - target| <= k * stderr`.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Sample mean and `stdev / sqrt(n)` with the `n - 1` denominator.
pub fn mean_stderr(samples: &[f64]) -> Result<EstimateWithError> {
    if samples.is_empty() {
        return Err(Error::domain("sample count", 0.0, "at least one sample"));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(EstimateWithError::new(mean, 0.0, 1));
    }
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    Ok(EstimateWithError::new(mean, sd / (n as f64).sqrt(), n as u64))
}

/// Counts of a variable taking values in `{-1, 0, +1}`.
///
/// Products of detector outcomes only take these values, so the moments are
/// exact integer ratios and independent of summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SignTally {
    pub plus: u64,
    pub minus: u64,
    pub zero: u64,
}

impl SignTally {
    pub fn push(&mut self, v: i8) {
        match v {
            1 => self.plus += 1,
            -1 => self.minus += 1,
            0 => self.zero += 1,
            _ => panic!("SignTally only accepts -1, 0, 1; got {v}"),
        }
    }

    pub fn count(&self) -> u64 {
        self.plus + self.minus + self.zero
    }

    pub fn merge(&mut self, other: &SignTally) {
        self.plus += other.plus;
        self.minus += other.minus;
        self.zero += other.zero;
    }

    /// Same result as [`mean_stderr`] on the expanded sample; `None` when empty.
    pub fn estimate(&self) -> Option<EstimateWithError> {
        let n = self.count();
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = (self.plus as f64 - self.minus as f64) / nf;
        if n == 1 {
            return Some(EstimateWithError::new(mean, 0.0, 1));
        }
        let second = (self.plus + self.minus) as f64 / nf;
        let var = (nf / (nf - 1.0) * (second - mean * mean)).max(0.0);
        Some(EstimateWithError::new(mean, (var / nf).sqrt(), n))
    }
}

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain("confidence level", level, "0 < level < 1"));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// Wilson score interval for a binomial proportion.
pub fn binomial_ci(successes: u64, trials: u64, level: f64) -> Result<Interval> {
    if trials == 0 {
        return Err(Error::domain("trials", 0.0, "trials >= 1"));
    }
    if successes > trials {
        return Err(Error::domain("successes", successes as f64, "successes <= trials"));
    }
    let z = normal_quantile(level)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok(Interval { lower, upper })
}

/// Binomial rate `k / n` with its plug-in standard error.
pub fn rate_estimate(successes: u64, trials: u64) -> Result<EstimateWithError> {
    if trials == 0 {
        return Err(Error::domain("trials", 0.0, "trials >= 1"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    Ok(EstimateWithError::new(p, (p * (1.0 - p) / n).sqrt(), trials))
}

/// Standard error of a sum of independent estimates.
pub fn quadrature(stderrs: &[f64]) -> f64 {
    stderrs.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// `(S - bound) / stderr(S)`.
pub fn violation_zscore(s: &EstimateWithError, bound: f64) -> Result<f64> {
    if s.stderr <= 0.0 {
        return Err(Error::DegenerateEstimate);
    }
    Ok((s.value - bound) / s.stderr)
}
