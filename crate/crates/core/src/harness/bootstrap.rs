//! Bias-corrected and accelerated (BCa) bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::{mean, median};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Mean,
    Median,
}

impl Statistic {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Statistic::Mean => mean(x),
            Statistic::Median => median(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn degenerate(point: f64) -> Self {
        Interval { point, lo: point, hi: point }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap replicates of `stat`, sorted ascending.
pub fn bootstrap_replicates<R: Rng + ?Sized>(
    samples: &[f64],
    stat: Statistic,
    resamples: usize,
    rng: &mut R,
) -> Vec<f64> {
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let mut reps: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = samples[rng.random_range(0..n)];
            }
            stat.eval(&buf)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    reps
}

/// BCa interval for `stat` at confidence `level`.
pub fn bca_interval<R: Rng + ?Sized>(
    samples: &[f64],
    stat: Statistic,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<Interval> {
    if samples.len() < 2 {
        return Err(Error::validation("BCa interval needs at least two samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("BCa samples must be finite"));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::validation(format!("confidence level must lie in [0, 1), got {level}")));
    }
    if resamples == 0 {
        return Err(Error::validation("BCa needs at least one resample"));
    }
    let point = stat.eval(samples);
    if level == 0.0 || samples.iter().all(|&v| v == samples[0]) {
        return Ok(Interval::degenerate(point));
    }
    let normal = Normal::standard();
    let reps = bootstrap_replicates(samples, stat, resamples, rng);
    let b = resamples as f64;
    let below = reps.iter().filter(|&&r| r < point).count() as f64;
    let equal = reps.iter().filter(|&&r| r == point).count() as f64;
    let frac = ((below + 0.5 * equal) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let z0 = normal.inverse_cdf(frac);

    // Jackknife acceleration.
    let n = samples.len();
    let mut rest = Vec::with_capacity(n - 1);
    let jack: Vec<f64> = (0..n)
        .map(|i| {
            rest.clear();
            rest.extend(samples.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v));
            stat.eval(&rest)
        })
        .collect();
    let jbar = mean(&jack);
    let num: f64 = jack.iter().map(|j| (jbar - j).powi(3)).sum();
    let den: f64 = jack.iter().map(|j| (jbar - j).powi(2)).sum();
    let a = if den > 0.0 { num / (6.0 * den.powf(1.5)) } else { 0.0 };

    let adjust = |alpha: f64| {
        let z = normal.inverse_cdf(alpha);
        let shifted = z0 + z;
        normal.cdf(z0 + shifted / (1.0 - a * shifted)).clamp(0.0, 1.0)
    };
    let tail = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&reps, adjust(tail));
    let hi = quantile_sorted(&reps, adjust(1.0 - tail));
    Ok(Interval { point, lo, hi })
}
