//! Trial-level metrics and censoring-aware summaries.

use serde::{Deserialize, Serialize};

pub use crate::policies::f1_score;

/// First round `t` (1-based) at which `F1_t ≥ thr`.
///
/// With `sustain > 1` the value must also hold for `sustain` consecutive
/// rounds, all of them inside the trajectory.
pub fn samples_to_threshold(f1: &[f64], thr: f64, sustain: usize) -> Option<usize> {
    let w = sustain.max(1);
    let mut run = 0;
    for (idx, &v) in f1.iter().enumerate() {
        if v >= thr {
            run += 1;
            if run == w {
                return Some(idx + 2 - w);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Median with censored entries treated as `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredMedian {
    /// `None` when the median is not a finite observed value.
    pub value: Option<f64>,
    pub successes: usize,
    pub total: usize,
}

impl CensoredMedian {
    pub fn success_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.successes as f64 / self.total as f64
        }
    }

    pub fn converged(&self) -> bool {
        self.value.is_some()
    }
}

/// Median of `values` where `None` means "never reached". Reported only when
/// at least half the trials succeed and the median itself is finite.
pub fn censored_median(values: &[Option<f64>]) -> CensoredMedian {
    let total = values.len();
    let mut observed: Vec<f64> = values.iter().flatten().copied().collect();
    let successes = observed.len();
    observed.sort_by(f64::total_cmp);
    let value = if total == 0 || 2 * successes < total {
        None
    } else {
        let at = |i: usize| observed.get(i).copied().unwrap_or(f64::INFINITY);
        let m = if total % 2 == 1 {
            at(total / 2)
        } else {
            0.5 * (at(total / 2 - 1) + at(total / 2))
        };
        m.is_finite().then_some(m)
    };
    CensoredMedian { value, successes, total }
}

/// Plain median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// About `points` evenly spaced rounds in `1..=horizon`, always including
/// both ends.
pub fn curve_grid(horizon: usize, points: usize) -> Vec<usize> {
    if horizon == 0 {
        return Vec::new();
    }
    let points = points.clamp(2, horizon.max(2));
    let mut grid: Vec<usize> = (0..points)
        .map(|i| 1 + ((horizon - 1) as f64 * i as f64 / (points - 1) as f64).round() as usize)
        .collect();
    grid.dedup();
    grid
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}
