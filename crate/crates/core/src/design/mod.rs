//! Measurement-vector constructors.
//!
//! The central routine is [`design_budgeted`], which finds the measurement
//! that best separates a champion/challenger pair: the minimum-variance `c`
//! with unit response to `Δ = δ_i e_i − δ_j e_j` inside the L1 budget. The
//! remaining constructors are the baseline action rules.

mod qp;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covmodel::CovarianceModel;
use crate::error::{Error, Result};

pub use qp::{minimum_budget, unconstrained_direction, DesignTolerances, QpSolution};

/// A measurement vector together with its design metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAction {
    pub c: Vec<f64>,
    pub target_pair: Option<(usize, usize)>,
    /// `cᵀΣc`.
    pub objective: f64,
    /// `|cᵀΔ − 1|`; absent for actions not aimed at a contrast.
    pub eq_residual: Option<f64>,
    pub l1_norm: f64,
}

impl MeasurementAction {
    pub fn new(c: Vec<f64>, cov: &CovarianceModel, delta: Option<&[f64]>) -> Self {
        let objective = cov.quad_form(&c);
        let eq_residual = delta.map(|d| (dot(&c, d) - 1.0).abs());
        let l1_norm = qp::l1(&c);
        MeasurementAction { c, target_pair: None, objective, eq_residual, l1_norm }
    }

    pub fn with_pair(mut self, i: usize, j: usize) -> Self {
        self.target_pair = Some((i, j));
        self
    }

    /// Ratio `(cᵀΔ)² / cᵀΣc`, i.e. twice the KL rate this action achieves on `Δ`.
    pub fn ratio(&self, delta: &[f64]) -> f64 {
        dot(&self.c, delta).powi(2) / self.objective
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Contrast vector `δ_i e_i − δ_j e_j`.
pub fn pair_contrast(delta: &[f64], i: usize, j: usize) -> Vec<f64> {
    let mut d = vec![0.0; delta.len()];
    d[i] = delta[i];
    d[j] = -delta[j];
    d
}

/// KL divergence between the observation laws under means `mu_i` and `mu_j`.
pub fn pairwise_kl(c: &[f64], mu_i: &[f64], mu_j: &[f64], cov: &CovarianceModel) -> Result<f64> {
    if c.iter().all(|&v| v == 0.0) {
        return Err(Error::Action("measurement vector is zero".into()));
    }
    let var = cov.quad_form(c);
    if !(var > 0.0) {
        return Err(Error::Numeric(format!("cᵀΣc = {var} is not positive")));
    }
    let diff: f64 = c.iter().zip(mu_i.iter().zip(mu_j)).map(|(a, (x, y))| a * (x - y)).sum();
    Ok(diff * diff / (2.0 * var))
}

fn check_delta(cov: &CovarianceModel, delta: &[f64]) -> Result<()> {
    if delta.len() != cov.k() {
        return Err(Error::validation(format!(
            "Δ has length {} but K={}",
            delta.len(),
            cov.k()
        )));
    }
    if delta.iter().all(|&d| d == 0.0) {
        return Err(Error::validation("Δ must be non-zero"));
    }
    if delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::validation("Δ must be finite"));
    }
    Ok(())
}

/// `argmin cᵀΣc s.t. cᵀΔ = 1`, ignoring the budget.
pub fn design_unconstrained(cov: &CovarianceModel, delta: &[f64]) -> Result<MeasurementAction> {
    check_delta(cov, delta)?;
    let c = unconstrained_direction(cov, delta)?;
    Ok(MeasurementAction::new(c, cov, Some(delta)))
}

/// `argmin cᵀΣc s.t. cᵀΔ = 1, ‖c‖₁ ≤ B`.
pub fn design_budgeted(cov: &CovarianceModel, delta: &[f64], budget: f64) -> Result<MeasurementAction> {
    design_budgeted_with(cov, delta, budget, &DesignTolerances::default())
}

pub fn design_budgeted_with(
    cov: &CovarianceModel,
    delta: &[f64],
    budget: f64,
    tol: &DesignTolerances,
) -> Result<MeasurementAction> {
    check_delta(cov, delta)?;
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::validation(format!("budget must be positive, got {budget}")));
    }
    let sol = qp::solve_budgeted(cov, delta, budget, tol)?;
    Ok(MeasurementAction::new(sol.c, cov, Some(delta)))
}

/// Best signed coordinate measurement `±e_k` for the contrast `Δ`.
pub fn restricted_best(cov: &CovarianceModel, delta: &[f64]) -> Result<MeasurementAction> {
    check_delta(cov, delta)?;
    let sigma = cov.sigma();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (k, &d) in delta.iter().enumerate() {
        let r = d * d / sigma[(k, k)];
        if r > best.1 {
            best = (k, r);
        }
    }
    let mut c = vec![0.0; delta.len()];
    c[best.0] = if delta[best.0] < 0.0 { -1.0 } else { 1.0 };
    let mut action = MeasurementAction::new(c, cov, Some(delta));
    // The coordinate action is not normalised to unit response.
    action.eq_residual = None;
    Ok(action)
}

/// Random sparse projection: `⌈B⌉` random coordinates with Gaussian weights,
/// rescaled to L1 norm `B`.
pub fn rsp_action<R: Rng + ?Sized>(
    cov: &CovarianceModel,
    budget: f64,
    rng: &mut R,
) -> Result<MeasurementAction> {
    let k = cov.k();
    let m = budget.ceil();
    if !(m >= 1.0 && m <= k as f64) {
        return Err(Error::validation(format!("RSP needs 1 <= ceil(B) <= K, got B={budget}, K={k}")));
    }
    let m = m as usize;
    let support = index::sample(rng, k, m).into_vec();
    let weights = loop {
        let w: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        if w.iter().any(|&v| v != 0.0) {
            break w;
        }
    };
    let norm: f64 = weights.iter().map(|v| v.abs()).sum();
    let mut c = vec![0.0; k];
    for (&i, w) in support.iter().zip(&weights) {
        c[i] = w / norm * budget;
    }
    Ok(MeasurementAction::new(c, cov, None))
}

/// `B·e_{(t−1) mod K}`.
pub fn round_robin_action(cov: &CovarianceModel, t: usize, budget: f64) -> Result<MeasurementAction> {
    if t == 0 {
        return Err(Error::validation("round index starts at 1"));
    }
    let k = cov.k();
    let mut c = vec![0.0; k];
    c[(t - 1) % k] = budget;
    Ok(MeasurementAction::new(c, cov, None))
}

/// `(B/2)(e_i − e_j)`.
pub fn simple_diff_action(
    cov: &CovarianceModel,
    i: usize,
    j: usize,
    budget: f64,
) -> Result<MeasurementAction> {
    let k = cov.k();
    if i == j || i >= k || j >= k {
        return Err(Error::validation(format!("simple difference needs distinct indices < K, got ({i}, {j})")));
    }
    let mut c = vec![0.0; k];
    c[i] = budget / 2.0;
    c[j] = -budget / 2.0;
    Ok(MeasurementAction::new(c, cov, None).with_pair(i, j))
}

/// Half of `ΔᵀΣ⁻¹Δ`: the best KL rate any measurement achieves on this
/// contrast when the budget is inactive.
pub fn pair_information(cov: &CovarianceModel, delta: &[f64]) -> Result<f64> {
    check_delta(cov, delta)?;
    let x = cov.solve(delta);
    Ok(dot(delta, &x) / 2.0)
}

/// Minimum over single swaps `(i ∈ S, j ∉ S)` of the unconstrained pair
/// information. This is the rate of the hardest alternative when every round
/// is spent on it; the full max-min rate over mixed designs is no larger.
pub fn single_swap_rate(cov: &CovarianceModel, delta: &[f64], set: &[usize]) -> Result<f64> {
    let k = cov.k();
    let mut best = f64::INFINITY;
    for &i in set {
        for j in (0..k).filter(|j| !set.contains(j)) {
            best = best.min(pair_information(cov, &pair_contrast(delta, i, j))?);
        }
    }
    Ok(best)
}
