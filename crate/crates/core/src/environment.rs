//! The sensing environment: ground truth plus the measurement oracle.
//!
//! A measurement `c` returns `y ~ N(cᵀμ_S, cᵀΣc)` where `μ_S = μ0 + Σ_{k∈S} δ_k e_k`.
//! Policies never see [`ProblemInstance`] directly; they receive an
//! [`InstanceView`] that carries only public quantities.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covmodel::{
    generate_correlation, regularize, spectral_mixing, CorrelationSpec, CovarianceModel, Pattern,
};
use crate::error::{Error, Result};
use crate::rng::TrialRng;

/// Relative slack on the L1 budget when checking actions.
pub const BUDGET_SLACK: f64 = 1e-9;

/// Scalar projection returned by one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub t: usize,
}

/// Whether the environment enforces `‖c‖₁ ≤ B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetCheck {
    Enforce,
    /// Benchmark-only: accept actions above the budget.
    Waive,
}

/// Public problem data, everything except the anomaly set.
#[derive(Debug, Clone, Copy)]
pub struct InstanceView<'a> {
    pub k: usize,
    pub n: usize,
    pub cov: &'a CovarianceModel,
    pub delta: &'a [f64],
    pub mu0: &'a [f64],
    pub budget: f64,
}

/// Anything a policy can be run against.
pub trait Environment: Sync {
    fn view(&self) -> InstanceView<'_>;

    /// Ground-truth anomaly set, when known.
    fn truth(&self) -> Option<&[usize]>;

    fn observe(
        &self,
        c: &[f64],
        t: usize,
        check: BudgetCheck,
        rng: &mut TrialRng,
    ) -> Result<Observation>;

    /// Upper bound on the number of measurements this environment can serve.
    fn max_rounds(&self) -> Option<usize> {
        None
    }
}

fn default_delta() -> f64 {
    3.0
}
fn default_budget() -> f64 {
    5.0
}

/// Recipe for synthetic instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub n: usize,
    /// Constant signal magnitude, used unless `delta_vec` is given.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    pub correlation: CorrelationSpec,
    /// Optional `αI` shift applied after generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularize: Option<f64>,
    /// Replace the pattern by the identity/rank-one blend with this weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<f64>,
}

impl InstanceConfig {
    pub fn new(k: usize, n: usize, pattern: Pattern, rho: f64) -> Self {
        InstanceConfig {
            n,
            delta: default_delta(),
            delta_vec: None,
            mu0: None,
            budget: default_budget(),
            correlation: CorrelationSpec::new(pattern, k, rho),
            regularize: None,
            mixing: None,
        }
    }

    /// `K=100, n=3, δ=3.0, ρ=0.6` Toeplitz, `B=5.0`.
    pub fn robustness_baseline() -> Self {
        Self::new(100, 3, Pattern::Toeplitz, 0.6)
    }

    /// `K=15, n=3, ρ=0.6` Toeplitz with the baseline signal and budget.
    pub fn fig1_toy() -> Self {
        Self::new(15, 3, Pattern::Toeplitz, 0.6)
    }

    pub fn k(&self) -> usize {
        self.correlation.k
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.correlation.validate()?;
        let k = self.k();
        if self.n == 0 || self.n >= k {
            return Err(Error::validation(format!(
                "anomaly count n must satisfy 1 <= n < K (n={}, K={k})",
                self.n
            )));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::validation(format!("budget must be positive, got {}", self.budget)));
        }
        let delta = self.delta_vector();
        if delta.len() != k || delta.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::validation("delta must hold K positive finite magnitudes"));
        }
        if let Some(mu0) = &self.mu0 {
            if mu0.len() != k || mu0.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("mu0 must hold K finite values"));
            }
        }
        if let Some(a) = self.regularize {
            if !(a >= 0.0) {
                return Err(Error::validation("regularize must be >= 0"));
            }
        }
        if let Some(w) = self.mixing {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::validation("mixing weight must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn delta_vector(&self) -> Vec<f64> {
        self.delta_vec.clone().unwrap_or_else(|| vec![self.delta; self.k()])
    }

    /// Generate the covariance this config describes.
    pub fn build_covariance(&self) -> Result<CovarianceModel> {
        let base = match self.mixing {
            Some(w) => spectral_mixing(self.k(), w, self.correlation.graph_seed)?,
            None => generate_correlation(&self.correlation)?,
        };
        match self.regularize {
            Some(a) if a > 0.0 => regularize(&base, a),
            _ => Ok(base),
        }
    }
}

/// Ground truth of one synthetic trial.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub k: usize,
    pub n: usize,
    pub s_star: Vec<usize>,
    pub delta: Vec<f64>,
    pub mu0: Vec<f64>,
    pub cov: Arc<CovarianceModel>,
    pub budget: f64,
}

/// Build an instance, generating its covariance.
pub fn make_instance(config: &InstanceConfig, seed: &mut TrialRng) -> Result<ProblemInstance> {
    config.validate()?;
    let cov = Arc::new(config.build_covariance()?);
    make_instance_with_cov(config, cov, seed)
}

/// Build an instance around an existing covariance (shared across trials).
pub fn make_instance_with_cov(
    config: &InstanceConfig,
    cov: Arc<CovarianceModel>,
    rng: &mut TrialRng,
) -> Result<ProblemInstance> {
    config.validate()?;
    let k = config.k();
    if cov.k() != k {
        return Err(Error::validation(format!(
            "covariance dimension {} does not match K={k}",
            cov.k()
        )));
    }
    let mut s_star: Vec<usize> = index::sample(rng, k, config.n).into_vec();
    s_star.sort_unstable();
    Ok(ProblemInstance {
        k,
        n: config.n,
        s_star,
        delta: config.delta_vector(),
        mu0: config.mu0.clone().unwrap_or_else(|| vec![0.0; k]),
        cov,
        budget: config.budget,
    })
}

impl ProblemInstance {
    /// `μ0 + Σ_{k∈S*} δ_k e_k`.
    pub fn true_mean(&self) -> Vec<f64> {
        self.mean_under(&self.s_star)
    }

    /// Mean vector under an arbitrary hypothesis set.
    pub fn mean_under(&self, set: &[usize]) -> Vec<f64> {
        let mut mu = self.mu0.clone();
        for &k in set {
            mu[k] += self.delta[k];
        }
        mu
    }

    pub fn check_action(&self, c: &[f64], check: BudgetCheck) -> Result<()> {
        check_action(c, self.k, self.budget, check)
    }

    /// `cᵀ(μ_{S*} + L z)` for an explicit standard-normal vector `z`.
    pub fn observation_from_noise(&self, c: &[f64], z: &[f64]) -> f64 {
        let mean: f64 = c.iter().zip(self.true_mean()).map(|(a, m)| a * m).sum();
        let w = self.cov.lower_transpose_mul(c);
        mean + w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn sample_observation(&self, c: &[f64], t: usize, rng: &mut TrialRng) -> Result<Observation> {
        self.observe(c, t, BudgetCheck::Enforce, rng)
    }

    /// JSON form including the anomaly set, for audit trails.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k,
            "n": self.n,
            "s_star": self.s_star,
            "delta": self.delta,
            "mu0": self.mu0,
            "budget": self.budget,
            "sigma": self.cov.to_json()["sigma"],
        })
    }
}

pub(crate) fn check_action(c: &[f64], k: usize, budget: f64, check: BudgetCheck) -> Result<()> {
    if c.len() != k {
        return Err(Error::Action(format!("action has length {} but K={k}", c.len())));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Action("action has non-finite entries".into()));
    }
    if c.iter().all(|&v| v == 0.0) {
        return Err(Error::Action("action is the zero vector".into()));
    }
    if check == BudgetCheck::Enforce {
        let l1: f64 = c.iter().map(|v| v.abs()).sum();
        if l1 > budget * (1.0 + BUDGET_SLACK) {
            return Err(Error::Action(format!("action L1 norm {l1} exceeds budget {budget}")));
        }
    }
    Ok(())
}

impl Environment for ProblemInstance {
    fn view(&self) -> InstanceView<'_> {
        InstanceView {
            k: self.k,
            n: self.n,
            cov: &self.cov,
            delta: &self.delta,
            mu0: &self.mu0,
            budget: self.budget,
        }
    }

    fn truth(&self) -> Option<&[usize]> {
        Some(&self.s_star)
    }

    fn observe(
        &self,
        c: &[f64],
        t: usize,
        check: BudgetCheck,
        rng: &mut TrialRng,
    ) -> Result<Observation> {
        self.check_action(c, check)?;
        let z: Vec<f64> = (0..self.k).map(|_| rng.sample(StandardNormal)).collect();
        let y = self.observation_from_noise(c, &z);
        if !y.is_finite() {
            return Err(Error::Numeric("non-finite observation".into()));
        }
        Ok(Observation { y, t })
    }
}

/// Replays stored data rows: the `t`-th measurement returns `cᵀx_t`.
#[derive(Debug, Clone)]
pub struct ReplayInstance {
    pub rows: Vec<Vec<f64>>,
    pub n: usize,
    pub s_star: Option<Vec<usize>>,
    pub delta: Vec<f64>,
    pub mu0: Vec<f64>,
    pub cov: Arc<CovarianceModel>,
    pub budget: f64,
}

impl ReplayInstance {
    pub fn validate(&self) -> Result<()> {
        let k = self.cov.k();
        if self.rows.is_empty() {
            return Err(Error::Data("replay needs at least one row".into()));
        }
        if self.rows.iter().any(|r| r.len() != k) {
            return Err(Error::Data(format!("every replay row must have {k} values")));
        }
        if self.delta.len() != k || self.mu0.len() != k {
            return Err(Error::validation("delta and mu0 must have length K"));
        }
        if self.n == 0 || self.n >= k {
            return Err(Error::validation("anomaly count n must satisfy 1 <= n < K"));
        }
        if let Some(s) = &self.s_star {
            if s.len() != self.n || s.iter().any(|&i| i >= k) {
                return Err(Error::validation("replay anomaly set must hold n valid indices"));
            }
        }
        Ok(())
    }
}

impl Environment for ReplayInstance {
    fn view(&self) -> InstanceView<'_> {
        InstanceView {
            k: self.cov.k(),
            n: self.n,
            cov: &self.cov,
            delta: &self.delta,
            mu0: &self.mu0,
            budget: self.budget,
        }
    }

    fn truth(&self) -> Option<&[usize]> {
        self.s_star.as_deref()
    }

    fn observe(
        &self,
        c: &[f64],
        t: usize,
        check: BudgetCheck,
        _rng: &mut TrialRng,
    ) -> Result<Observation> {
        check_action(c, self.cov.k(), self.budget, check)?;
        let row = t
            .checked_sub(1)
            .and_then(|i| self.rows.get(i))
            .ok_or_else(|| Error::Data(format!("replay exhausted at round {t}")))?;
        let y = c.iter().zip(row).map(|(a, x)| a * x).sum();
        Ok(Observation { y, t })
    }

    fn max_rounds(&self) -> Option<usize> {
        Some(self.rows.len())
    }
}
