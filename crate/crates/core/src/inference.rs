//! Per-stream pseudo-likelihood evidence and the champion/challenger view of it.
//!
//! Each stream `k` carries `ℓ(k)`, the cumulative log-ratio of "only `k` is
//! anomalous" against "nothing is anomalous". For an observation `y` under
//! action `c` with `σ² = cᵀΣc`:
//!
//! ```text
//! Δℓ(k) = δ_k c_k (y − cᵀμ0) / σ²  −  (δ_k c_k)² / (2σ²)
//! ```
//!
//! Rankings use `ℓ` directly. Beliefs `p = 1/(1+e^{−ℓ})` are kept alongside
//! but saturate at 1 in double precision long before `ℓ` stops separating
//! streams.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covmodel::CovarianceModel;
use crate::error::{Error, Result};

/// `|ℓ|` is clamped here before exponentiation.
pub const LLR_CLAMP: f64 = 700.0;
/// Beliefs are kept inside `[BELIEF_FLOOR, 1 − BELIEF_FLOOR]`.
pub const BELIEF_FLOOR: f64 = 1e-16;

/// Initial log-ratio convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prior {
    /// `ℓ0 = 0`, i.e. `p0 = 1/2`.
    Uniform,
    /// `ℓ0 = logit(n/K)`.
    #[default]
    AnomalyRate,
}

impl FromStr for Prior {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Prior::Uniform),
            "anomaly-rate" | "n-over-k" => Ok(Prior::AnomalyRate),
            _ => Err(Error::Config(format!("unknown prior '{s}' (uniform | anomaly-rate)"))),
        }
    }
}

/// Clamped logistic transform.
pub fn logistic(l: f64) -> f64 {
    let l = l.clamp(-LLR_CLAMP, LLR_CLAMP);
    let p = if l >= 0.0 { 1.0 / (1.0 + (-l).exp()) } else { l.exp() / (1.0 + l.exp()) };
    p.clamp(BELIEF_FLOOR, 1.0 - BELIEF_FLOOR)
}

/// One-stream log-ratio increment for residual `r = y − cᵀμ0`.
pub fn llr_increment(c_k: f64, delta_k: f64, residual: f64, sigma2: f64) -> f64 {
    let a = delta_k * c_k;
    a * residual / sigma2 - a * a / (2.0 * sigma2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    llr: Vec<f64>,
    beliefs: Vec<f64>,
    t: usize,
    pull_counts: Vec<u64>,
}

impl BeliefState {
    pub fn new(k: usize, n: usize, prior: Prior) -> Self {
        let l0 = match prior {
            Prior::Uniform => 0.0,
            Prior::AnomalyRate => {
                let q = n as f64 / k as f64;
                (q / (1.0 - q)).ln()
            }
        };
        BeliefState {
            llr: vec![l0; k],
            beliefs: vec![logistic(l0); k],
            t: 0,
            pull_counts: vec![0; k],
        }
    }

    pub fn llr(&self) -> &[f64] {
        &self.llr
    }

    pub fn beliefs(&self) -> &[f64] {
        &self.beliefs
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    pub fn record_pull(&mut self, k: usize) {
        self.pull_counts[k] += 1;
    }

    /// `(max(ℓ,0), max(−ℓ,0))` per stream.
    pub fn beta_evidence(&self) -> Vec<(f64, f64)> {
        self.llr
            .iter()
            .map(|&l| {
                let l = l.clamp(-LLR_CLAMP, LLR_CLAMP);
                (l.max(0.0), (-l).max(0.0))
            })
            .collect()
    }

    /// Apply one observation given its total variance `σ² = cᵀΣc`.
    pub fn update_with_variance(
        &mut self,
        c: &[f64],
        y: f64,
        sigma2: f64,
        delta: &[f64],
        mu0: &[f64],
    ) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::Data(format!("non-finite observation {y}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Numeric(format!("observation variance {sigma2} is not positive")));
        }
        let baseline: f64 = c.iter().zip(mu0).map(|(a, m)| a * m).sum();
        let residual = y - baseline;
        for (k, &ck) in c.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            let l = self.llr[k] + llr_increment(ck, delta[k], residual, sigma2);
            self.llr[k] = l;
            self.beliefs[k] = logistic(l);
        }
        self.t += 1;
        Ok(())
    }
}

/// Pseudo-LLR update with `σ² = cᵀΣc` taken from `cov`.
pub fn update_pseudo_llr(
    state: &mut BeliefState,
    c: &[f64],
    y: f64,
    cov: &CovarianceModel,
    delta: &[f64],
    mu0: &[f64],
) -> Result<()> {
    state.update_with_variance(c, y, cov.quad_form(c), delta, mu0)
}

/// Current top-n set and the single-swap pair it is most vulnerable to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Sorted ascending.
    pub champion_set: Vec<usize>,
    pub i_star: usize,
    pub j_star: usize,
    pub pairwise_gap: f64,
}

/// Indices ordered by descending score, ties by ascending index.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Top-n indices by score, sorted ascending.
pub fn top_n(scores: &[f64], n: usize) -> Vec<usize> {
    let mut s: Vec<usize> = rank_desc(scores).into_iter().take(n).collect();
    s.sort_unstable();
    s
}

/// Champion/challenger selection from arbitrary scores.
///
/// `S` is the top-n set, `i*` the lowest-scoring member of `S` and `j*` the
/// highest-scoring outsider; every tie goes to the lowest index.
pub fn select_from_scores(scores: &[f64], n: usize) -> Result<GapReport> {
    let k = scores.len();
    if n == 0 || n >= k {
        return Err(Error::validation(format!("need 1 <= n < K, got n={n}, K={k}")));
    }
    let set = top_n(scores, n);
    let mut in_set = vec![false; k];
    for &i in &set {
        in_set[i] = true;
    }
    let i_star = argmin_where(scores, |i| in_set[i]);
    let j_star = argmax_where(scores, |j| !in_set[j]);
    Ok(GapReport {
        pairwise_gap: scores[i_star] - scores[j_star],
        champion_set: set,
        i_star,
        j_star,
    })
}

pub(crate) fn argmin_where(scores: &[f64], keep: impl Fn(usize) -> bool) -> usize {
    let mut best: Option<usize> = None;
    for i in (0..scores.len()).filter(|&i| keep(i)) {
        if best.is_none_or(|b| scores[i] < scores[b]) {
            best = Some(i);
        }
    }
    best.expect("non-empty selection")
}

pub(crate) fn argmax_where(scores: &[f64], keep: impl Fn(usize) -> bool) -> usize {
    let mut best: Option<usize> = None;
    for i in (0..scores.len()).filter(|&i| keep(i)) {
        if best.is_none_or(|b| scores[i] > scores[b]) {
            best = Some(i);
        }
    }
    best.expect("non-empty selection")
}

pub fn select_champion_challenger(state: &BeliefState, n: usize) -> Result<GapReport> {
    select_from_scores(&state.llr, n)
}

/// `min_{i∈S} ℓ(i) − max_{j∉S} ℓ(j)`.
pub fn pairwise_gap(state: &BeliefState, n: usize) -> Result<f64> {
    Ok(select_champion_challenger(state, n)?.pairwise_gap)
}

/// Stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop once the pairwise gap clears `glr_threshold(t, δ)`.
    Glr { delta: f64 },
    /// Stop once `min_{S} p − max_{not S} p ≥ γ`.
    PosteriorGap { gamma: f64 },
    /// Stop after exactly `T` rounds.
    FixedBudget { rounds: usize },
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StopRule::Glr { delta } if !(delta > 0.0 && delta < 1.0) => {
                Err(Error::Config(format!("GLR confidence δ must lie in (0,1), got {delta}")))
            }
            StopRule::PosteriorGap { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                Err(Error::Config(format!("posterior gap γ must lie in (0,1], got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopRule::Glr { delta } => write!(f, "glr:{delta}"),
            StopRule::PosteriorGap { gamma } => write!(f, "posterior-gap:{gamma}"),
            StopRule::FixedBudget { rounds } => write!(f, "fixed:{rounds}"),
        }
    }
}

impl FromStr for StopRule {
    type Err = Error;
    /// `glr:<δ>`, `posterior-gap:<γ>` or `fixed:<T>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("stop rule '{s}' must look like name:value")))?;
        let bad = |_| Error::Config(format!("bad stop-rule parameter in '{s}'"));
        let rule = match name {
            "glr" => StopRule::Glr { delta: arg.parse().map_err(bad)? },
            "posterior-gap" => StopRule::PosteriorGap { gamma: arg.parse().map_err(bad)? },
            "fixed" => StopRule::FixedBudget {
                rounds: arg.parse().map_err(|_| Error::Config(format!("bad round count in '{s}'")))?,
            },
            _ => return Err(Error::Config(format!("unknown stop rule '{name}'"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// `log(1/δ) + log(1 + log(max(t, e)))`.
pub fn glr_threshold(t: usize, delta: f64) -> f64 {
    (1.0 / delta).ln() + (1.0 + (t as f64).max(std::f64::consts::E).ln()).ln()
}

pub fn should_stop(state: &BeliefState, n: usize, rule: &StopRule) -> Result<bool> {
    match *rule {
        StopRule::FixedBudget { rounds } => Ok(state.t >= rounds),
        StopRule::Glr { delta } => {
            Ok(pairwise_gap(state, n)? >= glr_threshold(state.t, delta))
        }
        StopRule::PosteriorGap { gamma } => {
            let g = select_champion_challenger(state, n)?;
            let p = &state.beliefs;
            Ok(p[g.i_star] - p[g.j_star] >= gamma)
        }
    }
}

/// One `Λ` term: `(c_i − c_j)² / cᵀΣc`.
pub fn snr_term(c: &[f64], sigma2: f64, i: usize, j: usize) -> f64 {
    (c[i] - c[j]).powi(2) / sigma2
}

/// Cumulative `Λ_t(i, j)` for a fixed list of pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrTracker {
    pub pairs: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl SnrTracker {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        let values = vec![0.0; pairs.len()];
        SnrTracker { pairs, values }
    }

    /// Every `(i ∈ truth, j ∉ truth)` pair.
    pub fn for_truth(k: usize, truth: &[usize]) -> Self {
        let pairs = truth
            .iter()
            .flat_map(|&i| (0..k).filter(|j| !truth.contains(j)).map(move |j| (i, j)))
            .collect();
        Self::new(pairs)
    }

    pub fn accumulate(&mut self, c: &[f64], cov: &CovarianceModel) {
        self.accumulate_with_variance(c, cov.quad_form(c));
    }

    pub fn accumulate_with_variance(&mut self, c: &[f64], sigma2: f64) {
        for (v, &(i, j)) in self.values.iter_mut().zip(&self.pairs) {
            *v += snr_term(c, sigma2, i, j);
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
