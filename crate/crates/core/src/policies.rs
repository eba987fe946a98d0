//! Measurement policies and the single-trial runner.
//!
//! Every policy follows the same loop: pick an action from public state,
//! observe, fold the observation into the pseudo-likelihood beliefs. The
//! policies differ only in how the action is chosen (and, for the diagonal
//! ablation, in which covariance the beliefs assume).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::covmodel::CovarianceModel;
use crate::design::{
    design_budgeted_with, design_unconstrained, pair_contrast, restricted_best, round_robin_action,
    rsp_action, simple_diff_action, DesignTolerances, MeasurementAction,
};
use crate::environment::{BudgetCheck, Environment, InstanceView};
use crate::error::{Error, Result};
use crate::inference::{
    argmax_where, select_champion_challenger, select_from_scores, should_stop, top_n, BeliefState,
    Prior, SnrTracker, StopRule, LLR_CLAMP,
};
use crate::rng::TrialRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    EccAht,
    EccAhtCostFree,
    EccAhtNoQp,
    EccAhtDiagonal,
    EccAhtRestricted,
    TttsChallenger,
    BaseArmCombGapE,
    RoundRobin,
    Rsp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        PolicyKind::EccAht,
        PolicyKind::EccAhtCostFree,
        PolicyKind::EccAhtNoQp,
        PolicyKind::EccAhtDiagonal,
        PolicyKind::EccAhtRestricted,
        PolicyKind::TttsChallenger,
        PolicyKind::BaseArmCombGapE,
        PolicyKind::RoundRobin,
        PolicyKind::Rsp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::EccAht => "ecc-aht",
            PolicyKind::EccAhtCostFree => "ecc-aht-cost-free",
            PolicyKind::EccAhtNoQp => "ecc-aht-no-qp",
            PolicyKind::EccAhtDiagonal => "ecc-aht-diagonal",
            PolicyKind::EccAhtRestricted => "ecc-aht-restricted",
            PolicyKind::TttsChallenger => "ttts-challenger",
            PolicyKind::BaseArmCombGapE => "base-arm-comb-gap-e",
            PolicyKind::RoundRobin => "round-robin",
            PolicyKind::Rsp => "rsp",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        let kind = match key.as_str() {
            "ecc-aht" | "eccaht" => PolicyKind::EccAht,
            "ecc-aht-cost-free" | "cost-free" | "costfree" => PolicyKind::EccAhtCostFree,
            "ecc-aht-no-qp" | "no-qp" | "noqp" | "simple-diff" => PolicyKind::EccAhtNoQp,
            "ecc-aht-diagonal" | "diagonal" | "no-correlation" => PolicyKind::EccAhtDiagonal,
            "ecc-aht-restricted" | "restricted" => PolicyKind::EccAhtRestricted,
            "ttts-challenger" | "ttts" => PolicyKind::TttsChallenger,
            "base-arm-comb-gap-e" | "base-arm" | "combgape" | "comb-gap-e" => PolicyKind::BaseArmCombGapE,
            "round-robin" | "rr" => PolicyKind::RoundRobin,
            "rsp" => PolicyKind::Rsp,
            _ => return Err(Error::Config(format!("unknown policy '{s}'"))),
        };
        Ok(kind)
    }
}

/// Which statistic the reported top-n set is ranked by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ranking {
    #[default]
    Belief,
    /// Per-coordinate least-squares mean `Σ c_k y / Σ c_k²`.
    SampleMean,
}

impl FromStr for Ranking {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "belief" | "llr" => Ok(Ranking::Belief),
            "sample-mean" | "sample_mean" => Ok(Ranking::SampleMean),
            _ => Err(Error::Config(format!("unknown ranking '{s}' (belief | sample-mean)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default)]
    pub ranking: Ranking,
    #[serde(default)]
    pub prior: Prior,
    #[serde(skip)]
    pub tolerances: DesignTolerances,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            ranking: Ranking::default(),
            prior: Prior::default(),
            tolerances: DesignTolerances::default(),
        }
    }

    pub fn with_ranking(mut self, ranking: Ranking) -> Self {
        self.ranking = ranking;
        self
    }

    pub fn with_prior(mut self, prior: Prior) -> Self {
        self.prior = prior;
        self
    }

    fn ranks_by_mean(&self) -> bool {
        self.ranking == Ranking::SampleMean || self.kind == PolicyKind::BaseArmCombGapE
    }
}

/// Mutable per-trial state.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub belief: BeliefState,
    sum_cy: Vec<f64>,
    sum_cc: Vec<f64>,
    pub t: usize,
    designs: HashMap<(usize, usize), Vec<f64>>,
}

impl PolicyState {
    pub fn new(k: usize, n: usize, prior: Prior) -> Self {
        PolicyState {
            belief: BeliefState::new(k, n, prior),
            sum_cy: vec![0.0; k],
            sum_cc: vec![0.0; k],
            t: 0,
            designs: HashMap::new(),
        }
    }

    /// Per-stream least-squares mean; zero where a stream was never measured.
    pub fn sample_means(&self) -> Vec<f64> {
        self.sum_cy
            .iter()
            .zip(&self.sum_cc)
            .map(|(&a, &b)| if b > 0.0 { a / b } else { 0.0 })
            .collect()
    }
}

/// A policy bound to one problem's public data.
pub struct Policy<'a> {
    config: PolicyConfig,
    view: InstanceView<'a>,
    /// Covariance the policy believes in: `diag(Σ)` for the diagonal ablation.
    model_cov: Arc<CovarianceModel>,
}

impl<'a> Policy<'a> {
    pub fn new(config: PolicyConfig, view: InstanceView<'a>) -> Result<Self> {
        if view.n == 0 || view.n >= view.k {
            return Err(Error::validation(format!("need 1 <= n < K, got n={}, K={}", view.n, view.k)));
        }
        let model_cov = if config.kind == PolicyKind::EccAhtDiagonal {
            Arc::new(view.cov.diagonal_model()?)
        } else {
            Arc::new(view.cov.clone())
        };
        Ok(Policy { config, view, model_cov })
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    pub fn initial_state(&self) -> PolicyState {
        PolicyState::new(self.view.k, self.view.n, self.config.prior)
    }

    pub fn budget_check(&self) -> BudgetCheck {
        if self.config.kind == PolicyKind::EccAhtCostFree {
            BudgetCheck::Waive
        } else {
            BudgetCheck::Enforce
        }
    }

    fn designed(&self, state: &mut PolicyState, i: usize, j: usize) -> Result<MeasurementAction> {
        let cov = &*self.model_cov;
        let delta = pair_contrast(self.view.delta, i, j);
        if let Some(c) = state.designs.get(&(i, j)) {
            return Ok(MeasurementAction::new(c.clone(), cov, Some(&delta)).with_pair(i, j));
        }
        let action = if self.config.kind == PolicyKind::EccAhtCostFree {
            design_unconstrained(cov, &delta)?
        } else {
            design_budgeted_with(cov, &delta, self.view.budget, &self.config.tolerances)?
        };
        state.designs.insert((i, j), action.c.clone());
        Ok(action.with_pair(i, j))
    }

    fn ttts_pair(&self, state: &PolicyState, rng: &mut TrialRng) -> Result<(usize, usize)> {
        let evidence = state.belief.beta_evidence();
        let draw = |rng: &mut TrialRng| -> Result<Vec<f64>> {
            evidence
                .iter()
                .map(|&(a, b)| {
                    let beta = Beta::new(1.0 + a.min(LLR_CLAMP), 1.0 + b.min(LLR_CLAMP))
                        .map_err(|e| Error::Numeric(format!("beta parameters: {e}")))?;
                    Ok(beta.sample(rng))
                })
                .collect()
        };
        let first = draw(rng)?;
        let report = select_from_scores(&first, self.view.n)?;
        let second = draw(rng)?;
        let in_set = |j: usize| report.champion_set.binary_search(&j).is_ok();
        let j_star = argmax_where(&second, |j| !in_set(j));
        Ok((report.i_star, j_star))
    }

    /// Choose the next measurement.
    pub fn next_action(&self, state: &mut PolicyState, rng: &mut TrialRng) -> Result<MeasurementAction> {
        let t = state.t + 1;
        let cov = self.view.cov;
        match self.config.kind {
            PolicyKind::RoundRobin => round_robin_action(cov, t, self.view.budget),
            PolicyKind::Rsp => rsp_action(cov, self.view.budget, rng),
            PolicyKind::TttsChallenger => {
                let (i, j) = self.ttts_pair(state, rng)?;
                self.designed(state, i, j)
            }
            kind => {
                let g = select_champion_challenger(&state.belief, self.view.n)?;
                let (i, j) = (g.i_star, g.j_star);
                match kind {
                    PolicyKind::EccAhtNoQp => simple_diff_action(cov, i, j, self.view.budget),
                    PolicyKind::EccAhtRestricted => {
                        Ok(restricted_best(cov, &pair_contrast(self.view.delta, i, j))?.with_pair(i, j))
                    }
                    PolicyKind::BaseArmCombGapE => {
                        let pulls = state.belief.pull_counts();
                        let a = if pulls[j] < pulls[i] { j } else { i };
                        let mut c = vec![0.0; self.view.k];
                        c[a] = 1.0;
                        Ok(MeasurementAction::new(c, cov, None).with_pair(i, j))
                    }
                    _ => self.designed(state, i, j),
                }
            }
        }
    }

    /// Fold an observation into the state.
    pub fn absorb(&self, state: &mut PolicyState, c: &[f64], y: f64) -> Result<()> {
        let sigma2 = self.model_cov.quad_form(c);
        state
            .belief
            .update_with_variance(c, y, sigma2, self.view.delta, self.view.mu0)?;
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                state.sum_cy[k] += ck * y;
                state.sum_cc[k] += ck * ck;
            }
        }
        if self.config.kind == PolicyKind::BaseArmCombGapE {
            if let Some(a) = c.iter().position(|&v| v != 0.0) {
                state.belief.record_pull(a);
            }
        }
        state.t += 1;
        Ok(())
    }

    /// One full round: choose, observe, update.
    pub fn policy_step(
        &self,
        state: &mut PolicyState,
        env: &dyn Environment,
        noise: &mut TrialRng,
        policy_rng: &mut TrialRng,
    ) -> Result<(MeasurementAction, f64)> {
        let action = self.next_action(state, policy_rng)?;
        let obs = env.observe(&action.c, state.t + 1, self.budget_check(), noise)?;
        self.absorb(state, &action.c, obs.y)?;
        Ok((action, obs.y))
    }

    /// The policy's current answer set, sorted ascending.
    pub fn estimate(&self, state: &PolicyState) -> Vec<usize> {
        if self.config.ranks_by_mean() {
            let mu0 = self.view.mu0;
            let scores: Vec<f64> = state.sample_means().iter().zip(mu0).map(|(m, b)| m - b).collect();
            top_n(&scores, self.view.n)
        } else {
            top_n(state.belief.llr(), self.view.n)
        }
    }
}

/// Why a trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Rule,
    Horizon,
    DataExhausted,
    Failed,
}

/// Per-round summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub pair: Option<(usize, usize)>,
    pub y: f64,
    pub f1: Option<f64>,
    pub gap: f64,
    pub objective: f64,
    pub l1: f64,
}

/// Full traces, recorded only in diagnostics mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `c_t` for every round.
    pub actions: Vec<Vec<f64>>,
    /// `ℓ_t` after every round.
    pub llr: Vec<Vec<f64>>,
    pub snr_pairs: Vec<(usize, usize)>,
    /// `Λ_t` for each tracked pair after every round.
    pub snr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub policy: PolicyKind,
    pub steps: Vec<StepRecord>,
    /// Round at which the stop rule fired; `None` if it never did.
    pub tau: Option<usize>,
    pub stop_reason: StopReason,
    pub final_set: Vec<usize>,
    pub final_f1: Option<f64>,
    pub failure: Option<String>,
    pub diagnostics: Option<Diagnostics>,
}

impl TrialRecord {
    pub fn f1_trajectory(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.f1).collect()
    }
}

/// `2|A∩B| / (|A| + |B|)`.
pub fn f1_score(estimate: &[usize], truth: &[usize]) -> f64 {
    if estimate.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let hits = estimate.iter().filter(|e| truth.contains(e)).count();
    2.0 * hits as f64 / (estimate.len() + truth.len()) as f64
}

/// Trial controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOptions {
    pub stop: StopRule,
    /// Hard cap on rounds for stop rules that may never fire.
    pub horizon: usize,
    pub diagnostics: bool,
}

impl TrialOptions {
    pub fn fixed(rounds: usize) -> Self {
        TrialOptions { stop: StopRule::FixedBudget { rounds }, horizon: rounds, diagnostics: false }
    }
}

/// Run one policy against one environment.
///
/// Step failures end the trial with `stop_reason = Failed` and the tagged
/// error message; the steps completed so far are kept.
pub fn run_trial(
    env: &dyn Environment,
    config: &PolicyConfig,
    options: &TrialOptions,
    noise: &mut TrialRng,
    policy_rng: &mut TrialRng,
) -> Result<TrialRecord> {
    options.stop.validate()?;
    let view = env.view();
    let policy = Policy::new(config.clone(), view)?;
    let mut state = policy.initial_state();
    let truth = env.truth();
    let mut cap = match options.stop {
        StopRule::FixedBudget { rounds } => rounds,
        _ => options.horizon,
    };
    let mut exhausted = false;
    if let Some(max) = env.max_rounds() {
        if max < cap {
            cap = max;
            exhausted = true;
        }
    }
    let mut diag = options.diagnostics.then(|| {
        let tracker = truth.map(|s| SnrTracker::for_truth(view.k, s));
        (Diagnostics::default(), tracker)
    });
    let mut steps = Vec::with_capacity(cap);
    let mut tau = None;
    let mut failure = None;
    let mut stop_reason = StopReason::Horizon;

    if should_stop(&state.belief, view.n, &options.stop)? {
        tau = Some(0);
        stop_reason = StopReason::Rule;
    }
    while tau.is_none() && state.t < cap {
        let (action, y) = match policy.policy_step(&mut state, env, noise, policy_rng) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(format!("{}: {e}", e.tag()));
                stop_reason = StopReason::Failed;
                break;
            }
        };
        let estimate = policy.estimate(&state);
        let gap = select_champion_challenger(&state.belief, view.n)?.pairwise_gap;
        steps.push(StepRecord {
            t: state.t,
            pair: action.target_pair,
            y,
            f1: truth.map(|s| f1_score(&estimate, s)),
            gap,
            objective: action.objective,
            l1: action.l1_norm,
        });
        if let Some((d, tracker)) = diag.as_mut() {
            d.actions.push(action.c.clone());
            d.llr.push(state.belief.llr().to_vec());
            match tracker {
                Some(tr) => {
                    tr.accumulate(&action.c, view.cov);
                    d.snr.push(tr.values.clone());
                }
                // Without ground truth, track the pairs actually targeted.
                None => {
                    if let Some(pair) = action.target_pair {
                        if !d.snr_pairs.contains(&pair) {
                            d.snr_pairs.push(pair);
                        }
                    }
                }
            }
        }
        if should_stop(&state.belief, view.n, &options.stop)? {
            tau = Some(state.t);
            stop_reason = StopReason::Rule;
        }
    }
    if tau.is_none() && stop_reason != StopReason::Failed && exhausted && state.t >= cap {
        stop_reason = StopReason::DataExhausted;
    }
    let final_set = policy.estimate(&state);
    let final_f1 = truth.map(|s| f1_score(&final_set, s));
    let diagnostics = diag.map(|(mut d, tracker)| {
        if let Some(tr) = tracker {
            d.snr_pairs = tr.pairs;
        } else {
            d.snr = untracked_snr(&d, view.cov);
        }
        d
    });
    Ok(TrialRecord {
        policy: config.kind,
        steps,
        tau,
        stop_reason,
        final_set,
        final_f1,
        failure,
        diagnostics,
    })
}

/// `Λ_t` for targeted pairs, recomputed from the action log.
fn untracked_snr(d: &Diagnostics, cov: &CovarianceModel) -> Vec<Vec<f64>> {
    let mut tracker = SnrTracker::new(d.snr_pairs.clone());
    d.actions
        .iter()
        .map(|c| {
            tracker.accumulate(c, cov);
            tracker.values.clone()
        })
        .collect()
}
