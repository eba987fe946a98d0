//! Experiment orchestration: seeded trial batches, parameter sweeps and
//! their statistical summaries.
//!
//! Every trial is keyed by `(grid point, policy, seed index)`. The instance
//! and noise streams depend only on the seed index, so all policies and all
//! grid points see the same anomaly sets and the same noise draws.

pub mod bootstrap;
pub mod metrics;
pub mod presets;
pub mod report;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodel::{spectrum, SpectrumReport};
use crate::environment::{make_instance_with_cov, InstanceConfig};
use crate::error::{Error, Result};
use crate::inference::{Prior, StopRule};
use crate::policies::{run_trial, PolicyConfig, PolicyKind, Ranking, TrialOptions, TrialRecord};
use crate::rng::{stream_rng, Stream};

use bootstrap::{bca_interval, Interval, Statistic};
use metrics::{censored_median, curve_grid, samples_to_threshold};

/// Parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Delta,
    Rho,
    N,
    Budget,
    K,
    Regularize,
    Mixing,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Delta => "delta",
            SweepParam::Rho => "rho",
            SweepParam::N => "n",
            SweepParam::Budget => "budget",
            SweepParam::K => "k",
            SweepParam::Regularize => "regularize",
            SweepParam::Mixing => "mixing",
        }
    }

    /// Apply `value` to a copy of `base`.
    pub fn apply(self, base: &InstanceConfig, value: f64) -> Result<InstanceConfig> {
        let mut c = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("sweep value {v} must be a whole number")))
            }
        };
        match self {
            SweepParam::Delta => {
                c.delta = value;
                c.delta_vec = None;
            }
            SweepParam::Rho => c.correlation.rho = value,
            SweepParam::N => c.n = as_count(value)?,
            SweepParam::Budget => c.budget = value,
            SweepParam::K => {
                c.correlation.k = as_count(value)?;
                c.delta_vec = None;
                c.mu0 = None;
            }
            SweepParam::Regularize => c.regularize = Some(value),
            SweepParam::Mixing => c.mixing = Some(value),
        }
        Ok(c)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "delta" => SweepParam::Delta,
            "rho" => SweepParam::Rho,
            "n" => SweepParam::N,
            "budget" | "b" => SweepParam::Budget,
            "k" => SweepParam::K,
            "regularize" | "alpha" => SweepParam::Regularize,
            "mixing" => SweepParam::Mixing,
            _ => return Err(Error::Config(format!("unknown sweep parameter '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_seeds() -> usize {
    20
}
fn default_horizon() -> usize {
    2000
}
fn default_threshold() -> f64 {
    0.95
}
fn default_resamples() -> usize {
    10_000
}
fn default_level() -> f64 {
    0.95
}
fn default_curve_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub instance: InstanceConfig,
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub ranking: Ranking,
    #[serde(default)]
    pub prior: Prior,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Defaults to a fixed budget of `horizon` rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRule>,
    #[serde(default = "default_threshold")]
    pub f1_threshold: f64,
    #[serde(default)]
    pub sustain: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Keep full traces for seed 0 of every (grid point, policy).
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

impl ExperimentConfig {
    pub fn new(id: impl Into<String>, instance: InstanceConfig, policies: Vec<PolicyKind>) -> Self {
        ExperimentConfig {
            id: id.into(),
            preset: None,
            instance,
            policies,
            ranking: Ranking::default(),
            prior: Prior::default(),
            seeds: default_seeds(),
            master_seed: 0,
            horizon: default_horizon(),
            stop: None,
            f1_threshold: default_threshold(),
            sustain: 0,
            resamples: default_resamples(),
            level: default_level(),
            sweep: None,
            diagnostics: false,
            curve_points: default_curve_points(),
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        self.stop.unwrap_or(StopRule::FixedBudget { rounds: self.horizon })
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !(self.f1_threshold > 0.0 && self.f1_threshold <= 1.0) {
            return Err(Error::Config("f1_threshold must lie in (0, 1]".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        if !(0.0..1.0).contains(&self.level) {
            return Err(Error::Config("level must lie in [0, 1)".into()));
        }
        self.stop_rule().validate()?;
        for cfg in self.grid_configs()? {
            cfg.1.validate()?;
        }
        Ok(())
    }

    /// `(grid value, instance config)` for every grid point.
    pub fn grid_configs(&self) -> Result<Vec<(Option<f64>, InstanceConfig)>> {
        match &self.sweep {
            None => Ok(vec![(None, self.instance.clone())]),
            Some(s) => {
                if s.values.is_empty() {
                    return Err(Error::Config("sweep needs at least one value".into()));
                }
                s.values
                    .iter()
                    .map(|&v| Ok((Some(v), s.param.apply(&self.instance, v)?)))
                    .collect()
            }
        }
    }

    fn policy_config(&self, kind: PolicyKind) -> PolicyConfig {
        PolicyConfig::new(kind).with_ranking(self.ranking).with_prior(self.prior)
    }
}

/// One line of the raw results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub experiment_id: String,
    pub preset: String,
    pub policy: PolicyKind,
    pub seed: usize,
    pub grid_value: Option<f64>,
    pub tau: Option<usize>,
    pub samples_to_f1: Option<usize>,
    pub censored: bool,
    pub final_f1: Option<f64>,
}

/// Pointwise mean F1 with BCa bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Curve {
    pub t: Vec<usize>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub grid_value: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// `"ok"` or `"did not converge"`.
    pub status: String,
    /// Median samples-to-threshold with censored trials counted as `+∞`.
    pub median_samples: Option<f64>,
    /// Mean over trials that reached the threshold.
    pub mean_samples_uncensored: Option<f64>,
    /// BCa interval on the median, resampling reached trials only.
    pub median_ci: Option<Interval>,
    pub ci_basis: String,
    pub mean_tau: Option<f64>,
    pub tau_ci: Option<Interval>,
    pub mean_final_f1: Option<f64>,
    pub curve: Option<F1Curve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub grid_value: Option<f64>,
    pub spectrum: SpectrumReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub experiment_id: String,
    pub preset: Option<String>,
    pub sweep_param: Option<SweepParam>,
    pub f1_threshold: f64,
    pub level: f64,
    pub grid: Vec<GridInfo>,
    pub policies: Vec<PolicySummary>,
}

pub const SUMMARY_SCHEMA: u32 = 1;

/// Trace kept in diagnostics mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub grid_value: Option<f64>,
    pub s_star: Vec<usize>,
    pub record: TrialRecord,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RawRow>,
    pub summary: Summary,
    pub traces: Vec<Trace>,
}

struct TrialOutcome {
    row: RawRow,
    f1: Vec<f64>,
    trace: Option<Trace>,
    failed: bool,
}

/// Run every (grid point, policy, seed) trial and summarize.
///
/// Trials run on the current rayon pool; results do not depend on the
/// number of threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let grid = config.grid_configs()?;
    let stop = config.stop_rule();
    let mut covs = Vec::with_capacity(grid.len());
    let mut grid_info = Vec::with_capacity(grid.len());
    for (value, inst) in &grid {
        let cov = Arc::new(inst.build_covariance()?);
        grid_info.push(GridInfo { grid_value: *value, spectrum: spectrum(&cov)? });
        covs.push(cov);
    }
    let preset = config.preset.clone().unwrap_or_default();
    let tasks: Vec<(usize, PolicyKind, usize)> = (0..grid.len())
        .flat_map(|g| {
            config
                .policies
                .iter()
                .flat_map(move |&p| (0..config.seeds).map(move |s| (g, p, s)))
        })
        .collect();

    let outcomes: Vec<TrialOutcome> = tasks
        .par_iter()
        .map(|&(g, kind, s)| -> Result<TrialOutcome> {
            let (value, inst_cfg) = &grid[g];
            let seed = s as u64;
            let mut inst_rng = stream_rng(config.master_seed, Stream::Instance, seed);
            let inst = make_instance_with_cov(inst_cfg, covs[g].clone(), &mut inst_rng)?;
            let options = TrialOptions {
                stop,
                horizon: config.horizon,
                diagnostics: config.diagnostics && s == 0,
            };
            let mut noise = stream_rng(config.master_seed, Stream::Noise, seed);
            let mut prng = stream_rng(config.master_seed, Stream::Policy, seed);
            let record = run_trial(&inst, &config.policy_config(kind), &options, &mut noise, &mut prng)?;
            let f1 = record.f1_trajectory();
            let hit = samples_to_threshold(&f1, config.f1_threshold, config.sustain);
            let failed = record.failure.is_some();
            if let Some(msg) = &record.failure {
                log::warn!("trial failed (policy {kind}, seed {s}): {msg}");
            }
            let row = RawRow {
                experiment_id: config.id.clone(),
                preset: preset.clone(),
                policy: kind,
                seed: s,
                grid_value: *value,
                tau: record.tau,
                samples_to_f1: hit,
                censored: hit.is_none(),
                final_f1: record.final_f1,
            };
            let trace = options.diagnostics.then(|| Trace {
                grid_value: *value,
                s_star: inst.s_star.clone(),
                record,
            });
            Ok(TrialOutcome { row, f1, trace, failed })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::new();
    for (g, (value, _)) in grid.iter().enumerate() {
        for (pi, &kind) in config.policies.iter().enumerate() {
            let group: Vec<&TrialOutcome> = outcomes
                .iter()
                .filter(|o| o.row.policy == kind && o.row.grid_value == *value)
                .collect();
            let boot_index = (g * config.policies.len() + pi) as u64;
            summaries.push(summarize(config, kind, *value, &group, boot_index)?);
        }
    }
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::new();
    for o in outcomes {
        rows.push(o.row);
        if let Some(t) = o.trace {
            traces.push(t);
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        rows,
        summary: Summary {
            schema: SUMMARY_SCHEMA,
            experiment_id: config.id.clone(),
            preset: config.preset.clone(),
            sweep_param: config.sweep.as_ref().map(|s| s.param),
            f1_threshold: config.f1_threshold,
            level: config.level,
            grid: grid_info,
            policies: summaries,
        },
        traces,
    })
}

fn summarize(
    config: &ExperimentConfig,
    kind: PolicyKind,
    value: Option<f64>,
    group: &[&TrialOutcome],
    boot_index: u64,
) -> Result<PolicySummary> {
    let mut rng = stream_rng(config.master_seed, Stream::Bootstrap, boot_index);
    let hits: Vec<Option<f64>> = group.iter().map(|o| o.row.samples_to_f1.map(|v| v as f64)).collect();
    let med = censored_median(&hits);
    let reached: Vec<f64> = hits.iter().flatten().copied().collect();
    let median_ci = match med.value {
        Some(m) if reached.len() >= 2 => {
            let iv = bca_interval(&reached, Statistic::Median, config.resamples, config.level, &mut rng)?;
            // Censored trials shift the point estimate away from the
            // uncensored resamples; widen so the interval still covers it.
            Some(Interval { point: m, lo: iv.lo.min(m), hi: iv.hi.max(m) })
        }
        Some(m) => Some(Interval { point: m, lo: m, hi: m }),
        None => None,
    };
    let taus: Vec<f64> = group.iter().filter_map(|o| o.row.tau.map(|t| t as f64)).collect();
    let (mean_tau, tau_ci) = if taus.is_empty() {
        (None, None)
    } else if taus.len() >= 2 {
        let iv = bca_interval(&taus, Statistic::Mean, config.resamples, config.level, &mut rng)?;
        (Some(iv.point), Some(iv))
    } else {
        (Some(taus[0]), None)
    };
    let finals: Vec<f64> = group.iter().filter_map(|o| o.row.final_f1).collect();
    let curve = f1_curve(config, group, &mut rng)?;
    Ok(PolicySummary {
        policy: kind,
        grid_value: value,
        trials: group.len(),
        failures: group.iter().filter(|o| o.failed).count(),
        successes: med.successes,
        success_rate: med.success_rate(),
        status: if med.converged() { "ok".into() } else { "did not converge".into() },
        median_samples: med.value,
        mean_samples_uncensored: (!reached.is_empty()).then(|| metrics::mean(&reached)),
        median_ci,
        ci_basis: "bca-median-uncensored".into(),
        mean_tau,
        tau_ci,
        mean_final_f1: (!finals.is_empty()).then(|| metrics::mean(&finals)),
        curve,
    })
}

fn f1_curve(
    config: &ExperimentConfig,
    group: &[&TrialOutcome],
    rng: &mut crate::rng::TrialRng,
) -> Result<Option<F1Curve>> {
    let len = group.iter().map(|o| o.f1.len()).max().unwrap_or(0);
    if len == 0 {
        return Ok(None);
    }
    let mut curve = F1Curve { t: Vec::new(), mean: Vec::new(), median: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    for t in curve_grid(len, config.curve_points) {
        // Trials that stopped early hold their last value.
        let vals: Vec<f64> = group
            .iter()
            .filter_map(|o| o.f1.get(t - 1).or(o.f1.last()).copied())
            .collect();
        if vals.is_empty() {
            continue;
        }
        let iv = if vals.len() >= 2 {
            bca_interval(&vals, Statistic::Mean, config.resamples, config.level, rng)?
        } else {
            Interval { point: vals[0], lo: vals[0], hi: vals[0] }
        };
        curve.t.push(t);
        curve.mean.push(iv.point);
        curve.median.push(metrics::median(&vals));
        curve.lo.push(iv.lo.min(iv.point));
        curve.hi.push(iv.hi.max(iv.point));
    }
    Ok(Some(curve))
}
