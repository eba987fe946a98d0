//! Named experiment configurations.

use crate::covmodel::Pattern;
use crate::environment::InstanceConfig;
use crate::error::{Error, Result};
use crate::policies::PolicyKind;

use super::{ExperimentConfig, Sweep, SweepParam};

use PolicyKind::*;

/// Every preset name, including one `patterns-<name>` entry per pattern.
pub fn names() -> Vec<String> {
    let mut v: Vec<String> = [
        "fig1-toy",
        "exp1-independent",
        "exp1-rho05",
        "exp1-k1000",
        "ablation",
        "robustness-baseline",
        "robustness-delta",
        "robustness-rho",
        "robustness-n",
        "robustness-budget",
        "spectral-mixing",
        "sota-k128",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(Pattern::ALL.iter().map(|p| format!("patterns-{}", p.name())));
    v
}

fn named(name: &str, instance: InstanceConfig, policies: Vec<PolicyKind>) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(name, instance, policies);
    c.preset = Some(name.to_string());
    c
}

fn sweep(mut c: ExperimentConfig, param: SweepParam, values: &[f64]) -> ExperimentConfig {
    c.sweep = Some(Sweep { param, values: values.to_vec() });
    c
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let baseline = InstanceConfig::robustness_baseline;
    let robust = vec![EccAht, Rsp, RoundRobin];
    let c = match name {
        "fig1-toy" => {
            let mut c = named(name, InstanceConfig::fig1_toy(), vec![EccAht]);
            c.horizon = 300;
            c.diagnostics = true;
            c
        }
        "exp1-independent" => named(
            name,
            InstanceConfig::new(100, 3, Pattern::Identity, 0.0).with_budget(4.0),
            vec![EccAht, RoundRobin, Rsp],
        ),
        "exp1-rho05" => named(
            name,
            InstanceConfig::new(100, 3, Pattern::Toeplitz, 0.5).with_budget(4.0),
            vec![EccAht, RoundRobin, Rsp],
        ),
        "exp1-k1000" => named(
            name,
            InstanceConfig::new(1000, 3, Pattern::Toeplitz, 0.8).with_budget(10.0),
            vec![EccAht, RoundRobin, Rsp],
        ),
        "ablation" => named(
            name,
            InstanceConfig::new(100, 3, Pattern::Toeplitz, 0.8).with_budget(4.0),
            vec![EccAht, EccAhtNoQp, Rsp, RoundRobin, EccAhtDiagonal, EccAhtCostFree],
        ),
        "robustness-baseline" => named(name, baseline(), robust),
        "robustness-delta" => sweep(
            named(name, baseline(), robust),
            SweepParam::Delta,
            &[0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
        ),
        "robustness-rho" => {
            sweep(named(name, baseline(), robust), SweepParam::Rho, &[0.0, 0.3, 0.6, 0.9])
        }
        "robustness-n" => {
            sweep(named(name, baseline(), robust), SweepParam::N, &[1.0, 3.0, 5.0, 7.0, 10.0])
        }
        "robustness-budget" => {
            sweep(named(name, baseline(), robust), SweepParam::Budget, &[2.0, 5.0, 10.0])
        }
        "spectral-mixing" => {
            let mut c = sweep(
                named(name, baseline(), vec![EccAht]),
                SweepParam::Mixing,
                &[0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 0.999],
            );
            c.horizon = 1000;
            c
        }
        "sota-k128" => named(
            name,
            InstanceConfig::new(128, 3, Pattern::Toeplitz, 0.6),
            vec![EccAht, TttsChallenger, BaseArmCombGapE, EccAhtRestricted],
        ),
        other => match other.strip_prefix("patterns-") {
            Some(p) => named(
                name,
                InstanceConfig::new(128, 3, p.parse::<Pattern>()?, 0.8),
                vec![EccAht, Rsp, RoundRobin],
            ),
            None => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}'; known presets: {}",
                    names().join(", ")
                )))
            }
        },
    };
    Ok(c)
}
