//! The ablation preset with fewer seeds.
use ecc_aht::harness::{presets::preset, run_experiment};

fn main() -> ecc_aht::Result<()> {
    let mut config = preset("ablation")?;
    config.seeds = 8;
    config.resamples = 500;
    let result = run_experiment(&config)?;
    for p in &result.summary.policies {
        let ci = p.median_ci.map_or("-".into(), |iv| format!("[{:.1}, {:.1}]", iv.lo, iv.hi));
        println!(
            "{:<20} median {:>8}  ci {:<16} success {:.2}",
            p.policy.name(),
            p.median_samples.map_or("inf".into(), |m| m.to_string()),
            ci,
            p.success_rate
        );
    }
    Ok(())
}
