//! Median delay against correlation strength, writing outputs to a temp dir.
use ecc_aht::harness::report::{write_charts, write_outputs};
use ecc_aht::harness::{presets::preset, run_experiment};

fn main() -> ecc_aht::Result<()> {
    let mut config = preset("robustness-rho")?;
    config.seeds = 6;
    config.resamples = 300;
    let result = run_experiment(&config)?;
    for p in &result.summary.policies {
        println!("{:<12} rho={:<4} median {:?}", p.policy.name(), p.grid_value.unwrap_or(0.0), p.median_samples);
    }
    let dir = std::env::temp_dir().join("ecc-aht-rho-sweep");
    std::fs::create_dir_all(&dir)?;
    write_outputs(&result, &dir)?;
    let charts = write_charts(&result.summary, &dir)?;
    println!("wrote raw.csv, summary.json and {charts:?} to {}", dir.display());
    Ok(())
}
