//! Stopping time under the GLR rule for several confidence levels.
use ecc_aht::covmodel::Pattern;
use ecc_aht::environment::{make_instance, InstanceConfig};
use ecc_aht::harness::metrics::linear_fit;
use ecc_aht::inference::StopRule;
use ecc_aht::policies::{run_trial, PolicyConfig, PolicyKind, TrialOptions};
use ecc_aht::rng::{stream_rng, Stream};

fn main() -> ecc_aht::Result<()> {
    let cfg = InstanceConfig::new(20, 2, Pattern::Equicorrelation, 0.6).with_delta(1.0);
    let deltas = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut means = Vec::new();
    for &d in &deltas {
        let options = TrialOptions { stop: StopRule::Glr { delta: d }, horizon: 100_000, diagnostics: false };
        let mut total = 0.0;
        let mut correct = 0;
        for s in 0..30 {
            let inst = make_instance(&cfg, &mut stream_rng(0, Stream::Instance, s))?;
            let rec = run_trial(
                &inst,
                &PolicyConfig::new(PolicyKind::EccAht),
                &options,
                &mut stream_rng(0, Stream::Noise, s),
                &mut stream_rng(0, Stream::Policy, s),
            )?;
            total += rec.tau.unwrap_or(options.horizon) as f64;
            correct += usize::from(rec.final_set == inst.s_star);
        }
        means.push(total / 30.0);
        println!("delta {d:<7} mean tau {:>6.1}  correct {correct}/30", total / 30.0);
    }
    let x: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln()).collect();
    let (a, b, r2) = linear_fit(&x, &means);
    println!("tau ~ {a:.1} + {b:.2} log(1/delta), R^2 {r2:.3}");
    Ok(())
}
