//! Print the designed measurement around the current champion for the first
//! rounds of a small correlated instance.
use ecc_aht::environment::{make_instance, InstanceConfig};
use ecc_aht::policies::{run_trial, PolicyConfig, PolicyKind, TrialOptions};
use ecc_aht::rng::{stream_rng, Stream};

fn main() -> ecc_aht::Result<()> {
    let inst = make_instance(&InstanceConfig::fig1_toy(), &mut stream_rng(0, Stream::Instance, 0))?;
    println!("anomalous streams: {:?}", inst.s_star);
    let options = TrialOptions { diagnostics: true, ..TrialOptions::fixed(40) };
    let rec = run_trial(
        &inst,
        &PolicyConfig::new(PolicyKind::EccAht),
        &options,
        &mut stream_rng(0, Stream::Noise, 0),
        &mut stream_rng(0, Stream::Policy, 0),
    )?;
    let actions = &rec.diagnostics.as_ref().expect("diagnostics").actions;
    for (step, c) in rec.steps.iter().zip(actions).step_by(4) {
        let (i, j) = step.pair.expect("pair");
        let around = |k: usize| c.get(k).map_or("   .  ".to_string(), |v| format!("{v:+.2}"));
        println!(
            "t={:>3} pair ({i:>2},{j:>2})  c[i-1] {}  c[i] {}  c[i+1] {}",
            step.t,
            if i == 0 { "   .  ".into() } else { around(i - 1) },
            around(i),
            around(i + 1)
        );
    }
    Ok(())
}
