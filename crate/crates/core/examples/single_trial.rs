//! One trial per policy on the same instance and noise stream.
use ecc_aht::environment::{make_instance, InstanceConfig};
use ecc_aht::policies::{run_trial, PolicyConfig, PolicyKind, TrialOptions};
use ecc_aht::rng::{stream_rng, Stream};

fn main() -> ecc_aht::Result<()> {
    let inst = make_instance(&InstanceConfig::robustness_baseline(), &mut stream_rng(7, Stream::Instance, 0))?;
    println!("truth {:?}", inst.s_star);
    for kind in [PolicyKind::EccAht, PolicyKind::EccAhtNoQp, PolicyKind::RoundRobin, PolicyKind::Rsp] {
        let rec = run_trial(
            &inst,
            &PolicyConfig::new(kind),
            &TrialOptions::fixed(300),
            &mut stream_rng(7, Stream::Noise, 0),
            &mut stream_rng(7, Stream::Policy, 0),
        )?;
        let first = rec.f1_trajectory().iter().position(|&f| f >= 1.0).map(|t| t + 1);
        println!("{:<18} final {:?}  F1=1 first at {:?}", kind.name(), rec.final_set, first);
    }
    Ok(())
}
