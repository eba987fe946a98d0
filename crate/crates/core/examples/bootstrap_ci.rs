//! BCa intervals for the mean and the censored median.
use ecc_aht::harness::bootstrap::{bca_interval, Statistic};
use ecc_aht::harness::metrics::censored_median;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

fn main() -> ecc_aht::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let exp = Exp::new(1.0f64 / 40.0).expect("rate");
    let delays: Vec<f64> = (0..40).map(|_| exp.sample(&mut rng).ceil()).collect();
    for stat in [Statistic::Mean, Statistic::Median] {
        let iv = bca_interval(&delays, stat, 5000, 0.95, &mut rng)?;
        println!("{stat:?}: {:.1} [{:.1}, {:.1}]", iv.point, iv.lo, iv.hi);
    }

    // Trials past a horizon of 60 count as never reaching the threshold.
    let censored: Vec<Option<f64>> = delays.iter().map(|&d| (d <= 60.0).then_some(d)).collect();
    let m = censored_median(&censored);
    println!("censored median {:?} with {}/{} reached", m.value, m.successes, m.total);
    Ok(())
}
