//! Generate every correlation pattern at K=32 and print a few entries.
use ecc_aht::covmodel::{generate_correlation, CorrelationSpec, Pattern};

fn main() -> ecc_aht::Result<()> {
    println!("{:<16} {:>8} {:>8} {:>8} {:>10}", "pattern", "s[0,1]", "s[0,5]", "s[0,31]", "lambda_min");
    for p in Pattern::ALL {
        let mut spec = CorrelationSpec::new(p, 32, 0.7);
        spec.allow_identity = true;
        let cov = generate_correlation(&spec)?;
        let s = cov.sigma();
        println!(
            "{:<16} {:>8.3} {:>8.3} {:>8.3} {:>10.4}",
            p.name(),
            s[(0, 1)],
            s[(0, 5)],
            s[(0, 31)],
            cov.lambda_min()
        );
    }
    Ok(())
}
