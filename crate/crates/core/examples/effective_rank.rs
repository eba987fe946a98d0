//! Effective rank across patterns, under ridge regularization and along
//! the spectral-mixing path.
use ecc_aht::covmodel::{generate_correlation, regularize, spectral_mixing, spectrum, CorrelationSpec, Pattern};

fn main() -> ecc_aht::Result<()> {
    let k = 128;
    for p in Pattern::ALL {
        let mut spec = CorrelationSpec::new(p, k, 0.8);
        spec.allow_identity = true;
        let s = spectrum(&generate_correlation(&spec)?)?;
        println!("{:<16} shannon {:>7.2}  participation {:>7.2}", p.name(), s.shannon_er, s.pr_er);
    }

    let toeplitz = generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, k, 0.95))?;
    for alpha in [0.0, 0.01, 0.1, 1.0] {
        let s = spectrum(&regularize(&toeplitz, alpha)?)?;
        println!("toeplitz(0.95) + {alpha:<4} I: shannon {:.2}", s.shannon_er);
    }

    for w in [0.0, 0.5, 0.9, 0.99] {
        let s = spectrum(&spectral_mixing(k, w, 1)?)?;
        println!("mixing w={w:<4}: shannon {:>7.2}", s.shannon_er);
    }
    Ok(())
}
