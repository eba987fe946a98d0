//! Budgeted contrast design for one pair, swept over the budget.
use ecc_aht::covmodel::{generate_correlation, CorrelationSpec, Pattern};
use ecc_aht::design::{design_budgeted, design_unconstrained, minimum_budget, pair_contrast};

fn main() -> ecc_aht::Result<()> {
    let cov = generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 8, 0.8))?;
    let delta = pair_contrast(&[1.0; 8], 3, 4);
    let free = design_unconstrained(&cov, &delta)?;
    println!("B_min = {}, unconstrained L1 = {:.3}", minimum_budget(&delta), free.l1_norm);

    for b in [1.0, 1.5, 2.0, 4.0, 8.0] {
        match design_budgeted(&cov, &delta, b) {
            Ok(a) => {
                let c: Vec<String> = a.c.iter().map(|v| format!("{v:+.3}")).collect();
                println!("B={b:<4} var {:.4}  L1 {:.3}  c = [{}]", a.objective, a.l1_norm, c.join(" "));
            }
            Err(e) => println!("B={b:<4} {e}"),
        }
    }
    Ok(())
}
