mod common;

use ecc_aht::covmodel::{generate_correlation, CorrelationSpec, CovarianceModel, Pattern};
use ecc_aht::design::{design_budgeted, design_unconstrained, minimum_budget, pair_contrast};
use ecc_aht::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cov(rng: &mut ChaCha8Rng, k: usize) -> CovarianceModel {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(k, k) * 0.1;
    CovarianceModel::from_matrix(s).unwrap()
}

#[test]
fn matches_enumeration_on_general_covariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..40 {
        let k = rng.random_range(2..=6);
        let cov = random_cov(&mut rng, k);
        let delta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b_min = minimum_budget(&delta);
        let b = b_min * rng.random_range(1.01..4.0);
        let got = design_budgeted(&cov, &delta, b).unwrap();
        let (_, best) = common::qp_oracle(cov.sigma(), &delta, b).unwrap();
        assert!((got.objective - best).abs() <= 1e-6 * best, "{} vs {best}", got.objective);
        assert!(got.l1_norm <= b * (1.0 + 1e-9));
    }
}

#[test]
fn budget_below_minimum_is_infeasible() {
    let cov = generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 4, 0.5)).unwrap();
    let delta = pair_contrast(&[2.0; 4], 0, 2);
    assert_eq!(minimum_budget(&delta), 0.5);
    assert!(matches!(design_budgeted(&cov, &delta, 0.49), Err(Error::InfeasibleBudget { .. })));
    assert!(common::qp_oracle(cov.sigma(), &delta, 0.49).is_none());
}

#[test]
fn unconstrained_solution_satisfies_stationarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let k = rng.random_range(2..=8);
        let cov = random_cov(&mut rng, k);
        let delta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = design_unconstrained(&cov, &delta).unwrap().c;
        // Σc is parallel to Δ with multiplier 1 / ΔᵀΣ⁻¹Δ.
        let sc = cov.sigma() * DVector::from_column_slice(&c);
        let d = DVector::from_column_slice(&delta);
        let nu = sc.dot(&d) / d.dot(&d);
        assert!((sc - d * nu).amax() < 1e-9);
        let dot: f64 = c.iter().zip(&delta).map(|(a, b)| a * b).sum();
        assert!((dot - 1.0).abs() < 1e-10);
    }
}

#[test]
fn objective_non_increasing_in_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let k = rng.random_range(3..=7);
        let cov = random_cov(&mut rng, k);
        let delta: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
        let b_min = minimum_budget(&delta);
        let mut prev = f64::INFINITY;
        for step in 0..12 {
            let b = b_min * (1.0 + 0.25 * step as f64);
            let v = design_budgeted(&cov, &delta, b).unwrap().objective;
            assert!(v <= prev * (1.0 + 1e-9), "objective rose to {v} from {prev} at B={b}");
            prev = v;
        }
    }
}
