//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Exact minimizer of `cᵀΣc` subject to `cᵀΔ = 1`, `‖c‖₁ ≤ B` by
/// enumerating every sign pattern in {−, 0, +}^K.
///
/// On a fixed orthant face the optimum solves an equality-constrained QP
/// with the budget either active (`sᵀc = B`) or slack, so every KKT point
/// appears among these closed-form candidates. Candidates that violate
/// their own signs or the budget are discarded. `None` means infeasible.
pub fn qp_oracle(sigma: &DMatrix<f64>, delta: &[f64], budget: f64) -> Option<(Vec<f64>, f64)> {
    let k = delta.len();
    assert!(k <= 8, "enumeration is exponential in K");
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut signs = vec![0i8; k];
    let total = 3usize.pow(k as u32);
    for code in 0..total {
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let support: Vec<usize> = (0..k).filter(|&i| signs[i] != 0).collect();
        if support.is_empty() {
            continue;
        }
        for active in [false, true] {
            let Some(x) = solve_face(sigma, delta, &signs, &support, budget, active) else {
                continue;
            };
            let mut full = vec![0.0; k];
            for (pos, &i) in support.iter().enumerate() {
                full[i] = x[pos];
            }
            let sign_ok = support.iter().all(|&i| full[i] * signs[i] as f64 >= -1e-12);
            let l1: f64 = full.iter().map(|v| v.abs()).sum();
            let eq: f64 = full.iter().zip(delta).map(|(a, b)| a * b).sum();
            if !sign_ok || l1 > budget * (1.0 + 1e-9) || (eq - 1.0).abs() > 1e-8 {
                continue;
            }
            let obj = quad(sigma, &full);
            if best.as_ref().is_none_or(|b| obj < b.1) {
                best = Some((full, obj));
            }
        }
    }
    best
}

fn solve_face(
    sigma: &DMatrix<f64>,
    delta: &[f64],
    signs: &[i8],
    support: &[usize],
    budget: f64,
    active: bool,
) -> Option<Vec<f64>> {
    let m = support.len();
    let s = DMatrix::from_fn(m, m, |a, b| sigma[(support[a], support[b])]);
    let ncons = if active { 2 } else { 1 };
    let a = DMatrix::from_fn(m, ncons, |r, col| {
        if col == 0 {
            delta[support[r]]
        } else {
            signs[support[r]] as f64
        }
    });
    let rhs = if active { DVector::from_vec(vec![1.0, budget]) } else { DVector::from_vec(vec![1.0]) };
    let chol = s.cholesky()?;
    let sinv_a = chol.solve(&a);
    let gram = a.transpose() * &sinv_a;
    if gram.determinant().abs() < 1e-12 * gram.norm().powi(ncons as i32).max(1e-300) {
        return None;
    }
    let mult = gram.lu().solve(&rhs)?;
    Some((sinv_a * mult).iter().copied().collect())
}

pub fn quad(sigma: &DMatrix<f64>, c: &[f64]) -> f64 {
    let v = DVector::from_column_slice(c);
    (v.transpose() * sigma * &v)[(0, 0)]
}

/// Rows, anomaly segment and columns of the synthetic ingest fixture.
pub const GOLDEN_ROWS: usize = 7200;
pub const GOLDEN_ANOMALY: std::ops::Range<usize> = 6000..6600;

pub fn golden_ramp(i: usize) -> f64 {
    0.01 * i as f64
}
pub fn golden_wave(i: usize) -> f64 {
    (0.05 * i as f64).sin() + 0.5 * (0.011 * i as f64).sin()
}
pub fn golden_status(i: usize) -> f64 {
    ((i / 900) % 2) as f64
}
pub fn golden_cos(i: usize) -> f64 {
    (0.03 * i as f64).cos()
}
pub fn golden_aux(i: usize) -> f64 {
    ((i * 7919) % 1000) as f64 / 1000.0
}

pub fn golden_ramp_missing(i: usize) -> bool {
    i % 100 == 50
}
pub fn golden_wave_missing(i: usize) -> bool {
    (1000..1200).contains(&i) && i.is_multiple_of(37)
}
pub fn golden_status_missing(i: usize) -> bool {
    i < 5 || i % 211 == 3 || i == 1800
}
pub fn golden_aux_missing(i: usize) -> bool {
    i % 500 == 250
}

/// Ten columns: split date and time, seven sensors (one constant, one
/// empty) and a label. One-second sampling starting 10:00:00.
pub fn golden_csv() -> String {
    let mut s = String::from("# synthetic plant export\n");
    s.push_str("Date,Time,P1_LIT_PV,P1_FIT_PV,P2_MV_STATUS,P2_PIT_PV,P3_CONST,P3_EMPTY,P3_AUX,Attack\n");
    for i in 0..GOLDEN_ROWS {
        let secs = 10 * 3600 + i;
        let anomalous = GOLDEN_ANOMALY.contains(&i);
        let bump = |v: f64| if anomalous { v } else { 0.0 };
        let cell = |missing: bool, v: f64| if missing { String::new() } else { format!("{v}") };
        s.push_str(&format!(
            "10/9/2017,{:02}:{:02}:{:02},{},{},{},{},4.2,,{},{}\n",
            secs / 3600,
            secs / 60 % 60,
            secs % 60,
            cell(golden_ramp_missing(i), golden_ramp(i) + bump(3.0)),
            cell(golden_wave_missing(i), golden_wave(i)),
            cell(golden_status_missing(i), golden_status(i)),
            cell(false, golden_cos(i) + bump(2.5)),
            cell(golden_aux_missing(i), golden_aux(i)),
            u8::from(anomalous)
        ));
    }
    s
}

pub fn golden_config() -> ecc_aht::ingest::IngestConfig {
    ecc_aht::ingest::IngestConfig {
        skip_rows: 1,
        date_column: Some("Date".into()),
        time_column: Some("Time".into()),
        label_column: Some("Attack".into()),
        ..Default::default()
    }
}
