//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::sync::Arc;
use std::time::Instant;

use ecc_aht::covmodel::{generate_correlation, regularize, spectrum, CorrelationSpec, CovarianceModel, Pattern};
use ecc_aht::design::{design_budgeted, design_unconstrained, minimum_budget, pair_contrast};
use ecc_aht::environment::{make_instance, Environment, InstanceConfig, ProblemInstance};
use ecc_aht::harness::bootstrap::{bca_interval, Interval, Statistic};
use ecc_aht::harness::metrics::linear_fit;
use ecc_aht::harness::presets::{names, preset};
use ecc_aht::harness::report::raw_csv_string;
use ecc_aht::harness::{run_experiment, ExperimentConfig, PolicySummary};
use ecc_aht::inference::{llr_increment, StopRule};
use ecc_aht::ingest::{preprocess, read_csv, run_replay, write_bundle, ColumnKind, DropReason, ReplayConfig};
use ecc_aht::policies::{run_trial, Policy, PolicyConfig, PolicyKind, TrialOptions};
use ecc_aht::rng::{stream_rng, Stream};
use ecc_aht::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Outcome;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: Vec<(&str, Criterion)> = vec![
        ("QP matches brute-force oracle", c01_qp_oracle),
        ("K=2 correlation benefit closed form", c02_closed_form),
        ("effective-rank suite", c03_effective_rank),
        ("low/high effective-rank grouping", c04_grouping),
        ("policy ordering under strong correlation", c05_ordering),
        ("delay non-increasing in rho", c06_rho),
        ("delay non-increasing in budget", c07_budget),
        ("lateral inhibition", c08_lateral),
        ("misranking decay", c09_misranking),
        ("GLR stopping time affine in log(1/delta)", c10_glr),
        ("pseudo-LLR drift matches closed form", c11_drift),
        ("ingest golden bundle and replay", c12_ingest),
        ("preset reruns are byte-identical", c13_determinism),
    ];
    let results: Vec<(Outcome, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|&(_, f)| {
                scope.spawn(move || {
                    let start = Instant::now();
                    let r = std::panic::catch_unwind(f)
                        .unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_text(&e))));
                    (r, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = 0;
    for (idx, ((name, _), (r, secs))) in criteria.iter().zip(&results).enumerate() {
        println!(
            "criterion {:>2} {name}: {} ({}; {secs:.1}s)",
            idx + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn c01_qp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut infeasible, mut active, mut worst) = (0, 0, 0, 0.0f64);
    for _ in 0..50 {
        let k = rng.random_range(2..=6);
        let pattern = if rng.random_bool(0.5) { Pattern::Toeplitz } else { Pattern::Equicorrelation };
        let rho = rng.random_range(0.0..0.95);
        let cov = generate_correlation(&CorrelationSpec::new(pattern, k, rho)).unwrap();
        let i = rng.random_range(0..k);
        let j = (i + rng.random_range(1..k)) % k;
        let delta: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..3.0)).collect();
        let contrast = pair_contrast(&delta, i, j);
        let b_unc = design_unconstrained(&cov, &contrast).unwrap().l1_norm;
        let b_min = minimum_budget(&contrast);
        for b in [0.9 * b_min, b_min + rng.random_range(0.05..0.95) * (b_unc - b_min), 2.0 * b_unc] {
            let oracle = common::qp_oracle(cov.sigma(), &contrast, b);
            match (design_budgeted(&cov, &contrast, b), oracle) {
                (Ok(a), Some((_, best))) => {
                    let gap = (a.objective - best).abs() / best;
                    worst = worst.max(gap);
                    if a.l1_norm > b * (1.0 + 1e-6) || a.eq_residual.unwrap() > 1e-6 || gap > 1e-4 {
                        return outcome(false, format!("K={k} B={b}: objective {} vs oracle {best}", a.objective));
                    }
                    active += usize::from(a.l1_norm > b * (1.0 - 1e-6));
                    checked += 1;
                }
                (Err(Error::InfeasibleBudget { .. }), None) => infeasible += 1,
                (got, want) => {
                    return outcome(false, format!("K={k} B={b}: solver {:?} but oracle {:?}", got.is_ok(), want.is_some()))
                }
            }
        }
    }
    outcome(
        true,
        format!("{checked} solved ({active} budget-active), {infeasible} infeasible agreed, worst rel gap {worst:.1e}"),
    )
}

fn c02_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for rho in [0.0, 0.25, 0.5, 0.8, 0.95] {
        let cov = CovarianceModel::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
        let a = design_budgeted(&cov, &pair_contrast(&[1.0, 1.0], 0, 1), 5.0).unwrap();
        worst = worst.max((a.objective - 0.5 * (1.0 - rho)).abs());
    }
    outcome(worst < 1e-8, format!("max |objective - (1-rho)/2| = {worst:.1e}"))
}

fn c03_effective_rank() -> Outcome {
    for k in [1usize, 2, 17, 128] {
        let s = spectrum(&CovarianceModel::identity(k).unwrap()).unwrap();
        if (s.shannon_er - k as f64).abs() > 1e-9 || (s.pr_er - k as f64).abs() > 1e-9 {
            return outcome(false, format!("identity K={k} gives {s:?}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let patterns = Pattern::ALL;
    for m in 0..200 {
        let p = patterns[m % patterns.len()];
        let k = 8 * rng.random_range(1..=6);
        let rho = rng.random_range(0.05..0.95);
        let mut spec = CorrelationSpec::new(p, k, rho);
        spec.graph_seed = m as u64;
        spec.allow_identity = true;
        let cov = generate_correlation(&spec).unwrap();
        let s = spectrum(&cov).unwrap();
        if !(s.pr_er <= s.shannon_er + 1e-9 && s.shannon_er <= k as f64 + 1e-9) {
            return outcome(false, format!("{p:?} K={k}: pr {} shannon {}", s.pr_er, s.shannon_er));
        }
        let mut prev = 0.0;
        for alpha in [0.0, 0.01, 0.1, 1.0] {
            let er = spectrum(&regularize(&cov, alpha).unwrap()).unwrap().shannon_er;
            if er < prev - 1e-9 {
                return outcome(false, format!("{p:?} K={k}: ER fell from {prev} to {er} at alpha {alpha}"));
            }
            prev = er;
        }
    }
    let mut worst = 0.0f64;
    for rho in [0.3, 0.6, 0.8, 0.95] {
        let t = generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 128, rho)).unwrap();
        let e = generate_correlation(
            &CorrelationSpec::new(Pattern::Exponential, 128, rho).with_length_scale(-1.0 / f64::ln(rho)),
        )
        .unwrap();
        worst = worst.max((t.sigma() - e.sigma()).amax());
    }
    let t = spectrum(&generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 128, 0.8)).unwrap()).unwrap();
    let table_ok = (t.shannon_er - 46.64).abs() < 0.005 && (t.pr_er - 28.58).abs() < 0.005;
    outcome(
        worst < 1e-12 && table_ok,
        format!(
            "exp/toeplitz max diff {worst:.1e}; Toeplitz(0.8) ER {:.2}/{:.2} vs reference 46.64/28.58",
            t.shannon_er, t.pr_er
        ),
    )
}

fn c04_grouping() -> Outcome {
    let er = |p: Pattern| {
        let mut spec = CorrelationSpec::new(p, 128, 0.8);
        spec.allow_identity = true;
        spectrum(&generate_correlation(&spec).unwrap()).unwrap().shannon_er
    };
    let low: Vec<(Pattern, f64)> =
        [Pattern::Equicorrelation, Pattern::Rbf, Pattern::Kronecker].iter().map(|&p| (p, er(p))).collect();
    let high: Vec<(Pattern, f64)> = [Pattern::Toeplitz, Pattern::Circulant, Pattern::Exponential, Pattern::Graph]
        .iter()
        .map(|&p| (p, er(p)))
        .collect();
    let pass = low.iter().all(|x| x.1 < 15.0) && high.iter().all(|x| x.1 > 20.0);
    let fmt = |v: &[(Pattern, f64)]| v.iter().map(|(p, e)| format!("{} {e:.2}", p.name())).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("low: {}; high: {}", fmt(&low), fmt(&high)))
}

fn summary_for(s: &[PolicySummary], kind: PolicyKind, grid: Option<f64>) -> &PolicySummary {
    s.iter().find(|p| p.policy == kind && p.grid_value == grid).expect("policy summary")
}

fn median_or_inf(p: &PolicySummary) -> f64 {
    p.median_samples.unwrap_or(f64::INFINITY)
}

fn ci(p: &PolicySummary) -> Interval {
    p.median_ci.unwrap_or(Interval { point: f64::INFINITY, lo: f64::INFINITY, hi: f64::INFINITY })
}

fn c05_ordering() -> Outcome {
    let config = preset("ablation").unwrap();
    let ok_params = config.instance.k() == 100
        && config.instance.n == 3
        && config.instance.correlation.rho == 0.8
        && config.instance.delta == 3.0
        && config.instance.budget == 4.0
        && config.horizon == 2000
        && config.seeds == 20;
    let r = run_experiment(&config).unwrap();
    let s = &r.summary.policies;
    let ecc = summary_for(s, PolicyKind::EccAht, None);
    let mut pass = ok_params;
    let mut parts = vec![format!("ecc-aht {}", median_or_inf(ecc))];
    for kind in [PolicyKind::EccAhtNoQp, PolicyKind::Rsp, PolicyKind::RoundRobin] {
        let other = summary_for(s, kind, None);
        let (a, b) = (median_or_inf(ecc), median_or_inf(other));
        let separated = !ci(ecc).overlaps(&ci(other)) || b >= 2.0 * a;
        pass &= a < b && separated;
        parts.push(format!("{} {b}", kind.name()));
    }
    let diag = summary_for(s, PolicyKind::EccAhtDiagonal, None);
    pass &= median_or_inf(ecc) < median_or_inf(diag);
    parts.push(format!("{} {}", PolicyKind::EccAhtDiagonal.name(), median_or_inf(diag)));
    outcome(pass, format!("median samples: {}", parts.join(", ")))
}

/// Non-increasing along the grid, allowing one rise whose intervals overlap.
fn non_increasing(points: &[&PolicySummary]) -> (bool, String) {
    let mut inversions = 0;
    let mut ok = true;
    for w in points.windows(2) {
        if median_or_inf(w[1]) > median_or_inf(w[0]) {
            inversions += 1;
            ok &= ci(w[0]).overlaps(&ci(w[1]));
        }
    }
    let text = points
        .iter()
        .map(|p| format!("{}: {}", p.grid_value.unwrap(), median_or_inf(p)))
        .collect::<Vec<_>>()
        .join(", ");
    (ok && inversions <= 1, text)
}

fn sweep_monotone(name: &str) -> Outcome {
    let mut config: ExperimentConfig = preset(name).unwrap();
    config.policies = vec![PolicyKind::EccAht];
    let r = run_experiment(&config).unwrap();
    let values = &config.sweep.as_ref().unwrap().values;
    let points: Vec<&PolicySummary> =
        values.iter().map(|&v| summary_for(&r.summary.policies, PolicyKind::EccAht, Some(v))).collect();
    let (pass, text) = non_increasing(&points);
    outcome(pass, format!("ecc-aht median delay {text}"))
}

fn c06_rho() -> Outcome {
    sweep_monotone("robustness-rho")
}

fn c07_budget() -> Outcome {
    sweep_monotone("robustness-budget")
}

fn c08_lateral() -> Outcome {
    let config = preset("fig1-toy").unwrap();
    let k = config.instance.k();
    let options = TrialOptions { stop: config.stop_rule(), horizon: config.horizon, diagnostics: true };
    let counts: Vec<(usize, usize)> = (0..config.seeds as u64)
        .into_par_iter()
        .map(|s| {
            let inst = make_instance(&config.instance, &mut stream_rng(0, Stream::Instance, s)).unwrap();
            let rec = run_trial(
                &inst,
                &PolicyConfig::new(PolicyKind::EccAht),
                &options,
                &mut stream_rng(0, Stream::Noise, s),
                &mut stream_rng(0, Stream::Policy, s),
            )
            .unwrap();
            let mut hit = (0, 0);
            for (step, c) in rec.steps.iter().zip(&rec.diagnostics.as_ref().unwrap().actions) {
                let (i, _) = step.pair.unwrap();
                if i == 0 || i == k - 1 {
                    continue;
                }
                hit.1 += 1;
                if c[i - 1] * c[i] < 0.0 && c[i + 1] * c[i] < 0.0 {
                    hit.0 += 1;
                }
            }
            hit
        })
        .collect();
    let (yes, total) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let frac = yes as f64 / total as f64;
    outcome(frac >= 0.9, format!("{yes}/{total} interior-champion steps = {:.1}%", 100.0 * frac))
}

fn c09_misranking() -> Outcome {
    let cfg = InstanceConfig::robustness_baseline();
    let checkpoints = [25usize, 50, 100, 200];
    let per_seed: Vec<Vec<f64>> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let inst = make_instance(&cfg, &mut stream_rng(0, Stream::Instance, s)).unwrap();
            let policy = Policy::new(PolicyConfig::new(PolicyKind::EccAht), inst.view()).unwrap();
            let mut state = policy.initial_state();
            let mut noise = stream_rng(0, Stream::Noise, s);
            let mut prng = stream_rng(0, Stream::Policy, s);
            let mut out = Vec::new();
            for t in 1..=200 {
                policy.policy_step(&mut state, &inst, &mut noise, &mut prng).unwrap();
                if checkpoints.contains(&t) {
                    let l = state.belief.llr();
                    let (mut bad, mut total) = (0, 0);
                    for &i in &inst.s_star {
                        for j in (0..inst.k).filter(|j| !inst.s_star.contains(j)) {
                            total += 1;
                            bad += usize::from(l[i] <= l[j]);
                        }
                    }
                    out.push(bad as f64 / total as f64);
                }
            }
            out
        })
        .collect();
    let mut rng = stream_rng(0, Stream::Bootstrap, 9);
    let ivs: Vec<Interval> = (0..checkpoints.len())
        .map(|c| {
            let v: Vec<f64> = per_seed.iter().map(|r| r[c]).collect();
            bca_interval(&v, Statistic::Mean, 10_000, 0.95, &mut rng).unwrap()
        })
        .collect();
    let mut inversions = 0;
    let mut ok = true;
    for w in ivs.windows(2) {
        if w[1].point >= w[0].point {
            inversions += 1;
            ok &= w[0].overlaps(&w[1]);
        }
    }
    let last = ivs.last().unwrap().point;
    let text = checkpoints
        .iter()
        .zip(&ivs)
        .map(|(t, iv)| format!("T={t}: {:.2}%", 100.0 * iv.point))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(ok && inversions <= 1 && last < 0.05, text)
}

fn c10_glr() -> Outcome {
    // The pattern is left open by the criterion; see the notes on adjacent
    // anomalies under Toeplitz correlation.
    let cfg = InstanceConfig::new(20, 2, Pattern::Equicorrelation, 0.6).with_delta(1.0);
    let deltas = [1e-1, 1e-2, 1e-3];
    let means: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            let options = TrialOptions { stop: StopRule::Glr { delta: d }, horizon: 100_000, diagnostics: false };
            let taus: Vec<f64> = (0..50u64)
                .into_par_iter()
                .map(|s| {
                    let inst = make_instance(&cfg, &mut stream_rng(0, Stream::Instance, s)).unwrap();
                    let rec = run_trial(
                        &inst,
                        &PolicyConfig::new(PolicyKind::EccAht),
                        &options,
                        &mut stream_rng(0, Stream::Noise, s),
                        &mut stream_rng(0, Stream::Policy, s),
                    )
                    .unwrap();
                    rec.tau.expect("GLR trial stopped") as f64
                })
                .collect();
            taus.iter().sum::<f64>() / taus.len() as f64
        })
        .collect();
    let x: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln()).collect();
    let (a, b, r2) = linear_fit(&x, &means);
    outcome(
        r2 > 0.95 && b > 0.0,
        format!(
            "mean tau {:.1}, {:.1}, {:.1}; fit {a:.2} + {b:.2} log(1/delta), R^2 = {r2:.4}",
            means[0], means[1], means[2]
        ),
    )
}

fn c11_drift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 100_000;
    let mut worst = 0.0f64;
    for f in 0..10 {
        let k = 5;
        let rho = rng.random_range(0.0..0.9);
        let cov = Arc::new(generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, k, rho)).unwrap());
        let delta: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..2.0)).collect();
        let mu0: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut s_star: Vec<usize> = rand::seq::index::sample(&mut rng, k, 2).into_vec();
        s_star.sort_unstable();
        let inst = ProblemInstance {
            k,
            n: 2,
            s_star: s_star.clone(),
            delta: delta.clone(),
            mu0: mu0.clone(),
            cov: cov.clone(),
            budget: 1e6,
        };
        // Closed form from the raw matrix.
        let sigma2 = common::quad(cov.sigma(), &c);
        let shift: f64 = s_star.iter().map(|&s| c[s] * delta[s]).sum();
        let c_mu0: f64 = c.iter().zip(&mu0).map(|(a, b)| a * b).sum();
        let mut noise = stream_rng(f, Stream::Noise, 0);
        let mut sums = vec![(0.0, 0.0); k];
        for t in 0..draws {
            let y = inst.sample_observation(&c, t + 1, &mut noise).unwrap().y;
            for (kk, acc) in sums.iter_mut().enumerate() {
                let v = llr_increment(c[kk], delta[kk], y - c_mu0, cov.quad_form(&c));
                acc.0 += v;
                acc.1 += v * v;
            }
        }
        for kk in 0..k {
            let a = delta[kk] * c[kk];
            let expected = a * shift / sigma2 - a * a / (2.0 * sigma2);
            let mean = sums[kk].0 / draws as f64;
            let var = sums[kk].1 / draws as f64 - mean * mean;
            let se = (var / draws as f64).sqrt();
            let z = (mean - expected).abs() / se;
            worst = worst.max(z);
            if z > 3.0 {
                return outcome(false, format!("fixture {f} stream {kk}: mean {mean} vs {expected} ({z:.2} SE)"));
            }
        }
    }
    outcome(true, format!("10 fixtures x 5 streams, worst deviation {worst:.2} SE"))
}

fn c12_ingest() -> Outcome {
    use common::*;
    let text = golden_csv();
    let config = golden_config();
    let parsed = read_csv(text.as_bytes(), &config).unwrap();
    let ds = preprocess(&parsed, &config).unwrap();
    let mut fails: Vec<String> = Vec::new();
    let mut checks = 0;
    let mut check = |ok: bool, what: &str| {
        checks += 1;
        if !ok {
            fails.push(what.to_string());
        }
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);

    check(parsed.names.len() == 7 && parsed.rows() == GOLDEN_ROWS, "shape");
    check(parsed.timestamps[1] - parsed.timestamps[0] == 1.0, "merged timestamps");
    check(ds.columns == ["P1_LIT_PV", "P1_FIT_PV", "P2_MV_STATUS", "P2_PIT_PV", "P3_AUX"], "surviving columns");
    check(
        ds.meta.kinds
            == [ColumnKind::Continuous, ColumnKind::Continuous, ColumnKind::Discrete, ColumnKind::Continuous, ColumnKind::Continuous],
        "column kinds",
    );
    let reasons: Vec<(&str, DropReason)> = ds.meta.dropped.iter().map(|d| (d.name.as_str(), d.reason)).collect();
    check(reasons == [("P3_CONST", DropReason::ZeroVariance), ("P3_EMPTY", DropReason::AllEmpty)], "drop log");
    let missing = (0..GOLDEN_ROWS)
        .map(|i| {
            usize::from(golden_ramp_missing(i))
                + usize::from(golden_wave_missing(i))
                + usize::from(golden_status_missing(i))
                + usize::from(golden_aux_missing(i))
        })
        .sum::<usize>();
    check(ds.meta.imputed_cells == missing, "imputed cell count");
    check(ds.meta.train_rows == 6000, "training rows end at the first label");

    // Robust scaler: ramp 0.01 i over 6000 rows, quartiles by interpolation.
    let med = 0.01 * 2999.5;
    let iqr = 0.01 * (4499.25 - 1499.75);
    check(close(ds.scaler.median[0], med) && close(ds.scaler.iqr[0], iqr), "ramp scaler");
    // Status: 2701 ones among 6000 rows (three full blocks plus the ffilled
    // row 1800), so median 0 and IQR 1.
    check(ds.scaler.median[2] == 0.0 && ds.scaler.iqr[2] == 1.0, "status scaler");

    let w = &ds.windows;
    check(w.len() == 120 && w.rows_per_window == 60, "window count");
    let labels = w.labels.as_ref().unwrap();
    check((0..120).all(|i| labels[i] == (100..110).contains(&i)), "window labels");
    check(ds.meta.train_windows == 100 && ds.meta.estimation_windows == 100, "training windows");
    // Ramp windows: mean of 0.01 i over 60 rows, the interpolated gaps lie
    // on the line.
    for (idx, extra) in [(0usize, 0.0), (37, 0.0), (100, 3.0), (119, 0.0)] {
        let raw = 0.01 * (60.0 * idx as f64 + 29.5) + extra;
        check(close(w.values[idx][0], (raw - med) / iqr), &format!("ramp window {idx}"));
    }
    check(close(w.values[30][2], 1.0 / 60.0), "status window 30 carries the forward-filled row");
    check(close(w.values[0][2], 0.0) && close(w.values[15][2], 1.0), "status windows");
    // Wave window 17 covers rows 1020..1080 with gaps at 1036 and 1073.
    let wave_window: f64 = (1020..1080)
        .map(|i| if golden_wave_missing(i) { 0.5 * (golden_wave(i - 1) + golden_wave(i + 1)) } else { golden_wave(i) })
        .sum::<f64>()
        / 60.0;
    check(close(w.values[17][1], ds.scaler.scale(1, wave_window)), "wave window with interpolated gaps");

    // Model: λ stays at 1e-6, Σ̂ recomputed independently.
    check(ds.lambda == 1e-6 && ds.sigma_reg.lambda_min() > 0.0, "sigma_reg PD at lambda 1e-6");
    let train: Vec<&Vec<f64>> = (0..100).map(|i| &w.values[i]).collect();
    let mean = |j: usize| train.iter().map(|r| r[j]).sum::<f64>() / 100.0;
    let cov01 = train.iter().map(|r| (r[0] - mean(0)) * (r[1] - mean(1))).sum::<f64>() / 99.0;
    let var3 = train.iter().map(|r| (r[3] - mean(3)).powi(2)).sum::<f64>() / 99.0;
    check(close(ds.sigma_reg.sigma()[(0, 1)], cov01), "sigma_reg off-diagonal");
    check(close(ds.sigma_reg.sigma()[(3, 3)], var3 + 1e-6), "sigma_reg diagonal ridge");
    check(close(ds.mu0[0], mean(0)), "mu0");

    // Determinism of the written bundle.
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&ds, &dir.path().join("a")).unwrap();
    let again = preprocess(&read_csv(text.as_bytes(), &config).unwrap(), &config).unwrap();
    write_bundle(&again, &dir.path().join("b")).unwrap();
    for f in ["windows.csv", "model.json", "sigma_reg.csv", "meta.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        check(a == b, &format!("{f} byte-identical"));
    }

    let report = run_replay(&ds, &ReplayConfig::new(2, vec![PolicyKind::EccAht, PolicyKind::EccAhtDiagonal])).unwrap();
    check(report.summary.len() == 2 && report.outcomes.len() == 2, "replay outcomes");
    check(report.truth.s_star.as_deref() == Some(&[0, 3][..]), "replay truth");
    let delays: Vec<String> = report
        .outcomes
        .iter()
        .map(|o| format!("{} delay {:?}", o.policy.name(), o.delay))
        .collect();
    if fails.is_empty() {
        outcome(true, format!("{checks} checks on goldens; replay over {} windows: {}", report.rows, delays.join(", ")))
    } else {
        outcome(false, format!("failed: {}", fails.join("; ")))
    }
}

fn c13_determinism() -> Outcome {
    let mut checked = 0;
    for name in names() {
        let mut c = preset(&name).unwrap();
        c.seeds = 2;
        c.horizon = c.horizon.min(60);
        c.resamples = 50;
        let first = raw_csv_string(&run_experiment(&c).unwrap().rows).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let second = pool.install(|| raw_csv_string(&run_experiment(&c).unwrap().rows).unwrap());
        if first != second {
            return outcome(false, format!("preset {name} differs between runs"));
        }
        checked += 1;
    }
    outcome(true, format!("{checked} presets rerun (2 seeds, horizon <= 60, 1 vs many threads)"))
}
