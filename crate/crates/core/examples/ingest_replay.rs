//! Ingest a small synthetic plant log and replay it.
use ecc_aht::ingest::{preprocess, read_csv, run_replay, IngestConfig, ReplayConfig};
use ecc_aht::policies::PolicyKind;

fn synthetic_log() -> String {
    let mut s = String::from("Timestamp,FIT101,LIT101,MV101,PIT201,AIT202,Attack\n");
    for i in 0..7200usize {
        let t = i as f64;
        let attack = (4800..6600).contains(&i);
        let lvl = 500.0 + 10.0 * (t / 300.0).sin() + if attack { 25.0 } else { 0.0 };
        let flow = 2.5 + 0.1 * (t / 50.0).cos();
        let valve = (i / 600) % 2;
        let pit = 1.0 + 0.3 * (t / 170.0 + 1.0).sin() + 0.01 * ((i * 7919) % 100) as f64 + if attack { 0.8 } else { 0.0 };
        let ait = if i % 97 == 0 { String::new() } else { format!("{:.3}", 8.0 + 0.05 * (t / 40.0).sin()) };
        s += &format!("{i},{flow:.4},{lvl:.3},{valve},{pit:.3},{ait},{}\n", if attack { "Attack" } else { "Normal" });
    }
    s
}

fn main() -> ecc_aht::Result<()> {
    let config = IngestConfig { label_column: Some("Attack".into()), ..IngestConfig::default() };
    let text = synthetic_log();
    let ds = preprocess(&read_csv(text.as_bytes(), &config)?, &config)?;
    let m = &ds.meta;
    println!(
        "{} rows -> {} windows ({} train, {} anomalous), columns {:?}, {} cells imputed",
        m.raw_rows, m.windows, m.train_windows, m.anomalous_windows, ds.columns, m.imputed_cells
    );

    let report = run_replay(&ds, &ReplayConfig::new(2, vec![PolicyKind::EccAht, PolicyKind::EccAhtDiagonal]))?;
    println!("replay truth {:?} over {} windows", report.truth_columns, report.rows);
    for o in &report.outcomes {
        println!("{:<18} delay {:?} final {:?}", o.policy.name(), o.delay, o.final_set);
    }
    Ok(())
}
