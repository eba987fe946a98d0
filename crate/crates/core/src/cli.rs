//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! runtime failures. Errors go to stderr as `error[<tag>]: <message>`.
//!
//! Experiment configuration is layered: a preset supplies the base, a
//! `--config` file (TOML, or JSON including a previous `manifest.json`)
//! overrides it key by key, and explicit flags override both.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::covmodel::{spectrum, CorrelationSpec, CovarianceModel, Pattern};
use crate::design::{design_budgeted, design_unconstrained, minimum_budget, pair_contrast};
use crate::environment::InstanceConfig;
use crate::error::{Error, Result};
use crate::harness::presets;
use crate::harness::report::{read_summary, write_charts, write_outputs};
use crate::harness::{run_experiment, ExperimentConfig, Summary, Sweep, SweepParam};
use crate::inference::StopRule;
use crate::ingest::{ingest_file, read_bundle, run_replay, write_bundle, IngestConfig, ReplayConfig};
use crate::policies::PolicyKind;
use crate::rng::RNG_VERSION;

#[derive(Debug, Parser)]
#[command(name = "ecc-aht", version, about = "Correlation-aware sparse anomaly identification")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a correlation matrix and write it as CSV or JSON.
    GenCov(GenCovArgs),
    /// Print effective-rank diagnostics of a covariance.
    Spectrum(SpectrumArgs),
    /// Solve one design QP from a JSON problem file.
    Design(DesignArgs),
    /// Run an experiment (preset, config file, flags).
    Simulate(RunArgs),
    /// Run an experiment over a parameter grid.
    Sweep(SweepArgs),
    /// Preprocess a sensor CSV into a dataset bundle.
    Ingest(IngestArgs),
    /// Replay policies on an ingested bundle.
    Replay(ReplayArgs),
    /// Render SVG charts from a run's summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct CovArgs {
    #[arg(long)]
    pattern: Option<Pattern>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    length_scale: Option<f64>,
    /// Kronecker factor sizes as `K1xK2`.
    #[arg(long)]
    kron_factors: Option<String>,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long)]
    graph_seed: Option<u64>,
    /// Add `αI` after generation.
    #[arg(long)]
    regularize: Option<f64>,
    /// Identity/rank-one blend weight instead of a pattern.
    #[arg(long)]
    mixing: Option<f64>,
}

impl CovArgs {
    fn is_set(&self) -> bool {
        self.pattern.is_some() || self.mixing.is_some()
    }

    fn build(&self) -> Result<(InstanceConfig, CovarianceModel)> {
        let k = self.k.ok_or_else(|| Error::Config("--k is required".into()))?;
        let pattern = match (self.pattern, self.mixing) {
            (Some(p), _) => p,
            (None, Some(_)) => Pattern::Identity,
            (None, None) => return Err(Error::Config("--pattern (or --mixing) is required".into())),
        };
        let rho = match (self.rho, pattern) {
            (Some(r), _) => r,
            (None, Pattern::Identity) => 0.0,
            (None, _) if self.mixing.is_some() => 0.0,
            (None, _) => return Err(Error::Config("--rho is required".into())),
        };
        let mut spec = CorrelationSpec::new(pattern, k, rho);
        spec.block_size = self.block_size;
        spec.length_scale = self.length_scale;
        if let Some(f) = &self.kron_factors {
            spec.kron_factors = Some(parse_factors(f)?);
        }
        if let Some(p) = self.edge_prob {
            spec.edge_prob = p;
        }
        if let Some(s) = self.graph_seed {
            spec.graph_seed = s;
        }
        let mut inst = InstanceConfig::new(k, 1, pattern, rho);
        inst.correlation = spec;
        inst.regularize = self.regularize;
        inst.mixing = self.mixing;
        let cov = inst.build_covariance()?;
        Ok((inst, cov))
    }
}

fn parse_factors(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("kron factors must look like 4x8, got '{s}'"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MatrixFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct GenCovArgs {
    #[command(flatten)]
    cov: CovArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: MatrixFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[command(flatten)]
    cov: CovArgs,
    /// Read the matrix from a CSV or JSON file instead of generating it.
    #[arg(long, conflicts_with_all = ["pattern", "mixing"])]
    cov_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// JSON problem: `sigma` or `correlation`, `delta` (number or vector),
    /// `pair` or `contrast`, optional `budget`.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    preset: Option<String>,
    /// TOML or JSON config; a previous run's manifest.json also works.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    /// `fixed:<T>`, `glr:<δ>` or `posterior-gap:<γ>`.
    #[arg(long)]
    stop: Option<StopRule>,
    #[arg(long)]
    pattern: Option<Pattern>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    f1_threshold: Option<f64>,
    #[arg(long)]
    resamples: Option<usize>,
    /// Keep full traces for seed 0.
    #[arg(long)]
    diagnostics: bool,
    /// Skip SVG charts.
    #[arg(long)]
    no_charts: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, requires = "values")]
    param: Option<SweepParam>,
    #[arg(long, value_delimiter = ',', requires = "param")]
    values: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// TOML or JSON ingest config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    timestamp_column: Option<String>,
    #[arg(long)]
    date_column: Option<String>,
    #[arg(long)]
    time_column: Option<String>,
    #[arg(long)]
    time_format: Option<String>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    skip_rows: Option<usize>,
    #[arg(long)]
    train_rows: Option<usize>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    budget: f64,
    #[arg(long, value_delimiter = ',', default_value = "ecc-aht,ecc-aht-diagonal")]
    policies: Vec<PolicyKind>,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    stop: Option<StopRule>,
    #[arg(long, default_value_t = 0.95)]
    f1_threshold: f64,
    /// Directory for replay.json; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A run directory or its summary.json.
    #[arg(long)]
    input: PathBuf,
    /// Chart directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Written next to every artifact set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub rng_version: String,
    pub config: serde_json::Value,
}

impl Manifest {
    fn new(command: &str, seed: Option<u64>, config: impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            rng_version: RNG_VERSION.into(),
            config: serde_json::to_value(config)?,
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let text = e.render().to_string();
                    eprint!("error[usage]: {}", text.strip_prefix("error: ").unwrap_or(&text));
                    1
                }
            };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.tag());
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCov(a) => gen_cov(a),
        Command::Spectrum(a) => spectrum_cmd(a),
        Command::Design(a) => design_cmd(a),
        Command::Simulate(a) => {
            let config = resolve_run(&a)?;
            execute(config, &a, "simulate")
        }
        Command::Sweep(a) => {
            let mut config = resolve_run(&a.run)?;
            if let (Some(param), Some(values)) = (a.param, a.values) {
                config.sweep = Some(Sweep { param, values });
            }
            if config.sweep.is_none() {
                return Err(Error::Config(
                    "sweep needs --param and --values or a config with a sweep".into(),
                ));
            }
            execute(config, &a.run, "sweep")
        }
        Command::Ingest(a) => ingest_cmd(a),
        Command::Replay(a) => replay_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn gen_cov(a: GenCovArgs) -> Result<()> {
    let (inst, cov) = a.cov.build()?;
    let text = match a.format {
        MatrixFormat::Csv => cov.to_csv_string(),
        MatrixFormat::Json => serde_json::to_string(&cov.to_json())? + "\n",
    };
    write_text(a.out.as_deref(), &text)?;
    if let Some(p) = &a.out {
        Manifest::new("gen-cov", Some(inst.correlation.graph_seed), &inst)?.write(&sidecar(p))?;
    }
    Ok(())
}

fn read_matrix(path: &Path) -> Result<CovarianceModel> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        CovarianceModel::from_json_str(&text)
    } else {
        CovarianceModel::from_csv_str(&text)
    }
}

fn spectrum_cmd(a: SpectrumArgs) -> Result<()> {
    let cov = match &a.cov_file {
        Some(p) => read_matrix(p)?,
        None if a.cov.is_set() => a.cov.build()?.1,
        None => return Err(Error::Config("spectrum needs --pattern or --cov-file".into())),
    };
    println!("{}", serde_json::to_string_pretty(&spectrum(&cov)?)?);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DeltaSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignProblem {
    #[serde(default)]
    sigma: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    correlation: Option<CorrelationSpec>,
    #[serde(default)]
    delta: Option<DeltaSpec>,
    #[serde(default)]
    pair: Option<(usize, usize)>,
    #[serde(default)]
    contrast: Option<Vec<f64>>,
    #[serde(default)]
    budget: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DesignOutput {
    c: Vec<f64>,
    target_pair: Option<(usize, usize)>,
    objective: f64,
    eq_residual: Option<f64>,
    l1_norm: f64,
    budget: Option<f64>,
    b_min: f64,
    budget_active: bool,
}

fn design_cmd(a: DesignArgs) -> Result<()> {
    let p: DesignProblem = serde_json::from_str(&fs::read_to_string(&a.problem)?)
        .map_err(|e| Error::Config(format!("design problem: {e}")))?;
    let cov = match (p.sigma, p.correlation) {
        (Some(rows), None) => {
            let k = rows.len();
            CovarianceModel::from_matrix(crate::covmodel::MatrixJson { k, sigma: rows }.into_matrix()?)?
        }
        (None, Some(spec)) => crate::covmodel::generate_correlation(&spec)?,
        _ => return Err(Error::Config("design problem needs exactly one of sigma or correlation".into())),
    };
    let k = cov.k();
    let contrast = match (p.contrast, p.pair) {
        (Some(c), None) => c,
        (None, Some((i, j))) => {
            let delta = match p.delta {
                Some(DeltaSpec::Scalar(d)) => vec![d; k],
                Some(DeltaSpec::Vector(v)) => v,
                None => return Err(Error::Config("a pair needs delta".into())),
            };
            if delta.len() != k || i >= k || j >= k || i == j {
                return Err(Error::validation("pair must be two distinct indices and delta must have length K"));
            }
            pair_contrast(&delta, i, j)
        }
        _ => return Err(Error::Config("design problem needs exactly one of contrast or pair".into())),
    };
    let action = match p.budget {
        Some(b) => design_budgeted(&cov, &contrast, b)?,
        None => design_unconstrained(&cov, &contrast)?,
    };
    let action = match p.pair {
        Some((i, j)) => action.with_pair(i, j),
        None => action,
    };
    let out = DesignOutput {
        budget_active: p.budget.is_some_and(|b| action.l1_norm >= b * (1.0 - 1e-6)),
        b_min: minimum_budget(&contrast),
        budget: p.budget,
        c: action.c,
        target_pair: action.target_pair,
        objective: action.objective,
        eq_residual: action.eq_residual,
        l1_norm: action.l1_norm,
    };
    write_text(a.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Read a TOML or JSON table. A manifest contributes its `config` entry.
fn read_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path)?;
    let bad = |e: String| Error::Config(format!("{}: {e}", path.display()));
    let mut table: toml::Table = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))?
    };
    if table.contains_key("rng_version") {
        match table.remove("config") {
            Some(toml::Value::Table(t)) => table = t,
            _ => return Err(bad("manifest has no config table".into())),
        }
    }
    Ok(table)
}

fn to_table(value: impl Serialize) -> Result<toml::Table> {
    toml::Table::try_from(value).map_err(|e| Error::Config(e.to_string()))
}

/// Preset < config file < flags.
fn resolve_run(a: &RunArgs) -> Result<ExperimentConfig> {
    let file = a.config.as_deref().map(read_table).transpose()?;
    let preset_name = a
        .preset
        .clone()
        .or_else(|| file.as_ref().and_then(|f| f.get("preset")).and_then(|v| v.as_str().map(String::from)));
    let mut table = match &preset_name {
        Some(name) => to_table(presets::preset(name)?)?,
        None => to_table(ExperimentConfig::new(
            "custom",
            InstanceConfig::robustness_baseline(),
            vec![PolicyKind::EccAht],
        ))?,
    };
    if let Some(f) = file {
        merge(&mut table, f);
    }
    let mut c: ExperimentConfig =
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(v) = &a.id {
        c.id = v.clone();
    }
    if let Some(v) = a.seed {
        c.master_seed = v;
    }
    if let Some(v) = a.seeds {
        c.seeds = v;
    }
    if let Some(v) = a.horizon {
        c.horizon = v;
    }
    if let Some(v) = &a.policies {
        c.policies = v.clone();
    }
    if let Some(v) = a.stop {
        c.stop = Some(v);
    }
    if let Some(v) = a.pattern {
        c.instance.correlation.pattern = v;
    }
    if let Some(v) = a.k {
        c.instance.correlation.k = v;
    }
    if let Some(v) = a.n {
        c.instance.n = v;
    }
    if let Some(v) = a.rho {
        c.instance.correlation.rho = v;
    }
    if let Some(v) = a.delta {
        c.instance.delta = v;
    }
    if let Some(v) = a.budget {
        c.instance.budget = v;
    }
    if let Some(v) = a.f1_threshold {
        c.f1_threshold = v;
    }
    if let Some(v) = a.resamples {
        c.resamples = v;
    }
    if a.diagnostics {
        c.diagnostics = true;
    }
    c.validate()?;
    Ok(c)
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(0) => Err(Error::Config("--jobs must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn execute(config: ExperimentConfig, a: &RunArgs, command: &str) -> Result<()> {
    log::info!("running '{}' with {} seeds", config.id, config.seeds);
    let result = with_jobs(a.jobs, || run_experiment(&config))??;
    write_outputs(&result, &a.out)?;
    if a.no_charts {
        for name in chart_files(&a.out)? {
            fs::remove_file(a.out.join(name))?;
        }
    }
    Manifest::new(command, Some(config.master_seed), &config)?.write(&a.out.join("manifest.json"))?;
    fs::write(
        a.out.join("config.toml"),
        toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    print_summary(&result.summary);
    Ok(())
}

fn chart_files(dir: &Path) -> Result<Vec<OsString>> {
    let mut v = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        if Path::new(&name).extension().is_some_and(|e| e == "svg") {
            v.push(name);
        }
    }
    Ok(v)
}

fn print_summary(s: &Summary) {
    let param = s.sweep_param.map(|p| p.name()).unwrap_or("-");
    println!("{:<22} {:>10} {:>10} {:>20} {:>8}", "policy", param, "median", "ci", "success");
    for p in &s.policies {
        let grid = p.grid_value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let median = p.median_samples.map(|v| v.to_string()).unwrap_or_else(|| p.status.clone());
        let ci = p
            .median_ci
            .map(|iv| format!("[{:.1}, {:.1}]", iv.lo, iv.hi))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<22} {:>10} {:>10} {:>20} {:>7.0}%",
            p.policy.name(),
            grid,
            median,
            ci,
            100.0 * p.success_rate
        );
    }
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let mut table = to_table(IngestConfig::default())?;
    if let Some(p) = &a.config {
        merge(&mut table, read_table(p)?);
    }
    let mut c: IngestConfig =
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(v) = a.window {
        c.window_seconds = v;
    }
    if let Some(v) = a.lambda {
        c.lambda = v;
    }
    for (dst, src) in [
        (&mut c.timestamp_column, &a.timestamp_column),
        (&mut c.date_column, &a.date_column),
        (&mut c.time_column, &a.time_column),
        (&mut c.time_format, &a.time_format),
        (&mut c.label_column, &a.label_column),
    ] {
        if src.is_some() {
            *dst = src.clone();
        }
    }
    if let Some(v) = a.skip_rows {
        c.skip_rows = v;
    }
    if a.train_rows.is_some() {
        c.train_rows = a.train_rows;
    }
    c.validate()?;
    let ds = ingest_file(&a.input, &c)?;
    write_bundle(&ds, &a.out)?;
    #[derive(Serialize)]
    struct IngestRun<'a> {
        input: String,
        ingest: &'a IngestConfig,
    }
    let run = IngestRun { input: a.input.display().to_string(), ingest: &c };
    Manifest::new("ingest", None, &run)?.write(&a.out.join("manifest.json"))?;
    println!(
        "{} rows, {} -> {} columns ({} dropped), {} windows of {} rows, lambda {:e}",
        ds.meta.raw_rows,
        ds.meta.columns_in,
        ds.meta.columns_out,
        ds.meta.dropped.len(),
        ds.meta.windows,
        ds.windows.rows_per_window,
        ds.lambda
    );
    Ok(())
}

fn replay_cmd(a: ReplayArgs) -> Result<()> {
    let ds = read_bundle(&a.bundle)?;
    let config = ReplayConfig {
        n: a.n,
        delta: a.delta,
        budget: a.budget,
        policies: a.policies,
        seeds: a.seeds,
        master_seed: a.seed,
        f1_threshold: a.f1_threshold,
        stop: a.stop,
    };
    let report = run_replay(&ds, &config)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("replay.json"), &text)?;
            #[derive(Serialize)]
            struct ReplayRun<'a> {
                bundle: String,
                replay: &'a ReplayConfig,
            }
            let run = ReplayRun { bundle: a.bundle.display().to_string(), replay: &config };
            Manifest::new("replay", Some(config.master_seed), &run)?.write(&dir.join("manifest.json"))?;
            for s in &report.summary {
                let m = s.median_delay.value.map(|v| v.to_string()).unwrap_or_else(|| "not reached".into());
                println!("{:<22} median delay {m} over {} rows", s.policy.name(), report.rows);
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let path = if a.input.is_dir() { a.input.join("summary.json") } else { a.input.clone() };
    let summary = read_summary(&path)?;
    let out = match a.out {
        Some(o) => o,
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&out)?;
    let files = write_charts(&summary, &out)?;
    #[derive(Serialize)]
    struct ReportRun {
        summary: String,
        charts: Vec<String>,
    }
    let run = ReportRun { summary: path.display().to_string(), charts: files.clone() };
    Manifest::new("report", None, &run)?.write(&out.join("report-manifest.json"))?;
    for f in files {
        println!("{}", out.join(f).display());
    }
    Ok(())
}
