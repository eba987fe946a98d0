//! Preprocessing for real sensor CSV files: cleaning, imputation, robust
//! scaling, windowing and regularized model estimation, plus replay of the
//! resulting dataset through the policies.
//!
//! The pipeline is a pure batch transform. Given the same file and
//! [`IngestConfig`] it produces byte-identical bundle files.

use std::collections::BTreeSet;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, NaiveDateTime};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covmodel::CovarianceModel;
use crate::environment::ReplayInstance;
use crate::error::{Error, Result};
use crate::harness::bootstrap::quantile_sorted;
use crate::harness::metrics::{censored_median, samples_to_threshold, CensoredMedian};
use crate::inference::StopRule;
use crate::policies::{run_trial, PolicyConfig, PolicyKind, StopReason, TrialOptions};
use crate::rng::{stream_rng, Stream};

pub const BUNDLE_SCHEMA: u32 = 1;

/// Timestamp formats tried in order when no explicit format is configured.
const TIME_FORMATS: [&str; 6] = [
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y/%m/%d %H:%M:%S%.f",
    "%m/%d/%Y %I:%M:%S%.f %p",
    "%m/%d/%Y %H:%M:%S%.f",
    "%d.%m.%Y %H:%M:%S%.f",
];

const MISSING_TOKENS: [&str; 6] = ["", "nan", "na", "n/a", "null", "none"];

fn default_window() -> f64 {
    60.0
}
fn default_lambda() -> f64 {
    1e-6
}
fn default_max_distinct() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    /// Timestamp column; defaults to the first column unless date and time
    /// columns are given.
    #[serde(default)]
    pub timestamp_column: Option<String>,
    #[serde(default)]
    pub date_column: Option<String>,
    #[serde(default)]
    pub time_column: Option<String>,
    /// chrono format for the (merged) timestamp. Plain numbers are always
    /// read as seconds.
    #[serde(default)]
    pub time_format: Option<String>,
    /// Metadata lines before the header.
    #[serde(default)]
    pub skip_rows: usize,
    #[serde(default)]
    pub label_column: Option<String>,
    /// Exact label text marking an anomalous row. Without it, any nonzero
    /// number or one of `true`/`yes`/`attack`/`anomaly`/`anomalous` counts.
    #[serde(default)]
    pub anomaly_label: Option<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default = "default_window")]
    pub window_seconds: f64,
    /// Leading raw rows used for scaling and model estimation. Defaults to
    /// every row before the first anomalous label, or all rows.
    #[serde(default)]
    pub train_rows: Option<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Columns without a PV/STATUS marker and at most this many distinct
    /// values are treated as discrete.
    #[serde(default = "default_max_distinct")]
    pub discrete_max_distinct: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            timestamp_column: None,
            date_column: None,
            time_column: None,
            time_format: None,
            skip_rows: 0,
            label_column: None,
            anomaly_label: None,
            exclude: Vec::new(),
            window_seconds: default_window(),
            train_rows: None,
            lambda: default_lambda(),
            discrete_max_distinct: default_max_distinct(),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds.is_finite() && self.window_seconds >= 1.0) {
            return Err(Error::Config("window_seconds must be >= 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        if self.date_column.is_some() != self.time_column.is_some() {
            return Err(Error::Config("date_column and time_column must be given together".into()));
        }
        if self.date_column.is_some() && self.timestamp_column.is_some() {
            return Err(Error::Config("use either timestamp_column or date_column/time_column".into()));
        }
        if self.train_rows == Some(0) {
            return Err(Error::Config("train_rows must be >= 1".into()));
        }
        Ok(())
    }

    fn is_anomalous(&self, raw: &str) -> bool {
        let v = raw.trim();
        if let Some(tag) = &self.anomaly_label {
            return v == tag.trim();
        }
        match v.parse::<f64>() {
            Ok(x) => x != 0.0,
            Err(_) => matches!(
                v.to_ascii_lowercase().as_str(),
                "true" | "yes" | "attack" | "anomaly" | "anomalous"
            ),
        }
    }
}

/// Parsed CSV before any cleaning: column-major cells, `None` for missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub timestamps: Vec<f64>,
    pub names: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub labels: Option<Vec<bool>>,
    /// Non-empty cells that failed to parse as numbers (treated as missing).
    pub unparsed_cells: usize,
}

impl ParsedCsv {
    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    AllEmpty,
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

/// Cleaned table with no missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub timestamps: Vec<f64>,
    pub columns: Vec<Column>,
    pub dropped: Vec<DroppedColumn>,
    pub labels: Option<Vec<bool>>,
    pub train_rows: usize,
    pub imputed_cells: usize,
}

impl RawTable {
    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }
}

fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<f64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let naive = |dt: NaiveDateTime| dt.and_utc().timestamp_millis() as f64 / 1000.0;
    if let Some(f) = format {
        return NaiveDateTime::parse_from_str(s, f).ok().map(naive);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis() as f64 / 1000.0);
    }
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(naive)
}

fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, ()> {
    let s = raw.trim();
    if MISSING_TOKENS.contains(&s.to_ascii_lowercase().as_str()) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(()),
    }
}

fn find_column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::ingest(None, format!("column '{name}' not found in header")))
}

/// Parse a sensor CSV. Whitespace around header names is trimmed.
pub fn read_csv<R: Read>(reader: R, config: &IngestConfig) -> Result<ParsedCsv> {
    config.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    for _ in 0..config.skip_rows {
        if records.next().transpose()?.is_none() {
            return Err(Error::ingest(None, "file ended inside the skipped metadata rows"));
        }
    }
    let header: Vec<String> = match records.next().transpose()? {
        Some(h) => h.iter().map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::ingest(None, "missing header row")),
    };

    let (time_cols, merged) = match (&config.date_column, &config.time_column) {
        (Some(d), Some(t)) => (vec![find_column(&header, d)?, find_column(&header, t)?], true),
        _ => match &config.timestamp_column {
            Some(name) => (vec![find_column(&header, name)?], false),
            None if !header.is_empty() => (vec![0], false),
            None => return Err(Error::ingest(None, "empty header")),
        },
    };
    let label_col = config.label_column.as_deref().map(|l| find_column(&header, l)).transpose()?;
    for name in &config.exclude {
        find_column(&header, name)?;
    }
    let sensor_cols: Vec<usize> = (0..header.len())
        .filter(|i| !time_cols.contains(i) && Some(*i) != label_col && !config.exclude.contains(&header[*i]))
        .collect();
    if sensor_cols.is_empty() {
        return Err(Error::ingest(None, "no sensor columns"));
    }

    let mut timestamps = Vec::new();
    let mut cells = vec![Vec::new(); sensor_cols.len()];
    let mut labels = label_col.map(|_| Vec::new());
    let mut unparsed = 0;
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let raw_time = if merged {
            format!("{} {}", field(time_cols[0]).trim(), field(time_cols[1]).trim())
        } else {
            field(time_cols[0]).to_string()
        };
        let ts = parse_timestamp(&raw_time, config.time_format.as_deref())
            .ok_or_else(|| Error::ingest(line, format!("unparseable timestamp '{}'", raw_time.trim())))?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::ingest(line, "timestamps must be strictly increasing"));
            }
        }
        timestamps.push(ts);
        for (dst, &c) in cells.iter_mut().zip(&sensor_cols) {
            dst.push(parse_cell(field(c)).unwrap_or_else(|_| {
                unparsed += 1;
                None
            }));
        }
        if let (Some(l), Some(col)) = (labels.as_mut(), label_col) {
            l.push(config.is_anomalous(field(col)));
        }
    }
    if timestamps.is_empty() {
        return Err(Error::ingest(None, "no data rows"));
    }
    Ok(ParsedCsv {
        timestamps,
        names: sensor_cols.iter().map(|&i| header[i].clone()).collect(),
        cells,
        labels,
        unparsed_cells: unparsed,
    })
}

/// Name rule first, then the cardinality fallback.
pub fn classify_column(name: &str, values: &[Option<f64>], max_distinct: usize) -> ColumnKind {
    let upper = name.to_ascii_uppercase();
    if upper.contains("STATUS") {
        return ColumnKind::Discrete;
    }
    if upper.contains("PV") {
        return ColumnKind::Continuous;
    }
    let mut distinct = BTreeSet::new();
    for v in values.iter().flatten() {
        distinct.insert(v.to_bits());
        if distinct.len() > max_distinct {
            return ColumnKind::Continuous;
        }
    }
    ColumnKind::Discrete
}

/// Linear interpolation in time over interior gaps; leading and trailing
/// gaps take the nearest observed value.
pub fn interpolate_linear(times: &[f64], values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    for i in 0..first {
        out[i] = values[first].unwrap();
    }
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        out[a] = va;
        for i in a + 1..b {
            let f = (times[i] - times[a]) / (times[b] - times[a]);
            out[i] = va + f * (vb - va);
        }
    }
    for o in out.iter_mut().skip(last) {
        *o = values[last].unwrap();
    }
    Some(out)
}

/// Forward fill, then backward fill the leading gap.
pub fn fill_forward_backward(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = values.iter().flatten().next().copied()?;
    let mut cur = first;
    Some(
        values
            .iter()
            .map(|v| {
                if let Some(x) = v {
                    cur = *x;
                }
                cur
            })
            .collect(),
    )
}

fn resolve_train_rows(parsed: &ParsedCsv, config: &IngestConfig) -> Result<usize> {
    let rows = parsed.rows();
    let n = match config.train_rows {
        Some(t) => t,
        None => parsed
            .labels
            .as_ref()
            .and_then(|l| l.iter().position(|&a| a))
            .unwrap_or(rows),
    };
    if n == 0 {
        return Err(Error::ingest(None, "no training rows before the first anomalous label"));
    }
    if n > rows {
        return Err(Error::ingest(None, format!("train_rows {n} exceeds the {rows} data rows")));
    }
    Ok(n)
}

/// Classify, impute and drop uninformative columns. Zero variance is judged
/// on the training rows.
pub fn classify_and_impute(parsed: &ParsedCsv, config: &IngestConfig) -> Result<RawTable> {
    let train_rows = resolve_train_rows(parsed, config)?;
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    let mut imputed = 0;
    for (name, cells) in parsed.names.iter().zip(&parsed.cells) {
        let kind = classify_column(name, cells, config.discrete_max_distinct);
        let filled = match kind {
            ColumnKind::Continuous => interpolate_linear(&parsed.timestamps, cells),
            ColumnKind::Discrete => fill_forward_backward(cells),
        };
        let Some(values) = filled else {
            dropped.push(DroppedColumn { name: name.clone(), reason: DropReason::AllEmpty });
            continue;
        };
        let train = &values[..train_rows];
        if train.iter().all(|&v| v == train[0]) {
            dropped.push(DroppedColumn { name: name.clone(), reason: DropReason::ZeroVariance });
            continue;
        }
        imputed += cells.iter().filter(|c| c.is_none()).count();
        columns.push(Column { name: name.clone(), kind, values });
    }
    if columns.is_empty() {
        return Err(Error::ingest(None, "every sensor column was dropped"));
    }
    Ok(RawTable {
        timestamps: parsed.timestamps.clone(),
        columns,
        dropped,
        labels: parsed.labels.clone(),
        train_rows,
        imputed_cells: imputed,
    })
}

/// Per-column median and interquartile range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
}

impl RobustScaler {
    /// Fit on `rows[..train_rows]` of every column.
    pub fn fit(columns: &[Vec<f64>], train_rows: usize) -> Result<Self> {
        if train_rows == 0 {
            return Err(Error::validation("robust scaling needs a nonempty training range"));
        }
        let mut median = Vec::with_capacity(columns.len());
        let mut iqr = Vec::with_capacity(columns.len());
        for col in columns {
            let mut s = col[..train_rows].to_vec();
            s.sort_by(f64::total_cmp);
            median.push(quantile_sorted(&s, 0.5));
            iqr.push(quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25));
        }
        Ok(RobustScaler { median, iqr })
    }

    fn divisor(&self, j: usize) -> f64 {
        if self.iqr[j] > 0.0 {
            self.iqr[j]
        } else {
            1.0
        }
    }

    pub fn scale(&self, j: usize, v: f64) -> f64 {
        (v - self.median[j]) / self.divisor(j)
    }

    pub fn unscale(&self, j: usize, v: f64) -> f64 {
        v * self.divisor(j) + self.median[j]
    }
}

/// Scale every column with parameters fitted on the training rows only.
pub fn robust_scale(table: &RawTable) -> Result<(RawTable, RobustScaler)> {
    let cols: Vec<Vec<f64>> = table.columns.iter().map(|c| c.values.clone()).collect();
    let scaler = RobustScaler::fit(&cols, table.train_rows)?;
    let mut out = table.clone();
    for (j, col) in out.columns.iter_mut().enumerate() {
        for v in col.values.iter_mut() {
            *v = scaler.scale(j, *v);
        }
    }
    Ok((out, scaler))
}

/// Non-overlapping window means.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub rows_per_window: usize,
    pub start: Vec<f64>,
    /// `T_w × K'`, row-major.
    pub values: Vec<Vec<f64>>,
    pub labels: Option<Vec<bool>>,
    /// Whether every raw row of the window lies in the training range.
    pub train: Vec<bool>,
}

impl Windows {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_anomalous(&self, w: usize) -> bool {
        self.labels.as_ref().is_some_and(|l| l[w])
    }
}

/// Rows per window: `W` divided by the median sampling interval, at least 1.
pub fn rows_per_window(timestamps: &[f64], window_seconds: f64) -> usize {
    if timestamps.len() < 2 {
        return 1;
    }
    let mut dt: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    dt.sort_by(f64::total_cmp);
    let med = quantile_sorted(&dt, 0.5);
    ((window_seconds / med).round() as usize).max(1)
}

/// Average consecutive blocks of rows. The trailing partial window is
/// dropped; a window is anomalous if any of its rows is.
pub fn window_means(table: &RawTable, window_seconds: f64) -> Result<Windows> {
    if !(window_seconds >= 1.0) {
        return Err(Error::validation("window length must be >= 1 second"));
    }
    let w = rows_per_window(&table.timestamps, window_seconds);
    let count = table.rows() / w;
    if count == 0 {
        return Err(Error::ingest(
            None,
            format!("{} rows are fewer than one {w}-row window", table.rows()),
        ));
    }
    let mut out = Windows {
        rows_per_window: w,
        start: Vec::with_capacity(count),
        values: Vec::with_capacity(count),
        labels: table.labels.as_ref().map(|_| Vec::with_capacity(count)),
        train: Vec::with_capacity(count),
    };
    for b in 0..count {
        let range = b * w..(b + 1) * w;
        out.start.push(table.timestamps[range.start]);
        out.values.push(
            table
                .columns
                .iter()
                .map(|c| c.values[range.clone()].iter().sum::<f64>() / w as f64)
                .collect(),
        );
        if let (Some(dst), Some(src)) = (out.labels.as_mut(), table.labels.as_ref()) {
            dst.push(src[range.clone()].iter().any(|&a| a));
        }
        out.train.push(range.end <= table.train_rows);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ModelEstimate {
    pub mu0: Vec<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub sigma_reg: CovarianceModel,
    /// Regularization actually applied after any escalation.
    pub lambda: f64,
}

/// Largest ridge tried before giving up.
pub const LAMBDA_CEILING: f64 = 1e-2;

/// Column means and `Σ̂ + λI`. A ridge that leaves the estimate indefinite
/// is raised tenfold until it works or exceeds [`LAMBDA_CEILING`].
pub fn estimate_model(rows: &[Vec<f64>], lambda: f64) -> Result<ModelEstimate> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::ingest(None, format!("model estimation needs at least 2 windows, got {n}")));
    }
    let k = rows[0].len();
    if n < k + 1 {
        log::warn!("estimating a {k}-dimensional covariance from only {n} windows");
    }
    let mu0: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let sigma_hat = DMatrix::from_fn(k, k, |a, b| {
        rows.iter().map(|r| (r[a] - mu0[a]) * (r[b] - mu0[b])).sum::<f64>() / (n - 1) as f64
    });
    let mut lam = lambda;
    loop {
        let reg = &sigma_hat + DMatrix::identity(k, k) * lam;
        match CovarianceModel::from_matrix(reg) {
            Ok(sigma_reg) => {
                if lam != lambda {
                    log::warn!("raised ridge from {lambda:e} to {lam:e} to reach positive definiteness");
                }
                return Ok(ModelEstimate { mu0, sigma_hat, sigma_reg, lambda: lam });
            }
            Err(e) => {
                let next = if lam == 0.0 { 1e-6 } else { lam * 10.0 };
                if next > LAMBDA_CEILING * (1.0 + 1e-9) {
                    return Err(Error::Numeric(format!(
                        "covariance estimate not positive definite even with ridge {lam:e}: {e}"
                    )));
                }
                lam = next;
            }
        }
    }
}

/// Counts and drop log written to `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestMeta {
    pub raw_rows: usize,
    pub columns_in: usize,
    pub columns_out: usize,
    pub dropped: Vec<DroppedColumn>,
    pub kinds: Vec<ColumnKind>,
    pub imputed_cells: usize,
    pub unparsed_cells: usize,
    pub train_rows: usize,
    pub windows: usize,
    pub train_windows: usize,
    pub estimation_windows: usize,
    pub anomalous_windows: usize,
}

/// Wire form of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: u32,
    pub columns: Vec<String>,
    pub mu0: Vec<f64>,
    pub sigma_reg: String,
    pub scaler: RobustScaler,
    pub lambda: f64,
    pub lambda_requested: f64,
    pub window_seconds: f64,
    pub rows_per_window: usize,
}

/// The complete preprocessed dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub windows: Windows,
    pub mu0: Vec<f64>,
    pub sigma_reg: Arc<CovarianceModel>,
    pub scaler: RobustScaler,
    pub lambda: f64,
    pub lambda_requested: f64,
    pub window_seconds: f64,
    pub meta: IngestMeta,
}

impl Dataset {
    pub fn k(&self) -> usize {
        self.columns.len()
    }
}

/// Run every stage on already parsed input.
pub fn preprocess(parsed: &ParsedCsv, config: &IngestConfig) -> Result<Dataset> {
    config.validate()?;
    let table = classify_and_impute(parsed, config)?;
    let (scaled, scaler) = robust_scale(&table)?;
    let windows = window_means(&scaled, config.window_seconds)?;
    let normal: Vec<Vec<f64>> = (0..windows.len())
        .filter(|&w| windows.train[w] && !windows.is_anomalous(w))
        .map(|w| windows.values[w].clone())
        .collect();
    let est = estimate_model(&normal, config.lambda)?;
    let meta = IngestMeta {
        raw_rows: parsed.rows(),
        columns_in: parsed.names.len(),
        columns_out: table.columns.len(),
        dropped: table.dropped.clone(),
        kinds: table.columns.iter().map(|c| c.kind).collect(),
        imputed_cells: table.imputed_cells,
        unparsed_cells: parsed.unparsed_cells,
        train_rows: table.train_rows,
        windows: windows.len(),
        train_windows: windows.train.iter().filter(|&&t| t).count(),
        estimation_windows: normal.len(),
        anomalous_windows: windows.labels.as_ref().map_or(0, |l| l.iter().filter(|&&a| a).count()),
    };
    log::info!(
        "ingested {} rows: {} -> {} columns, {} windows of {} rows",
        meta.raw_rows,
        meta.columns_in,
        meta.columns_out,
        meta.windows,
        windows.rows_per_window
    );
    Ok(Dataset {
        columns: table.columns.iter().map(|c| c.name.clone()).collect(),
        windows,
        mu0: est.mu0,
        sigma_reg: Arc::new(est.sigma_reg),
        scaler,
        lambda: est.lambda,
        lambda_requested: config.lambda,
        window_seconds: config.window_seconds,
        meta,
    })
}

pub fn ingest_file(path: &Path, config: &IngestConfig) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    preprocess(&read_csv(file, config)?, config)
}

fn windows_csv(ds: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["window".to_string(), "start".into(), "train".into(), "label".into()];
    header.extend(ds.columns.iter().cloned());
    w.write_record(&header)?;
    let win = &ds.windows;
    for i in 0..win.len() {
        let mut rec = vec![
            i.to_string(),
            win.start[i].to_string(),
            u8::from(win.train[i]).to_string(),
            win.labels.as_ref().map(|l| u8::from(l[i]).to_string()).unwrap_or_default(),
        ];
        rec.extend(win.values[i].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .map_err(|e| Error::Data(e.to_string()))
}

/// Write `windows.csv`, `model.json`, `sigma_reg.csv` and `meta.json`.
pub fn write_bundle(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("windows.csv"), windows_csv(ds)?)?;
    fs::write(dir.join("sigma_reg.csv"), ds.sigma_reg.to_csv_string())?;
    let model = ModelFile {
        schema: BUNDLE_SCHEMA,
        columns: ds.columns.clone(),
        mu0: ds.mu0.clone(),
        sigma_reg: "sigma_reg.csv".into(),
        scaler: ds.scaler.clone(),
        lambda: ds.lambda,
        lambda_requested: ds.lambda_requested,
        window_seconds: ds.window_seconds,
        rows_per_window: ds.windows.rows_per_window,
    };
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&model)? + "\n")?;
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&ds.meta)? + "\n")?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<Dataset> {
    let model: ModelFile = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
    if model.schema != BUNDLE_SCHEMA {
        return Err(Error::Data(format!("unsupported bundle schema {}", model.schema)));
    }
    let meta: IngestMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let sigma = CovarianceModel::from_csv_str(&fs::read_to_string(dir.join(&model.sigma_reg))?)?;
    let k = model.columns.len();
    if sigma.k() != k || model.mu0.len() != k {
        return Err(Error::Data("bundle dimensions disagree".into()));
    }
    let mut rdr = csv::Reader::from_path(dir.join("windows.csv"))?;
    let mut windows = Windows {
        rows_per_window: model.rows_per_window,
        start: Vec::new(),
        values: Vec::new(),
        labels: None,
        train: Vec::new(),
    };
    let mut labels = Vec::new();
    let mut has_labels = false;
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Data(format!("windows.csv: {e}")));
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != k + 4 {
            return Err(Error::Data(format!("windows.csv rows must have {} fields", k + 4)));
        }
        windows.start.push(num(&rec[1])?);
        windows.train.push(&rec[2] == "1");
        has_labels = !rec[3].is_empty();
        labels.push(&rec[3] == "1");
        windows.values.push((4..k + 4).map(|i| num(&rec[i])).collect::<Result<_>>()?);
    }
    if has_labels {
        windows.labels = Some(labels);
    }
    Ok(Dataset {
        columns: model.columns,
        windows,
        mu0: model.mu0,
        sigma_reg: Arc::new(sigma),
        scaler: model.scaler,
        lambda: model.lambda,
        lambda_requested: model.lambda_requested,
        window_seconds: model.window_seconds,
        meta,
    })
}

fn default_budget() -> f64 {
    5.0
}
fn default_replay_seeds() -> usize {
    1
}
fn default_threshold() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub n: usize,
    /// Signal size; defaults to the mean deviation of the `n` chosen streams.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_replay_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_threshold")]
    pub f1_threshold: f64,
    /// Defaults to running until the replay rows are exhausted.
    #[serde(default)]
    pub stop: Option<StopRule>,
}

impl ReplayConfig {
    pub fn new(n: usize, policies: Vec<PolicyKind>) -> Self {
        ReplayConfig {
            n,
            delta: None,
            budget: default_budget(),
            policies,
            seeds: default_replay_seeds(),
            master_seed: 0,
            f1_threshold: default_threshold(),
            stop: None,
        }
    }
}

/// Ground truth derived from labelled windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTruth {
    pub s_star: Option<Vec<usize>>,
    pub delta: f64,
    /// Mean of `x − μ0` over anomalous windows, per stream.
    pub deviation: Option<Vec<f64>>,
}

/// Truth is the `n` streams with the largest mean upward deviation over
/// anomalous windows.
pub fn replay_truth(ds: &Dataset, n: usize, delta: Option<f64>) -> Result<ReplayTruth> {
    let k = ds.k();
    if n == 0 || n >= k {
        return Err(Error::Config(format!("replay anomaly count n must satisfy 1 <= n < K={k}")));
    }
    let anomalous: Vec<&Vec<f64>> = (0..ds.windows.len())
        .filter(|&w| ds.windows.is_anomalous(w))
        .map(|w| &ds.windows.values[w])
        .collect();
    if anomalous.is_empty() {
        let delta = delta.ok_or_else(|| {
            Error::Config("replay without anomalous windows needs an explicit delta".into())
        })?;
        return Ok(ReplayTruth { s_star: None, delta, deviation: None });
    }
    let dev: Vec<f64> = (0..k)
        .map(|j| anomalous.iter().map(|r| r[j] - ds.mu0[j]).sum::<f64>() / anomalous.len() as f64)
        .collect();
    let mut s_star = crate::inference::top_n(&dev, n);
    s_star.sort_unstable();
    let delta = match delta {
        Some(d) => d,
        None => s_star.iter().map(|&j| dev[j]).sum::<f64>() / n as f64,
    };
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Data(format!("replay signal size must be positive, got {delta}")));
    }
    Ok(ReplayTruth { s_star: Some(s_star), delta, deviation: Some(dev) })
}

/// Replay rows are the anomalous windows when labels exist, otherwise every
/// window outside the training range.
pub fn replay_instance(ds: &Dataset, config: &ReplayConfig) -> Result<(ReplayInstance, ReplayTruth)> {
    let truth = replay_truth(ds, config.n, config.delta)?;
    let keep: Vec<usize> = (0..ds.windows.len())
        .filter(|&w| if truth.s_star.is_some() { ds.windows.is_anomalous(w) } else { !ds.windows.train[w] })
        .collect();
    let inst = ReplayInstance {
        rows: keep.iter().map(|&w| ds.windows.values[w].clone()).collect(),
        n: config.n,
        s_star: truth.s_star.clone(),
        delta: vec![truth.delta; ds.k()],
        mu0: ds.mu0.clone(),
        cov: ds.sigma_reg.clone(),
        budget: config.budget,
    };
    inst.validate()?;
    Ok((inst, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub policy: PolicyKind,
    pub seed: usize,
    pub tau: Option<usize>,
    /// Rounds until F1 first reaches the threshold.
    pub delay: Option<usize>,
    pub final_set: Vec<usize>,
    pub final_f1: Option<f64>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayPolicySummary {
    pub policy: PolicyKind,
    pub median_delay: CensoredMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub rows: usize,
    pub truth: ReplayTruth,
    pub truth_columns: Option<Vec<String>>,
    pub outcomes: Vec<ReplayOutcome>,
    pub summary: Vec<ReplayPolicySummary>,
}

pub fn run_replay(ds: &Dataset, config: &ReplayConfig) -> Result<ReplayReport> {
    if config.policies.is_empty() || config.seeds == 0 {
        return Err(Error::Config("replay needs at least one policy and one seed".into()));
    }
    let (inst, truth) = replay_instance(ds, config)?;
    let rows = inst.rows.len();
    let options = TrialOptions {
        stop: config.stop.unwrap_or(StopRule::FixedBudget { rounds: rows }),
        horizon: rows,
        diagnostics: false,
    };
    let mut outcomes = Vec::new();
    let mut summary = Vec::new();
    for &kind in &config.policies {
        let mut delays = Vec::new();
        for s in 0..config.seeds {
            let mut noise = stream_rng(config.master_seed, Stream::Noise, s as u64);
            let mut prng = stream_rng(config.master_seed, Stream::Policy, s as u64);
            let rec = run_trial(&inst, &PolicyConfig::new(kind), &options, &mut noise, &mut prng)?;
            let delay = samples_to_threshold(&rec.f1_trajectory(), config.f1_threshold, 0);
            delays.push(delay.map(|d| d as f64));
            outcomes.push(ReplayOutcome {
                policy: kind,
                seed: s,
                tau: rec.tau,
                delay,
                final_set: rec.final_set,
                final_f1: rec.final_f1,
                stop_reason: rec.stop_reason,
            });
        }
        summary.push(ReplayPolicySummary { policy: kind, median_delay: censored_median(&delays) });
    }
    Ok(ReplayReport {
        rows,
        truth_columns: truth.s_star.as_ref().map(|s| s.iter().map(|&j| ds.columns[j].clone()).collect()),
        truth,
        outcomes,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, config: &IngestConfig) -> ParsedCsv {
        read_csv(text.as_bytes(), config).unwrap()
    }

    #[test]
    fn imputation_examples() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(interpolate_linear(&t, &[Some(1.0), None, Some(3.0)]), Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(
            fill_forward_backward(&[None, Some(1.0), None, Some(0.0)]),
            Some(vec![1.0, 1.0, 1.0, 0.0])
        );
        assert_eq!(interpolate_linear(&t, &[None, None, None]), None);
        // Uneven spacing weights by time, not by row.
        let t = [0.0, 1.0, 4.0];
        assert_eq!(interpolate_linear(&t, &[Some(0.0), None, Some(8.0)]), Some(vec![0.0, 2.0, 8.0]));
        assert_eq!(interpolate_linear(&t, &[None, Some(5.0), None]), Some(vec![5.0; 3]));
    }

    #[test]
    fn classification_rules() {
        let few: Vec<Option<f64>> = (0..50).map(|i| Some((i % 3) as f64)).collect();
        let many: Vec<Option<f64>> = (0..50).map(|i| Some(i as f64)).collect();
        assert_eq!(classify_column("1_MV_001_STATUS", &many, 10), ColumnKind::Discrete);
        assert_eq!(classify_column("1_AIT_001_PV", &few, 10), ColumnKind::Continuous);
        assert_eq!(classify_column("x", &few, 10), ColumnKind::Discrete);
        assert_eq!(classify_column("x", &many, 10), ColumnKind::Continuous);
    }

    #[test]
    fn scaler_examples() {
        let s = RobustScaler::fit(&[vec![0.0, 2.0, 4.0]], 3).unwrap();
        assert_eq!((s.median[0], s.iqr[0]), (2.0, 2.0));
        let scaled: Vec<f64> = [0.0, 2.0, 4.0].iter().map(|&v| s.scale(0, v)).collect();
        assert_eq!(scaled, vec![-1.0, 0.0, 1.0]);
        let c = RobustScaler::fit(&[vec![3.0; 4]], 4).unwrap();
        assert_eq!(c.scale(0, 5.0), 2.0);
        for v in [-7.25, 0.1, 1e3] {
            assert!((s.unscale(0, s.scale(0, v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn scaler_ignores_test_rows() {
        let a = RobustScaler::fit(&[vec![1.0, 5.0, 2.0, 100.0]], 3).unwrap();
        let b = RobustScaler::fit(&[vec![1.0, 5.0, 2.0, -4.0]], 3).unwrap();
        assert_eq!(a, b);
    }

    fn table(rows: usize, value: impl Fn(usize) -> f64) -> RawTable {
        RawTable {
            timestamps: (0..rows).map(|i| i as f64).collect(),
            columns: vec![Column { name: "a".into(), kind: ColumnKind::Continuous, values: (0..rows).map(value).collect() }],
            dropped: vec![],
            labels: Some((0..rows).map(|i| i == 65).collect()),
            train_rows: rows,
            imputed_cells: 0,
        }
    }

    #[test]
    fn windowing_examples() {
        let w = window_means(&table(120, |i| i as f64), 60.0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.values, vec![vec![29.5], vec![89.5]]);
        assert_eq!(w.labels, Some(vec![false, true]));
        assert_eq!(window_means(&table(130, |_| 4.0), 60.0).unwrap().values, vec![vec![4.0]; 2]);
        assert!(window_means(&table(30, |_| 1.0), 60.0).is_err());
    }

    #[test]
    fn ridge_handles_collinear_columns() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let est = estimate_model(&rows, 1e-6).unwrap();
        assert_eq!(est.lambda, 1e-6);
        assert!(est.sigma_reg.lambda_min() > 0.0);
        assert!((est.sigma_reg.sigma()[(0, 0)] - est.sigma_hat[(0, 0)] - 1e-6).abs() < 1e-9);
        let well: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5], vec![0.3, -2.0]];
        let est = estimate_model(&well, 0.0).unwrap();
        assert_eq!(est.sigma_reg.sigma(), &est.sigma_hat);
    }

    #[test]
    fn ridge_escalates_for_rank_deficiency_at_zero() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, i as f64]).collect();
        let est = estimate_model(&rows, 0.0).unwrap();
        assert!(est.lambda >= 1e-6);
    }

    #[test]
    fn reads_metadata_date_time_and_labels() {
        let text = "source: plant\nexported 2017\n\
            Date,Time,A_PV,B_STATUS,C,label\n\
            10/9/2017,6:00:00.000 PM,1.0,,5,0\n\
            10/9/2017,6:00:01.000 PM,,1,5,0\n\
            10/9/2017,6:00:02.000 PM,3.0,0,5,1\n";
        let cfg = IngestConfig {
            skip_rows: 2,
            date_column: Some("Date".into()),
            time_column: Some("Time".into()),
            label_column: Some("label".into()),
            ..IngestConfig::default()
        };
        let p = parse(text, &cfg);
        assert_eq!(p.names, vec!["A_PV", "B_STATUS", "C"]);
        assert_eq!(p.timestamps[1] - p.timestamps[0], 1.0);
        assert_eq!(p.labels, Some(vec![false, false, true]));
        let cfg = IngestConfig { train_rows: Some(3), ..cfg };
        let t = classify_and_impute(&p, &cfg).unwrap();
        assert_eq!(t.columns[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(t.columns[1].values, vec![1.0, 1.0, 0.0]);
        assert_eq!(t.dropped, vec![DroppedColumn { name: "C".into(), reason: DropReason::ZeroVariance }]);
    }

    #[test]
    fn bad_timestamps_report_the_row() {
        let err = read_csv("t,a\n0,1\nnoon,2\n".as_bytes(), &IngestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Ingest { row: Some(3), .. }), "{err}");
        let err = read_csv("t,a\n1,1\n1,2\n".as_bytes(), &IngestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Ingest { row: Some(3), .. }));
    }

    #[test]
    fn empty_column_is_dropped_with_reason() {
        let cfg = IngestConfig::default();
        let p = parse("t,a,b\n0,1,\n1,2,NaN\n2,4,\n", &cfg);
        let t = classify_and_impute(&p, &cfg).unwrap();
        assert_eq!(t.dropped, vec![DroppedColumn { name: "b".into(), reason: DropReason::AllEmpty }]);
    }
}
