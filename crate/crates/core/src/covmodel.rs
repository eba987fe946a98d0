//! Correlation pattern generators and spectral diagnostics.
//!
//! A [`CovarianceModel`] is an immutable, validated positive-definite matrix
//! together with its Cholesky factor and descending eigenvalues. Models are
//! built from a [`CorrelationSpec`] (one of the structured patterns below) or
//! from an arbitrary matrix, e.g. one estimated from data.
//!
//! | pattern          | entry `Σ_ij`                                             |
//! |------------------|----------------------------------------------------------|
//! | Toeplitz         | `ρ^|i-j|`                                                |
//! | Equicorrelation  | `1` on the diagonal, `ρ` elsewhere                       |
//! | Block            | equicorrelation inside blocks of size `M`, `0` across    |
//! | Circulant        | `ρ^min(d, K-d)` with `d = |i-j|`                         |
//! | Graph            | unit-diagonal rescaling of `(I - αA)^-1`, `α = 0.95ρ/λmax(A)` |
//! | Exponential      | `exp(-|i-j|/ℓ)`                                          |
//! | RBF              | `exp(-|i-j|²/(2ℓ²))`                                     |
//! | Kronecker        | `Σ_type ⊗ Σ_space`                                       |
//! | Identity         | `δ_ij`                                                   |

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues at or below this trigger the diagonal jitter repair.
pub const PSD_REPAIR_THRESHOLD: f64 = 1e-10;
/// Extra diagonal mass added on top of `|λ_min|` during repair.
pub const PSD_REPAIR_MARGIN: f64 = 1e-8;
/// Largest tolerated `|Σ_ij - Σ_ji|` for user supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Default Erdős–Rényi edge probability for the graph pattern.
pub const DEFAULT_EDGE_PROB: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Toeplitz,
    Equicorrelation,
    Block,
    Circulant,
    Graph,
    Exponential,
    Rbf,
    Kronecker,
    Identity,
}

impl Pattern {
    pub const ALL: [Pattern; 9] = [
        Pattern::Toeplitz,
        Pattern::Equicorrelation,
        Pattern::Block,
        Pattern::Circulant,
        Pattern::Graph,
        Pattern::Exponential,
        Pattern::Rbf,
        Pattern::Kronecker,
        Pattern::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Toeplitz => "toeplitz",
            Pattern::Equicorrelation => "equicorrelation",
            Pattern::Block => "block",
            Pattern::Circulant => "circulant",
            Pattern::Graph => "graph",
            Pattern::Exponential => "exponential",
            Pattern::Rbf => "rbf",
            Pattern::Kronecker => "kronecker",
            Pattern::Identity => "identity",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Pattern::ALL
            .iter()
            .copied()
            .find(|p| p.name() == norm || (norm == "equi" && *p == Pattern::Equicorrelation))
            .ok_or_else(|| Error::Config(format!("unknown correlation pattern `{s}`")))
    }
}

/// Structure of one Kronecker factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KronFactor {
    Toeplitz,
    Equicorrelation,
}

/// Parameters of a structured correlation pattern.
///
/// Optional fields fall back to pattern defaults: block size `K/8`, RBF
/// length scale `K/5`, exponential length scale `-1/ln ρ` (which makes the
/// exponential kernel coincide with Toeplitz), and Kronecker factors
/// `K1 × K2` with `K1` the smallest divisor of `K` that is at least `√K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    pub pattern: Pattern,
    pub k: usize,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    #[serde(default = "default_edge_prob")]
    pub edge_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
    /// `(K1, K2)`: dimension of the type factor and of the space factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kron_factors: Option<(usize, usize)>,
    #[serde(default = "default_kron_type")]
    pub kron_type: KronFactor,
    #[serde(default = "default_kron_space")]
    pub kron_space: KronFactor,
    #[serde(default)]
    pub graph_seed: u64,
    /// Accept an edgeless graph and return the identity instead of failing.
    #[serde(default)]
    pub allow_identity: bool,
}

fn default_edge_prob() -> f64 {
    DEFAULT_EDGE_PROB
}
fn default_kron_type() -> KronFactor {
    KronFactor::Equicorrelation
}
fn default_kron_space() -> KronFactor {
    KronFactor::Toeplitz
}

impl CorrelationSpec {
    pub fn new(pattern: Pattern, k: usize, rho: f64) -> Self {
        CorrelationSpec {
            pattern,
            k,
            rho,
            block_size: None,
            edge_prob: DEFAULT_EDGE_PROB,
            length_scale: None,
            kron_factors: None,
            kron_type: KronFactor::Equicorrelation,
            kron_space: KronFactor::Toeplitz,
            graph_seed: 0,
            allow_identity: false,
        }
    }

    pub fn with_block_size(mut self, m: usize) -> Self {
        self.block_size = Some(m);
        self
    }

    pub fn with_length_scale(mut self, l: f64) -> Self {
        self.length_scale = Some(l);
        self
    }

    pub fn with_kron_factors(mut self, k1: usize, k2: usize) -> Self {
        self.kron_factors = Some((k1, k2));
        self
    }

    pub fn with_graph(mut self, edge_prob: f64, seed: u64) -> Self {
        self.edge_prob = edge_prob;
        self.graph_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::validation(format!("dimension K must be >= 2, got {}", self.k)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::validation(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        match self.pattern {
            Pattern::Block => {
                let m = self.effective_block_size();
                if m == 0 || !self.k.is_multiple_of(m) {
                    return Err(Error::validation(format!(
                        "block size {m} must be positive and divide K={}",
                        self.k
                    )));
                }
            }
            Pattern::Graph => {
                if !(self.edge_prob > 0.0 && self.edge_prob < 1.0) {
                    return Err(Error::validation(format!(
                        "edge probability must lie in (0, 1), got {}",
                        self.edge_prob
                    )));
                }
            }
            Pattern::Rbf | Pattern::Exponential => {
                if let Some(l) = self.length_scale {
                    if !(l > 0.0 && l.is_finite()) {
                        return Err(Error::validation(format!(
                            "length scale must be positive, got {l}"
                        )));
                    }
                }
            }
            Pattern::Kronecker => {
                let (k1, k2) = self.effective_kron_factors();
                if k1 == 0 || k2 == 0 || k1 * k2 != self.k {
                    return Err(Error::validation(format!(
                        "Kronecker factors {k1}x{k2} must multiply to K={}",
                        self.k
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn effective_block_size(&self) -> usize {
        self.block_size.unwrap_or_else(|| (self.k / 8).max(1))
    }

    pub fn effective_length_scale(&self) -> f64 {
        match (self.length_scale, self.pattern) {
            (Some(l), _) => l,
            (None, Pattern::Exponential) => {
                if self.rho > 0.0 {
                    -1.0 / self.rho.ln()
                } else {
                    0.0
                }
            }
            (None, _) => self.k as f64 / 5.0,
        }
    }

    pub fn effective_kron_factors(&self) -> (usize, usize) {
        self.kron_factors.unwrap_or_else(|| default_kron_split(self.k))
    }
}

/// `(K1, K2)` with `K1` the smallest divisor of `k` that is `>= √k`.
pub fn default_kron_split(k: usize) -> (usize, usize) {
    let root = (k as f64).sqrt();
    let k1 = (1..=k)
        .find(|d| k.is_multiple_of(*d) && (*d as f64) >= root - 1e-9)
        .unwrap_or(k);
    (k1, k / k1)
}

/// Validated positive-definite covariance with cached factorization.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    jitter_applied: f64,
}

impl CovarianceModel {
    /// Validate an arbitrary covariance matrix without repairing it.
    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        let sigma = symmetrized(sigma)?;
        Self::finish(sigma, 0.0)
    }

    /// Validate a matrix, repairing near-singular or indefinite input by a
    /// diagonal jitter followed by unit-diagonal rescaling.
    pub fn from_correlation_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        let sigma = symmetrized(sigma)?;
        let eigs = sorted_eigenvalues(&sigma)?;
        let lambda_min = *eigs.last().expect("non-empty");
        if lambda_min > PSD_REPAIR_THRESHOLD {
            return Self::finish_with_eigs(sigma, eigs, 0.0);
        }
        let jitter = lambda_min.abs() + PSD_REPAIR_MARGIN;
        let k = sigma.nrows();
        let mut repaired = sigma + DMatrix::identity(k, k) * jitter;
        let scale: Vec<f64> = (0..k).map(|i| repaired[(i, i)].sqrt()).collect();
        for i in 0..k {
            for j in 0..k {
                repaired[(i, j)] /= scale[i] * scale[j];
            }
        }
        log::debug!("applied PSD repair jitter {jitter:e} (lambda_min={lambda_min:e})");
        Self::finish(repaired, jitter)
    }

    fn finish(sigma: DMatrix<f64>, jitter: f64) -> Result<Self> {
        let eigs = sorted_eigenvalues(&sigma)?;
        Self::finish_with_eigs(sigma, eigs, jitter)
    }

    fn finish_with_eigs(sigma: DMatrix<f64>, eigenvalues: Vec<f64>, jitter: f64) -> Result<Self> {
        let lambda_min = *eigenvalues.last().expect("non-empty");
        if lambda_min <= 0.0 {
            return Err(Error::Numeric(format!(
                "matrix is not positive definite (lambda_min = {lambda_min:e})"
            )));
        }
        let chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::Factorization("Cholesky factorization failed".into()))?;
        let lower = chol.l();
        Ok(CovarianceModel { sigma, chol, lower, eigenvalues, jitter_applied: jitter })
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::from_matrix(DMatrix::identity(k, k))
    }

    pub fn k(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Lower-triangular `L` with `Σ = L Lᵀ`.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty")
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.sigma[(i, i)]).collect()
    }

    /// The diagonal approximation `diag(Σ)` as a model of its own.
    pub fn diagonal_model(&self) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(self.diag())))
    }

    /// `cᵀ Σ c`, visiting only the support of `c`.
    pub fn quad_form(&self, c: &[f64]) -> f64 {
        let support: Vec<usize> = (0..c.len()).filter(|&i| c[i] != 0.0).collect();
        let mut acc = 0.0;
        for &a in &support {
            let mut row = 0.0;
            for &b in &support {
                row += self.sigma[(a, b)] * c[b];
            }
            acc += c[a] * row;
        }
        acc
    }

    /// `Σ c`.
    pub fn mul_vec(&self, c: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut out = vec![0.0; k];
        for (j, &cj) in c.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.sigma[(i, j)] * cj;
            }
        }
        out
    }

    /// `Σ⁻¹ b` through the cached factor.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.chol.solve(&DVector::from_column_slice(b));
        x.iter().copied().collect()
    }

    /// `Lᵀ c`, the linear map that turns standard-normal draws into the
    /// projected noise `cᵀ L z`.
    pub fn lower_transpose_mul(&self, c: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut w = vec![0.0; k];
        for (i, &ci) in c.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            for (j, wj) in w.iter_mut().enumerate().take(i + 1) {
                *wj += self.lower[(i, j)] * ci;
            }
        }
        w
    }

    /// Row-major, header-free CSV.
    pub fn to_csv_string(&self) -> String {
        matrix_to_csv(&self.sigma)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        Self::from_matrix(matrix_from_csv(s)?)
    }

    /// `{"k": K, "sigma": [[...], ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MatrixJson::from(&self.sigma)).expect("matrix serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: MatrixJson = serde_json::from_str(s)?;
        Self::from_matrix(parsed.into_matrix()?)
    }
}

/// Wire form of a covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub k: usize,
    pub sigma: Vec<Vec<f64>>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixJson {
            k: m.nrows(),
            sigma: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
        }
    }
}

impl MatrixJson {
    pub fn into_matrix(self) -> Result<DMatrix<f64>> {
        if self.sigma.len() != self.k || self.sigma.iter().any(|r| r.len() != self.k) {
            return Err(Error::validation(format!("sigma must be a {0}x{0} matrix", self.k)));
        }
        Ok(DMatrix::from_fn(self.k, self.k, |i, j| self.sigma[i][j]))
    }
}

pub(crate) fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn matrix_from_csv(s: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("row {i}: cannot parse `{v}`: {e}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let k = rows.len();
    if k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(Error::Data("covariance CSV must hold a square matrix".into()));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn symmetrized(sigma: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma.nrows();
    if k == 0 || sigma.ncols() != k {
        return Err(Error::validation("covariance must be a non-empty square matrix"));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("covariance has non-finite entries".into()));
    }
    let mut max_asym: f64 = 0.0;
    for i in 0..k {
        for j in 0..i {
            max_asym = max_asym.max((sigma[(i, j)] - sigma[(j, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::validation(format!(
            "covariance is not symmetric (max asymmetry {max_asym:e})"
        )));
    }
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Symmetric eigenvalues, descending; ties keep their original order.
fn sorted_eigenvalues(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut eigs: Vec<f64> = sigma.clone().symmetric_eigenvalues().iter().copied().collect();
    if eigs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue".into()));
    }
    eigs.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    Ok(eigs)
}

fn toeplitz(k: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| rho.powi(i.abs_diff(j) as i32))
}

fn equicorrelation(k: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho })
}

fn kron_factor(kind: KronFactor, k: usize, rho: f64) -> DMatrix<f64> {
    match kind {
        KronFactor::Toeplitz => toeplitz(k, rho),
        KronFactor::Equicorrelation => equicorrelation(k, rho),
    }
}

fn graph_correlation(spec: &CorrelationSpec) -> Result<Option<DMatrix<f64>>> {
    let k = spec.k;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.graph_seed);
    let mut adj = DMatrix::<f64>::zeros(k, k);
    let mut edges = 0usize;
    for i in 0..k {
        for j in (i + 1)..k {
            if rng.random::<f64>() < spec.edge_prob {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
                edges += 1;
            }
        }
    }
    if edges == 0 {
        return if spec.allow_identity {
            Ok(None)
        } else {
            Err(Error::DegenerateGraph { k, edge_prob: spec.edge_prob })
        };
    }
    let spectral_radius = adj
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let alpha = 0.95 * spec.rho / spectral_radius;
    let precision = DMatrix::identity(k, k) - adj * alpha;
    let inv = Cholesky::new(precision)
        .ok_or_else(|| Error::Factorization("graph precision matrix is not PD".into()))?
        .inverse();
    let d: Vec<f64> = (0..k).map(|i| inv[(i, i)].sqrt()).collect();
    Ok(Some(DMatrix::from_fn(k, k, |i, j| inv[(i, j)] / (d[i] * d[j]))))
}

/// Build the raw (unrepaired) matrix for a pattern.
pub fn raw_correlation(spec: &CorrelationSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let k = spec.k;
    let rho = spec.rho;
    let m = match spec.pattern {
        Pattern::Identity => DMatrix::identity(k, k),
        Pattern::Toeplitz => toeplitz(k, rho),
        Pattern::Equicorrelation => equicorrelation(k, rho),
        Pattern::Block => {
            let bs = spec.effective_block_size();
            DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    1.0
                } else if i / bs == j / bs {
                    rho
                } else {
                    0.0
                }
            })
        }
        Pattern::Circulant => DMatrix::from_fn(k, k, |i, j| {
            let d = i.abs_diff(j);
            rho.powi(d.min(k - d) as i32)
        }),
        Pattern::Exponential => {
            let l = spec.effective_length_scale();
            if l == 0.0 {
                DMatrix::identity(k, k)
            } else {
                DMatrix::from_fn(k, k, |i, j| (-(i.abs_diff(j) as f64) / l).exp())
            }
        }
        Pattern::Rbf => {
            let l = spec.effective_length_scale();
            DMatrix::from_fn(k, k, |i, j| {
                let d = i.abs_diff(j) as f64;
                (-d * d / (2.0 * l * l)).exp()
            })
        }
        Pattern::Kronecker => {
            let (k1, k2) = spec.effective_kron_factors();
            kron_factor(spec.kron_type, k1, rho).kronecker(&kron_factor(spec.kron_space, k2, rho))
        }
        Pattern::Graph => graph_correlation(spec)?.unwrap_or_else(|| DMatrix::identity(k, k)),
    };
    Ok(m)
}

/// Generate and validate a correlation pattern.
pub fn generate_correlation(spec: &CorrelationSpec) -> Result<CovarianceModel> {
    CovarianceModel::from_correlation_matrix(raw_correlation(spec)?)
}

/// `(1-w) I + w uuᵀ` with a random sign vector `u`: unit diagonal, moving
/// from full rank (`w = 0`) to rank one (`w → 1`).
pub fn spectral_mixing(k: usize, weight: f64, sign_seed: u64) -> Result<CovarianceModel> {
    if k < 2 {
        return Err(Error::validation("dimension K must be >= 2"));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::validation(format!("mixing weight must lie in [0, 1], got {weight}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sign_seed);
    let u: Vec<f64> = (0..k).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let m = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            weight * u[i] * u[j]
        }
    });
    CovarianceModel::from_correlation_matrix(m)
}

/// Effective-rank summary of a covariance spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub shannon_er: f64,
    pub pr_er: f64,
    pub normalized_er: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn spectrum(model: &CovarianceModel) -> Result<SpectrumReport> {
    spectrum_of(model.eigenvalues())
}

/// Shannon (`exp` of eigenvalue entropy) and participation-ratio effective
/// ranks of a non-negative spectrum.
pub fn spectrum_of(eigenvalues: &[f64]) -> Result<SpectrumReport> {
    if eigenvalues.is_empty() {
        return Err(Error::Numeric("empty spectrum".into()));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue in spectrum".into()));
    }
    let clipped: Vec<f64> = eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let trace: f64 = clipped.iter().sum();
    if trace <= 0.0 {
        return Err(Error::Numeric("spectrum has zero trace".into()));
    }
    let entropy: f64 = clipped
        .iter()
        .map(|l| l / trace)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    let sum_sq: f64 = clipped.iter().map(|l| l * l).sum();
    let shannon_er = entropy.exp();
    let k = eigenvalues.len() as f64;
    Ok(SpectrumReport {
        shannon_er,
        pr_er: trace * trace / sum_sq,
        normalized_er: shannon_er / k,
        lambda_min: eigenvalues.iter().copied().fold(f64::INFINITY, f64::min),
        lambda_max: eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// `Σ + αI` with a freshly computed spectrum. No diagonal renormalization.
pub fn regularize(model: &CovarianceModel, alpha: f64) -> Result<CovarianceModel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::validation(format!("regularization alpha must be >= 0, got {alpha}")));
    }
    let k = model.k();
    let shifted = model.sigma() + DMatrix::identity(k, k) * alpha;
    let mut out = CovarianceModel::from_matrix(shifted)?;
    out.jitter_applied = model.jitter_applied;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn toeplitz_three_by_three() {
        let m = generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 3, 0.5)).unwrap();
        let expected = [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.sigma()[(i, j)], expected[i][j]);
            }
        }
        assert_eq!(m.jitter_applied(), 0.0);
    }

    #[test]
    fn equicorrelation_rho_zero_is_identity() {
        let m = generate_correlation(&CorrelationSpec::new(Pattern::Equicorrelation, 2, 0.0))
            .unwrap();
        assert_eq!(m.sigma(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn exponential_matches_toeplitz_under_length_scale_map() {
        let rho: f64 = 0.8;
        let t = generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 128, rho)).unwrap();
        let e = generate_correlation(
            &CorrelationSpec::new(Pattern::Exponential, 128, rho).with_length_scale(-1.0 / rho.ln()),
        )
        .unwrap();
        let max_diff = (t.sigma() - e.sigma()).abs().max();
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn spectrum_of_identity_is_full_rank() {
        let r = spectrum(&CovarianceModel::identity(7).unwrap()).unwrap();
        assert_abs_diff_eq!(r.shannon_er, 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.pr_er, 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.normalized_er, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn equicorrelation_closed_form_spectrum() {
        // eigenvalues 2.5, 0.5, 0.5, 0.5
        let m = generate_correlation(&CorrelationSpec::new(Pattern::Equicorrelation, 4, 0.5))
            .unwrap();
        let r = spectrum(&m).unwrap();
        let p: [f64; 2] = [2.5 / 4.0, 0.5 / 4.0];
        let h: f64 = -(p[0] * p[0].ln() + 3.0 * p[1] * p[1].ln());
        assert_abs_diff_eq!(r.shannon_er, h.exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(r.shannon_er, 2.92573, epsilon = 1e-5);
        assert_abs_diff_eq!(r.pr_er, 16.0 / 7.0, epsilon = 1e-10);
    }

    #[test]
    fn rank_one_limit_needs_jitter() {
        let m = generate_correlation(&CorrelationSpec::new(
            Pattern::Equicorrelation,
            8,
            1.0 - 1e-13,
        ))
        .unwrap();
        assert!(m.jitter_applied() > 0.0);
        assert!(m.lambda_min() > 0.0);
        let r = spectrum(&m).unwrap();
        assert!(r.shannon_er > 1.0 && r.shannon_er < 1.0 + 1e-5, "{}", r.shannon_er);
        assert!(r.pr_er > 1.0 && r.pr_er < 1.0 + 1e-5);
        for i in 0..8 {
            assert_abs_diff_eq!(m.sigma()[(i, i)], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn regularize_shifts_spectrum() {
        let m = generate_correlation(&CorrelationSpec::new(Pattern::Equicorrelation, 4, 0.5))
            .unwrap();
        let same = regularize(&m, 0.0).unwrap();
        assert_eq!(same.eigenvalues(), m.eigenvalues());
        let r = spectrum(&regularize(&m, 1.0).unwrap()).unwrap();
        // eigenvalues 3.5, 1.5, 1.5, 1.5
        let p: [f64; 2] = [3.5 / 8.0, 1.5 / 8.0];
        let h: f64 = -(p[0] * p[0].ln() + 3.0 * p[1] * p[1].ln());
        assert_abs_diff_eq!(r.shannon_er, h.exp(), epsilon = 1e-10);
        assert!(r.shannon_er > 3.68 && r.shannon_er < 3.69);
        assert!(regularize(&m, -0.1).is_err());
        let id = spectrum(&regularize(&CovarianceModel::identity(5).unwrap(), 3.0).unwrap())
            .unwrap();
        assert_abs_diff_eq!(id.shannon_er, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn parameter_violations_are_rejected() {
        assert!(generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 1, 0.5)).is_err());
        assert!(generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 4, 1.0)).is_err());
        assert!(generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 4, -0.1)).is_err());
        assert!(generate_correlation(
            &CorrelationSpec::new(Pattern::Block, 10, 0.5).with_block_size(3)
        )
        .is_err());
        assert!(generate_correlation(
            &CorrelationSpec::new(Pattern::Kronecker, 12, 0.5).with_kron_factors(3, 5)
        )
        .is_err());
        assert!(generate_correlation(
            &CorrelationSpec::new(Pattern::Rbf, 12, 0.5).with_length_scale(0.0)
        )
        .is_err());
    }

    #[test]
    fn empty_graph_is_degenerate_unless_allowed() {
        let mut spec = CorrelationSpec::new(Pattern::Graph, 3, 0.5).with_graph(1e-9, 1);
        let err = generate_correlation(&spec).unwrap_err();
        assert!(matches!(err, Error::DegenerateGraph { .. }));
        spec.allow_identity = true;
        let m = generate_correlation(&spec).unwrap();
        assert_eq!(m.sigma(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn graph_has_unit_diagonal_and_is_reproducible() {
        let spec = CorrelationSpec::new(Pattern::Graph, 64, 0.8).with_graph(0.1, 42);
        let a = generate_correlation(&spec).unwrap();
        let b = generate_correlation(&spec).unwrap();
        assert_eq!(a.sigma(), b.sigma());
        for i in 0..64 {
            assert_abs_diff_eq!(a.sigma()[(i, i)], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn kronecker_default_split() {
        assert_eq!(default_kron_split(128), (16, 8));
        assert_eq!(default_kron_split(64), (8, 8));
        assert_eq!(default_kron_split(12), (4, 3));
        assert_eq!(default_kron_split(7), (7, 1));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let m = generate_correlation(&CorrelationSpec::new(Pattern::Circulant, 6, 0.7)).unwrap();
        let from_csv = CovarianceModel::from_csv_str(&m.to_csv_string()).unwrap();
        assert_eq!(from_csv.sigma(), m.sigma());
        let from_json = CovarianceModel::from_json_str(&m.to_json().to_string()).unwrap();
        assert_eq!(from_json.sigma(), m.sigma());
        assert_eq!(m.to_json()["k"], 6);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut s = DMatrix::<f64>::identity(3, 3);
        s[(0, 1)] = 0.1;
        assert!(CovarianceModel::from_matrix(s).is_err());
    }

    #[test]
    fn sparse_helpers_match_dense_algebra() {
        let m = generate_correlation(&CorrelationSpec::new(Pattern::Toeplitz, 5, 0.6)).unwrap();
        let c = [0.3, 0.0, -1.2, 0.0, 0.5];
        let cv = DVector::from_column_slice(&c);
        let dense = (cv.transpose() * m.sigma() * &cv)[(0, 0)];
        assert_abs_diff_eq!(m.quad_form(&c), dense, epsilon = 1e-12);
        let w = m.lower_transpose_mul(&c);
        let wv = m.cholesky_lower().transpose() * &cv;
        for i in 0..5 {
            assert_abs_diff_eq!(w[i], wv[i], epsilon = 1e-12);
        }
        let x = m.solve(&m.mul_vec(&c));
        for i in 0..5 {
            assert_abs_diff_eq!(x[i], c[i], epsilon = 1e-10);
        }
    }
}
