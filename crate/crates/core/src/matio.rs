//! Graph sequences, MatrixMarket persistence and experiment configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::Matrix;

/// Ordered adjacency snapshots `A_0, ..., A_T` of a graph on `n` nodes.
///
/// Construction validates the shape and the sign of every entry, so any
/// `GraphSequence` in hand has at least two square, equally sized,
/// nonnegative and finite snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSequence {
    snapshots: Vec<Matrix>,
}

impl GraphSequence {
    pub fn new(snapshots: Vec<Matrix>) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::Sequence(format!(
                "need at least 2 snapshots, got {}",
                snapshots.len()
            )));
        }
        let n = snapshots[0].nrows();
        if n == 0 {
            return Err(Error::Sequence("empty snapshots".into()));
        }
        for (t, a) in snapshots.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Sequence(format!(
                    "snapshot {t} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if let Some(v) = a.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Sequence(format!(
                    "snapshot {t} has entry {v}; entries must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { snapshots })
    }

    pub fn snapshots(&self) -> &[Matrix] {
        &self.snapshots
    }

    pub fn n(&self) -> usize {
        self.snapshots[0].nrows()
    }

    /// Number of transitions `T`; the sequence holds `T + 1` snapshots.
    pub fn horizon(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn last(&self) -> &Matrix {
        self.snapshots.last().expect("validated nonempty")
    }

    /// Keeps the last `len` snapshots.
    pub fn tail(&self, len: usize) -> Result<Self> {
        let len = len.min(self.snapshots.len());
        Self::new(self.snapshots[self.snapshots.len() - len..].to_vec())
    }

    /// Returns a copy with `A_T[i, j] = 0` for every listed position.
    pub fn with_last_masked(&self, positions: &[(usize, usize)]) -> Result<Self> {
        let mut snapshots = self.snapshots.clone();
        let last = snapshots.last_mut().expect("validated nonempty");
        for &(i, j) in positions {
            last[(i, j)] = 0.0;
        }
        Self::new(snapshots)
    }

    /// Writes `snapshot_000.mtx`, `snapshot_001.mtx`, ... into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, a) in self.snapshots.iter().enumerate() {
            write_matrix(a, &dir.join(format!("snapshot_{t:03}.mtx")))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|f| f.to_str())
                    .is_some_and(|f| f.starts_with("snapshot_") && f.ends_with(".mtx"))
            })
            .collect();
        files.sort();
        let snapshots = files.iter().map(|p| read_matrix(p)).collect::<Result<Vec<_>>>()?;
        Self::new(snapshots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Array,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Reads a MatrixMarket file (array or coordinate layout) into a dense matrix.
///
/// Coordinate entries missing from the file are zero. Array data is read in
/// column-major order, as the format prescribes.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

fn parse_matrix(text: &str, path: &Path) -> Result<Matrix> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (header_no, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err(header_no, format!("malformed header `{header}`")));
    }
    let layout = match tokens[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(err(header_no, format!("unsupported layout `{other}`"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(err(header_no, format!("unsupported field `{other}`"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(err(header_no, format!("unsupported symmetry `{other}`"))),
    };
    if layout == Layout::Array && field == Field::Pattern {
        return Err(err(header_no, "pattern field requires coordinate layout".into()));
    }

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (size_no, size_line) = data.next().ok_or_else(|| err(header_no, "missing size line".into()))?;
    let sizes = size_line
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| err(size_no, format!("non-numeric size token `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let expected = if layout == Layout::Array { 2 } else { 3 };
    if sizes.len() != expected {
        return Err(err(
            size_no,
            format!("size line needs {expected} integers, found {}", sizes.len()),
        ));
    }
    let (rows, cols) = (sizes[0], sizes[1]);
    if symmetry != Symmetry::General && rows != cols {
        return Err(err(size_no, format!("{rows}x{cols} matrix cannot be symmetric")));
    }
    let mut m = Matrix::zeros(rows, cols);

    let parse_value = |no: usize, t: &str| -> Result<f64> {
        let v = t
            .parse::<f64>()
            .map_err(|_| err(no, format!("non-numeric value `{t}`")))?;
        if !v.is_finite() {
            return Err(err(no, format!("non-finite value `{t}`")));
        }
        Ok(v)
    };

    match layout {
        Layout::Array => {
            // Column-major; symmetric variants store only the lower triangle.
            let positions: Vec<(usize, usize)> = match symmetry {
                Symmetry::General => (0..cols).flat_map(|j| (0..rows).map(move |i| (i, j))).collect(),
                Symmetry::Symmetric => (0..cols).flat_map(|j| (j..rows).map(move |i| (i, j))).collect(),
                Symmetry::SkewSymmetric => (0..cols).flat_map(|j| (j + 1..rows).map(move |i| (i, j))).collect(),
            };
            let mut count = 0;
            let mut last_no = size_no;
            for (no, line) in data {
                last_no = no;
                let mut toks = line.split_whitespace();
                let tok = toks.next().expect("nonblank");
                if toks.next().is_some() {
                    return Err(err(no, "array entry lines hold one value".into()));
                }
                let v = parse_value(no, tok)?;
                let &(i, j) = positions
                    .get(count)
                    .ok_or_else(|| err(no, format!("dimension mismatch: more than {} entries", positions.len())))?;
                place(&mut m, symmetry, i, j, v);
                count += 1;
            }
            if count != positions.len() {
                return Err(err(
                    last_no,
                    format!(
                        "dimension mismatch: expected {} entries, found {count}",
                        positions.len()
                    ),
                ));
            }
        }
        Layout::Coordinate => {
            let nnz = sizes[2];
            let mut count = 0;
            let mut last_no = size_no;
            for (no, line) in data {
                last_no = no;
                let toks: Vec<&str> = line.split_whitespace().collect();
                let want = if field == Field::Pattern { 2 } else { 3 };
                if toks.len() != want {
                    return Err(err(
                        no,
                        format!("coordinate entry needs {want} tokens, found {}", toks.len()),
                    ));
                }
                let idx = |t: &str, bound: usize| -> Result<usize> {
                    let k = t
                        .parse::<usize>()
                        .map_err(|_| err(no, format!("non-numeric index `{t}`")))?;
                    if k == 0 || k > bound {
                        return Err(err(no, format!("dimension mismatch: index {k} outside 1..={bound}")));
                    }
                    Ok(k - 1)
                };
                let i = idx(toks[0], rows)?;
                let j = idx(toks[1], cols)?;
                let v = if field == Field::Pattern {
                    1.0
                } else {
                    parse_value(no, toks[2])?
                };
                if count == nnz {
                    return Err(err(no, format!("dimension mismatch: more than {nnz} entries")));
                }
                place(&mut m, symmetry, i, j, v);
                count += 1;
            }
            if count != nnz {
                return Err(err(
                    last_no,
                    format!("dimension mismatch: expected {nnz} entries, found {count}"),
                ));
            }
        }
    }
    Ok(m)
}

fn place(m: &mut Matrix, symmetry: Symmetry, i: usize, j: usize, v: f64) {
    m[(i, j)] = v;
    if i != j {
        match symmetry {
            Symmetry::General => {}
            Symmetry::Symmetric => m[(j, i)] = v,
            Symmetry::SkewSymmetric => m[(j, i)] = -v,
        }
    }
}

/// Shortest decimal string that parses back to exactly `v`.
fn format_value(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let a = v.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Serializes `m` in MatrixMarket array layout (column-major).
pub fn matrix_to_string(m: &Matrix) -> String {
    let mut out = String::with_capacity(32 + 20 * m.len());
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    // nalgebra stores column-major, which is the array layout order
    for v in m.iter() {
        out.push_str(&format_value(*v));
        out.push('\n');
    }
    out
}

/// Writes `m` as a dense MatrixMarket array file.
pub fn write_matrix(m: &Matrix, path: &Path) -> Result<()> {
    if let Some(v) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::param("matrix", format!("non-finite entry {v}")));
    }
    fs::write(path, matrix_to_string(m)).map_err(|e| Error::io(path, e))
}

/// Writes the nonzero entries of `m` as a MatrixMarket coordinate file,
/// ordered column by column.
pub fn write_matrix_coordinate(m: &Matrix, path: &Path) -> Result<()> {
    if let Some(v) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::param("matrix", format!("non-finite entry {v}")));
    }
    let entries: Vec<(usize, usize, f64)> = (0..m.ncols())
        .flat_map(|j| (0..m.nrows()).map(move |i| (i, j)))
        .filter(|&(i, j)| m[(i, j)] != 0.0)
        .map(|(i, j)| (i, j, m[(i, j)]))
        .collect();
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(out, "{} {} {}", i + 1, j + 1, format_value(v));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Serializable penalty weights. Absolute values unless a grid says otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            gamma: 0.0,
            kappa: 0.0,
            alpha: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningPolicy {
    Fixed,
    Theorem3,
    Cv,
}

/// How CV grid values are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridUnits {
    /// Fractions of the per-method penalty level at which the fit vanishes.
    Relative,
    Absolute,
}

/// Factorial penalty grid for cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_tau")]
    pub tau: Vec<f64>,
    #[serde(default = "default_grid_gamma")]
    pub gamma: Vec<f64>,
    #[serde(default = "default_grid_kappa")]
    pub kappa: Vec<f64>,
    #[serde(default = "default_grid_units")]
    pub units: GridUnits,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            tau: default_grid_tau(),
            gamma: default_grid_gamma(),
            kappa: default_grid_kappa(),
            units: default_grid_units(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityConfig {
    #[serde(default = "default_fraction")]
    pub v0: f64,
    #[serde(default = "default_fraction")]
    pub u0: f64,
    #[serde(default = "default_fraction")]
    pub w0: f64,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            v0: default_fraction(),
            u0: default_fraction(),
            w0: default_fraction(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Step size as a multiple of `1 / L`.
    #[serde(default = "default_step_factor")]
    pub step_factor: f64,
    #[serde(default = "default_true")]
    pub enforce_nonneg: bool,
    /// Separate step sizes for `A` and `W`.
    #[serde(default = "default_true")]
    pub block_steps: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            tol: default_tol(),
            step_factor: default_step_factor(),
            enforce_nonneg: true,
            block_steps: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem3Config {
    #[serde(default = "default_confidence")]
    pub x: f64,
    /// Noise level; estimated from feature residuals when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl Default for Theorem3Config {
    fn default() -> Self {
        Self {
            x: default_confidence(),
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "T_values")]
    pub horizons: Vec<usize>,
    #[serde(rename = "rank_values")]
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub results_csv: Option<PathBuf>,
    #[serde(default)]
    pub sweep_csv: Option<PathBuf>,
    #[serde(default)]
    pub cv_csv: Option<PathBuf>,
    #[serde(default)]
    pub trace_csv: Option<PathBuf>,
}

/// Full description of a benchmark run, validated and with defaults filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n: usize,
    pub r: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sigma: f64,
    /// Soft-threshold applied to the Gaussian noise draws; defaults to `sigma`.
    #[serde(default)]
    pub noise_threshold: Option<f64>,
    #[serde(default)]
    pub sparsity: SparsityConfig,
    #[serde(default = "default_w0_norm")]
    pub w0_norm: f64,
    /// Nonnegative generator factors; with `sigma = 0` no clamping occurs.
    #[serde(default)]
    pub nonnegative_factors: bool,
    /// Rank of the SVD feature map; defaults to `r`.
    #[serde(default)]
    pub feature_rank: Option<usize>,
    #[serde(default = "Method::all")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub tuning: Option<TuningPolicy>,
    #[serde(default)]
    pub penalties: Option<PenaltyConfig>,
    #[serde(default)]
    pub theorem3: Theorem3Config,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_binarize")]
    pub binarize_threshold: f64,
    #[serde(default)]
    pub include_diagonal: bool,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_alpha() -> f64 {
    0.5
}
fn default_fraction() -> f64 {
    0.3
}
fn default_w0_norm() -> f64 {
    0.9
}
fn default_true() -> bool {
    true
}
fn default_max_iter() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-6
}
fn default_step_factor() -> f64 {
    1.9
}
fn default_confidence() -> f64 {
    3.0
}
fn default_folds() -> usize {
    10
}
fn default_runs() -> usize {
    50
}
fn default_binarize() -> f64 {
    1e-6
}
fn default_grid_tau() -> Vec<f64> {
    vec![0.01, 0.05, 0.2]
}
fn default_grid_gamma() -> Vec<f64> {
    vec![0.0, 0.05, 0.2]
}
fn default_grid_kappa() -> Vec<f64> {
    vec![0.01]
}
fn default_grid_units() -> GridUnits {
    GridUnits::Relative
}

impl ExperimentSpec {
    /// Tuning policy after defaulting: explicit penalties without a policy
    /// mean `fixed`; otherwise cross-validation.
    pub fn tuning_policy(&self) -> TuningPolicy {
        match (self.tuning, self.penalties) {
            (Some(p), _) => p,
            (None, Some(_)) => TuningPolicy::Fixed,
            (None, None) => TuningPolicy::Cv,
        }
    }

    pub fn fixed_penalties(&self) -> PenaltyConfig {
        self.penalties.unwrap_or_default()
    }

    pub fn noise_threshold(&self) -> f64 {
        self.noise_threshold.unwrap_or(self.sigma)
    }

    pub fn feature_rank(&self) -> usize {
        self.feature_rank.unwrap_or(self.r)
    }

    /// Checks every invariant; the error names the offending field path.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::Config {
                field: field.to_string(),
                reason,
            })
        };
        if self.n < 2 {
            return bad("n", format!("must be >= 2, got {}", self.n));
        }
        if self.r < 1 || self.r > self.n {
            return bad("r", format!("must satisfy 1 <= r <= n = {}, got {}", self.n, self.r));
        }
        if self.horizon < 1 {
            return bad("T", "must be >= 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", format!("must be finite and >= 0, got {}", self.sigma));
        }
        if let Some(t) = self.noise_threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("noise_threshold", format!("must be >= 0, got {t}"));
            }
        }
        for (name, f) in [
            ("sparsity.v0", self.sparsity.v0),
            ("sparsity.u0", self.sparsity.u0),
            ("sparsity.w0", self.sparsity.w0),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return bad(name, format!("must lie in (0, 1], got {f}"));
            }
        }
        if !(self.w0_norm > 0.0 && self.w0_norm.is_finite()) {
            return bad("w0_norm", format!("must be > 0, got {}", self.w0_norm));
        }
        if let Some(k) = self.feature_rank {
            if k < 1 || k > self.n {
                return bad("feature_rank", format!("must lie in 1..={}, got {k}", self.n));
            }
        }
        if self.methods.is_empty() {
            return bad("methods", "must name at least one method".into());
        }
        if let Some(p) = self.penalties {
            for (name, v) in [
                ("penalties.tau", p.tau),
                ("penalties.gamma", p.gamma),
                ("penalties.kappa", p.kappa),
            ] {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad(name, format!("must be finite and >= 0, got {v}"));
                }
            }
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                return bad("penalties.alpha", format!("must lie in (0, 1), got {}", p.alpha));
            }
        }
        if !(self.theorem3.x > 0.0) {
            return bad("theorem3.x", format!("must be > 0, got {}", self.theorem3.x));
        }
        if let Some(s) = self.theorem3.sigma {
            if !(s > 0.0) {
                return bad("theorem3.sigma", format!("must be > 0, got {s}"));
            }
        }
        for (name, axis) in [
            ("grid.tau", &self.grid.tau),
            ("grid.gamma", &self.grid.gamma),
            ("grid.kappa", &self.grid.kappa),
        ] {
            if axis.is_empty() {
                return bad(name, "must be nonempty".into());
            }
            if let Some(v) = axis.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return bad(name, format!("values must be finite and >= 0, got {v}"));
            }
        }
        if self.cv_folds < 2 {
            return bad("cv_folds", format!("must be >= 2, got {}", self.cv_folds));
        }
        if self.solver.max_iter < 1 {
            return bad("solver.max_iter", "must be >= 1".into());
        }
        if !(self.solver.tol > 0.0) {
            return bad("solver.tol", format!("must be > 0, got {}", self.solver.tol));
        }
        if !(self.solver.step_factor > 0.0) {
            return bad(
                "solver.step_factor",
                format!("must be > 0, got {}", self.solver.step_factor),
            );
        }
        if self.runs < 1 {
            return bad("runs", "must be >= 1".into());
        }
        if !(self.binarize_threshold.is_finite()) {
            return bad("binarize_threshold", "must be finite".into());
        }
        if let Some(s) = &self.sweep {
            if s.horizons.is_empty() || s.horizons.contains(&0) {
                return bad("sweep.T_values", "must be nonempty with values >= 1".into());
            }
            if s.ranks.is_empty() || s.ranks.iter().any(|&k| k < 1 || k > self.n) {
                return bad(
                    "sweep.rank_values",
                    format!("must be nonempty with values in 1..={}", self.n),
                );
            }
        }
        Ok(())
    }

    /// Parses and validates a JSON document. Unknown keys are rejected.
    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_value(value).map_err(|e| Error::Config {
            field: unknown_field_path(&e.to_string()).unwrap_or_else(|| "<root>".into()),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_json_value(value)
    }
}

fn unknown_field_path(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Reads and validates an experiment config.
pub fn parse_experiment_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentSpec::from_json_str(&text)
}

/// Applies `key.path=value` overrides to a parsed JSON document, creating
/// intermediate objects as needed. Values are read as JSON when they parse,
/// otherwise as strings.
pub fn apply_overrides(doc: &mut serde_json::Value, overrides: &[String]) -> Result<()> {
    use serde_json::Value;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| Error::Config {
            field: item.clone(),
            reason: "override must look like key.path=value".into(),
        })?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut cursor = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (k, part) in parts.iter().enumerate() {
            if part.is_empty() {
                return Err(Error::Config {
                    field: key.to_string(),
                    reason: "empty path segment".into(),
                });
            }
            let obj = match cursor {
                Value::Object(map) => map,
                Value::Null => {
                    *cursor = Value::Object(Default::default());
                    cursor.as_object_mut().expect("just set")
                }
                _ => {
                    return Err(Error::Config {
                        field: key.to_string(),
                        reason: format!("`{}` is not an object", parts[..k].join(".")),
                    })
                }
            };
            if k + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            cursor = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}
