//! Synthetic graph sequences whose linear features follow a VAR(1) model.
//!
//! ```text
//! U_t = U_{t-1} W₀ + N_t
//! A_t = U_t V₀ᵀ + M_t
//! ```
//!
//! with sparse `V₀, U₀, W₀` and soft-thresholded Gaussian noise `N_t, M_t`.
//! `ω(A) = A V₀^{†ᵀ}` then satisfies `ω(A_t) = ω(A_{t-1}) W₀ + noise`.
//! Observed snapshots are clamped at zero; the raw matrices are kept in the
//! truth record.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matio::{read_matrix, write_matrix, ExperimentSpec, GraphSequence};
use crate::prox::{operator_norm, Svd};
use crate::rng::{stream, Purpose};
use crate::Matrix;

const MAX_REDRAWS: usize = 1000;
/// `W₀` is redrawn until its spectral radius reaches this fraction of its
/// norm, so the dynamics do not die out.
pub const MIN_SPECTRAL_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub n: usize,
    pub r: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sigma: f64,
    pub noise_threshold: f64,
    pub density_v0: f64,
    pub density_u0: f64,
    pub density_w0: f64,
    /// Spectral norm `W₀` is rescaled to.
    pub w0_norm: f64,
    /// Draw `V₀`, `U₀`, `W₀` entries from `[0, 1]` instead of `[-1, 1]`.
    #[serde(default)]
    pub nonnegative_factors: bool,
    pub seed: u64,
}

impl GeneratorParams {
    pub fn new(n: usize, r: usize, horizon: usize, sigma: f64, seed: u64) -> Result<Self> {
        let p = Self {
            n,
            r,
            horizon,
            sigma,
            noise_threshold: sigma,
            density_v0: 0.3,
            density_u0: 0.3,
            density_w0: 0.3,
            w0_norm: 0.9,
            nonnegative_factors: false,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_spec(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let p = Self {
            n: spec.n,
            r: spec.r,
            horizon: spec.horizon,
            sigma: spec.sigma,
            noise_threshold: spec.noise_threshold(),
            density_v0: spec.sparsity.v0,
            density_u0: spec.sparsity.u0,
            density_w0: spec.sparsity.w0,
            w0_norm: spec.w0_norm,
            nonnegative_factors: spec.nonnegative_factors,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 || self.r > self.n {
            return Err(Error::param(
                "r",
                format!("need 1 <= r <= n = {}, got {}", self.n, self.r),
            ));
        }
        if self.horizon < 1 {
            return Err(Error::param("T", "must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if !(self.noise_threshold >= 0.0 && self.noise_threshold.is_finite()) {
            return Err(Error::param("noise_threshold", "must be >= 0"));
        }
        for (name, f) in [
            ("density_v0", self.density_v0),
            ("density_u0", self.density_u0),
            ("density_w0", self.density_w0),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1], got {f}")));
            }
        }
        if !(self.w0_norm > 0.0 && self.w0_norm.is_finite()) {
            return Err(Error::param("w0_norm", "must be > 0"));
        }
        Ok(())
    }
}

/// Hidden quantities behind a synthetic sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// Clamped `A_{T+1}`, the prediction target.
    pub a_next: Matrix,
    pub w0: Matrix,
    pub v0: Matrix,
    /// `U_0, ..., U_{T+1}`.
    pub u: Vec<Matrix>,
    /// Unclamped `A_0, ..., A_{T+1}`.
    pub raw: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub sequence: GraphSequence,
    pub truth: SyntheticTruth,
    pub params: GeneratorParams,
    /// Fraction of entries of `A_0..A_{T+1}` raised to zero by clamping.
    pub clamped_fraction: f64,
}

/// Entries `sign(g) (|g| - threshold)₊` with `g ~ N(0, σ²)` i.i.d.
pub fn sparse_noise<R: Rng + ?Sized>(rows: usize, cols: usize, sigma: f64, threshold: f64, rng: &mut R) -> Matrix {
    if sigma == 0.0 {
        return Matrix::zeros(rows, cols);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    Matrix::from_fn(rows, cols, |_, _| {
        let g: f64 = normal.sample(rng);
        let m = g.abs() - threshold;
        if m > 0.0 {
            m.copysign(g)
        } else {
            0.0
        }
    })
}

/// Bernoulli(`density`) mask times Uniform[-1, 1] values.
fn sparse_factor<R: Rng + ?Sized>(rows: usize, cols: usize, density: f64, nonneg: bool, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let keep = rng.random_bool(density);
        let value: f64 = rng.random_range(-1.0..=1.0);
        if keep {
            if nonneg {
                value.abs()
            } else {
                value
            }
        } else {
            0.0
        }
    })
}

/// `(V₀ᵀ)^†`, the `n x r` matrix with `V₀ᵀ (V₀ᵀ)^† = I_r`.
pub fn pinv_transpose(v0: &Matrix) -> Result<Matrix> {
    let svd = Svd::new(v0)?;
    let mut u = svd.u.clone();
    for (j, s) in svd.singular_values.iter().enumerate() {
        if *s <= 0.0 {
            return Err(Error::param("V0", "rank deficient"));
        }
        u.column_mut(j).scale_mut(1.0 / s);
    }
    Ok(u * svd.v.transpose())
}

pub fn generate(params: &GeneratorParams) -> Result<SyntheticDataset> {
    params.validate()?;
    let GeneratorParams { n, r, horizon, .. } = *params;
    let mut rng = stream(params.seed, Purpose::Generator);

    let v0 = draw_until(&mut rng, |rng| {
        let v = sparse_factor(n, r, params.density_v0, params.nonnegative_factors, rng);
        let svd = Svd::new(&v).ok()?;
        let top = svd.singular_values[0];
        (svd.singular_values[r - 1] > 1e-8 * top.max(1e-300)).then_some(v)
    })?;
    let w0 = draw_until(&mut rng, |rng| {
        let w = sparse_factor(r, r, params.density_w0, params.nonnegative_factors, rng);
        let norm = operator_norm(&w).ok()?;
        let radius = w.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
        (norm > 0.0 && radius >= MIN_SPECTRAL_FRACTION * norm).then(|| w * (params.w0_norm / norm))
    })?;
    let u0 = draw_until(&mut rng, |rng| {
        let u = sparse_factor(n, r, params.density_u0, params.nonnegative_factors, rng);
        (u.iter().any(|v| *v != 0.0)).then_some(u)
    })?;

    let mut u = vec![u0];
    let mut raw = Vec::with_capacity(horizon + 2);
    let vt = v0.transpose();
    raw.push(&u[0] * &vt + sparse_noise(n, n, params.sigma, params.noise_threshold, &mut rng));
    for t in 1..=horizon + 1 {
        let next = &u[t - 1] * &w0 + sparse_noise(n, r, params.sigma, params.noise_threshold, &mut rng);
        raw.push(&next * &vt + sparse_noise(n, n, params.sigma, params.noise_threshold, &mut rng));
        u.push(next);
    }

    let negatives: usize = raw.iter().map(|a| a.iter().filter(|v| **v < 0.0).count()).sum();
    let clamped_fraction = negatives as f64 / (raw.len() * n * n) as f64;
    let mut clamped: Vec<Matrix> = raw.iter().map(|a| a.map(|v| v.max(0.0))).collect();
    let a_next = clamped.pop().expect("T + 2 snapshots");
    let sequence = GraphSequence::new(clamped)?;

    Ok(SyntheticDataset {
        sequence,
        truth: SyntheticTruth { a_next, w0, v0, u, raw },
        params: *params,
        clamped_fraction,
    })
}

fn draw_until<R: Rng, T>(rng: &mut R, mut draw: impl FnMut(&mut R) -> Option<T>) -> Result<T> {
    for _ in 0..MAX_REDRAWS {
        if let Some(x) = draw(rng) {
            return Ok(x);
        }
    }
    Err(Error::param(
        "density",
        format!("no admissible factor after {MAX_REDRAWS} draws"),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsEcho {
    params: GeneratorParams,
    clamped_fraction: f64,
}

impl SyntheticDataset {
    /// Layout: `snapshot_XXX.mtx` for the observed sequence, `truth/` with
    /// `a_next.mtx`, `w0.mtx`, `v0.mtx`, `u_XXX.mtx` and `raw_XXX.mtx`, and
    /// `params.json` echoing the generator parameters.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.sequence.write_dir(dir)?;
        let truth = dir.join("truth");
        fs::create_dir_all(&truth).map_err(|e| Error::io(&truth, e))?;
        write_matrix(&self.truth.a_next, &truth.join("a_next.mtx"))?;
        write_matrix(&self.truth.w0, &truth.join("w0.mtx"))?;
        write_matrix(&self.truth.v0, &truth.join("v0.mtx"))?;
        for (t, m) in self.truth.u.iter().enumerate() {
            write_matrix(m, &truth.join(format!("u_{t:03}.mtx")))?;
        }
        for (t, m) in self.truth.raw.iter().enumerate() {
            write_matrix(m, &truth.join(format!("raw_{t:03}.mtx")))?;
        }
        let echo = ParamsEcho {
            params: self.params,
            clamped_fraction: self.clamped_fraction,
        };
        let path = dir.join("params.json");
        fs::write(&path, serde_json::to_string_pretty(&echo)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let sequence = GraphSequence::read_dir(dir)?;
        let path = dir.join("params.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let echo: ParamsEcho = serde_json::from_str(&text)?;
        let truth_dir = dir.join("truth");
        let steps = sequence.horizon() + 2;
        let series = |prefix: &str| -> Result<Vec<Matrix>> {
            (0..steps)
                .map(|t| read_matrix(&truth_dir.join(format!("{prefix}_{t:03}.mtx"))))
                .collect()
        };
        Ok(Self {
            truth: SyntheticTruth {
                a_next: read_matrix(&truth_dir.join("a_next.mtx"))?,
                w0: read_matrix(&truth_dir.join("w0.mtx"))?,
                v0: read_matrix(&truth_dir.join("v0.mtx"))?,
                u: series("u")?,
                raw: series("raw")?,
            },
            sequence,
            params: echo.params,
            clamped_fraction: echo.clamped_fraction,
        })
    }
}
