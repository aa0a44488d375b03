//! Linear feature maps of adjacency matrices.
//!
//! Both variants produce an `m x r` feature matrix per snapshot:
//! - `OmegaList`: `ω(A) = (⟨Ω_1, A⟩, ..., ⟨Ω_d, A⟩)` as a `1 x d` row;
//! - `RightProjection`: `ω(A) = A V` with orthonormal `V` (`n x r`).
//!
//! The VAR dynamics act on the right, `ω(A_{t+1}) ≈ ω(A_t) W`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matio::{read_matrix, write_matrix, GraphSequence};
use crate::prox::Svd;
use crate::Matrix;

/// Frobenius tolerance for `VᵀV = I`.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    OmegaList { omegas: Vec<Matrix> },
    RightProjection { v: Matrix },
}

/// Observable variance terms `(v_op, v_inf)` of an Ω-list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceTerms {
    pub v_op: f64,
    pub v_inf: f64,
}

/// Per-sequence feature variance `σ_ω` and the peeling term `ℓ_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceVariance {
    pub sigma_omega: f64,
    pub ell_t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "variant", rename_all = "kebab-case")]
enum Manifest {
    OmegaList { n: usize, files: Vec<String> },
    RightProjection { n: usize, rank: usize, file: String },
}

impl FeatureMap {
    pub fn omega_list(omegas: Vec<Matrix>) -> Result<Self> {
        let first = omegas
            .first()
            .ok_or_else(|| Error::param("omegas", "need at least one Ω matrix"))?;
        let n = first.nrows();
        if n == 0 || omegas.iter().any(|o| o.nrows() != n || o.ncols() != n) {
            return Err(Error::Dimension("all Ω_j must be nonempty n x n".into()));
        }
        Ok(Self::OmegaList { omegas })
    }

    pub fn right_projection(v: Matrix) -> Result<Self> {
        let r = v.ncols();
        if r == 0 || r > v.nrows() {
            return Err(Error::Dimension(format!(
                "V must be n x r with 1 <= r <= n, got {:?}",
                v.shape()
            )));
        }
        let gram_err = (v.transpose() * &v - Matrix::identity(r, r)).norm();
        if gram_err > ORTHONORMAL_TOL {
            return Err(Error::param(
                "V",
                format!("columns are not orthonormal (‖VᵀV - I‖ = {gram_err:e})"),
            ));
        }
        Ok(Self::RightProjection { v })
    }

    /// Projection onto the top `rank` right singular vectors of `Σ_t A_t`.
    pub fn from_cumulative_svd(seq: &GraphSequence, rank: usize) -> Result<Self> {
        let cumulative = crate::baselines::cumulative(seq);
        Self::from_svd_of(&cumulative, rank)
    }

    pub fn from_svd_of(a: &Matrix, rank: usize) -> Result<Self> {
        let n = a.ncols();
        if rank == 0 || rank > n {
            return Err(Error::param("rank", format!("must lie in 1..={n}, got {rank}")));
        }
        let svd = Svd::new(a)?;
        Self::right_projection(svd.v.columns(0, rank).into_owned())
    }

    /// Node count `n` of the graphs the map accepts.
    pub fn n(&self) -> usize {
        match self {
            Self::OmegaList { omegas } => omegas[0].nrows(),
            Self::RightProjection { v } => v.nrows(),
        }
    }

    /// Rows `m` of a feature matrix.
    pub fn feature_rows(&self) -> usize {
        match self {
            Self::OmegaList { .. } => 1,
            Self::RightProjection { v } => v.nrows(),
        }
    }

    /// Columns `r` of a feature matrix; also the VAR dimension.
    pub fn feature_cols(&self) -> usize {
        match self {
            Self::OmegaList { omegas } => omegas.len(),
            Self::RightProjection { v } => v.ncols(),
        }
    }

    /// Effective feature count `m * r`.
    pub fn d_eff(&self) -> usize {
        self.feature_rows() * self.feature_cols()
    }

    fn check_input(&self, a: &Matrix) -> Result<()> {
        let n = self.n();
        if a.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "feature map expects {n}x{n}, got {:?}",
                a.shape()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, a: &Matrix) -> Result<Matrix> {
        self.check_input(a)?;
        Ok(match self {
            Self::OmegaList { omegas } => Matrix::from_fn(1, omegas.len(), |_, j| omegas[j].dot(a)),
            Self::RightProjection { v } => a * v,
        })
    }

    /// `ω*(X)`, satisfying `⟨ω(A), X⟩ = ⟨A, ω*(X)⟩`.
    pub fn adjoint(&self, x: &Matrix) -> Result<Matrix> {
        let shape = (self.feature_rows(), self.feature_cols());
        if x.shape() != shape {
            return Err(Error::Dimension(format!(
                "adjoint expects {shape:?}, got {:?}",
                x.shape()
            )));
        }
        Ok(match self {
            Self::OmegaList { omegas } => {
                let n = self.n();
                omegas
                    .iter()
                    .enumerate()
                    .fold(Matrix::zeros(n, n), |acc, (j, o)| acc + o * x[(0, j)])
            }
            Self::RightProjection { v } => x * v.transpose(),
        })
    }

    /// The equivalent Ω-list. For `A ↦ AV` the list is `e_i v_jᵀ`, ordered
    /// column-major over the `n x r` feature matrix.
    pub fn to_omegas(&self) -> Vec<Matrix> {
        match self {
            Self::OmegaList { omegas } => omegas.clone(),
            Self::RightProjection { v } => {
                let (n, r) = v.shape();
                let mut out = Vec::with_capacity(n * r);
                for j in 0..r {
                    for i in 0..n {
                        let mut o = Matrix::zeros(n, n);
                        o.row_mut(i).copy_from(&v.column(j).transpose());
                        out.push(o);
                    }
                }
                out
            }
        }
    }

    /// `v_op² = ‖(1/d)ΣΩ_jᵀΩ_j‖_op ∨ ‖(1/d)ΣΩ_jΩ_jᵀ‖_op` and
    /// `v_inf² = max_{kl} (1/d)Σ(Ω_j)_{kl}²`.
    pub fn variance_terms(&self) -> Result<VarianceTerms> {
        let omegas = self.to_omegas();
        let n = self.n();
        let d = omegas.len() as f64;
        let mut gram_left = Matrix::zeros(n, n);
        let mut gram_right = Matrix::zeros(n, n);
        let mut squares = Matrix::zeros(n, n);
        for o in &omegas {
            gram_left += o.transpose() * o;
            gram_right += o * o.transpose();
            squares += o.component_mul(o);
        }
        let op = |m: Matrix| -> Result<f64> { crate::prox::operator_norm(&(m / d)) };
        let v_op_sq = op(gram_left)?.max(op(gram_right)?);
        let v_inf_sq = squares.iter().fold(0.0f64, |acc, v| acc.max(*v)) / d;
        Ok(VarianceTerms {
            v_op: v_op_sq.sqrt(),
            v_inf: v_inf_sq.sqrt(),
        })
    }

    /// `σ_ω² = max_j S_j / (T+1)` and `ℓ_T = 2 max_j log log(S_j/(T+1) ∨ (T+1)/S_j ∨ e)`
    /// with `S_j = Σ_{t=0..T} ω_j(A_t)²` over the observed snapshots.
    ///
    /// Coordinates with `S_j = 0` are identically zero and carry no noise
    /// term, so they are left out of the `ℓ_T` maximum.
    pub fn sequence_variance(&self, seq: &GraphSequence) -> Result<SequenceVariance> {
        let count = seq.snapshots().len() as f64;
        let mut sums = Matrix::zeros(self.feature_rows(), self.feature_cols());
        for a in seq.snapshots() {
            let f = self.apply(a)?;
            sums += f.component_mul(&f);
        }
        let max_sum = sums.iter().fold(0.0f64, |acc, v| acc.max(*v));
        let ell = sums
            .iter()
            .filter(|s| **s > 0.0)
            .map(|s| {
                let ratio = (s / count).max(count / s).max(std::f64::consts::E);
                ratio.ln().ln()
            })
            .fold(0.0f64, f64::max);
        Ok(SequenceVariance {
            sigma_omega: (max_sum / count).sqrt(),
            ell_t: 2.0 * ell,
        })
    }

    /// Writes `manifest.json` plus one MatrixMarket file per Ω_j (or `V`).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = match self {
            Self::OmegaList { omegas } => {
                let files: Vec<String> = (0..omegas.len()).map(|j| format!("omega_{j:03}.mtx")).collect();
                for (o, f) in omegas.iter().zip(&files) {
                    write_matrix(o, &dir.join(f))?;
                }
                Manifest::OmegaList { n: self.n(), files }
            }
            Self::RightProjection { v } => {
                write_matrix(v, &dir.join("v.mtx"))?;
                Manifest::RightProjection {
                    n: v.nrows(),
                    rank: v.ncols(),
                    file: "v.mtx".into(),
                }
            }
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let map = match manifest {
            Manifest::OmegaList { n, files } => {
                let omegas = files
                    .iter()
                    .map(|f| read_matrix(&dir.join(f)))
                    .collect::<Result<Vec<_>>>()?;
                let map = Self::omega_list(omegas)?;
                if map.n() != n {
                    return Err(Error::Dimension(format!("manifest says n={n}, files say {}", map.n())));
                }
                map
            }
            Manifest::RightProjection { n, rank, file } => {
                let v = read_matrix(&dir.join(file))?;
                if v.shape() != (n, rank) {
                    return Err(Error::Dimension(format!(
                        "manifest says {n}x{rank}, file holds {:?}",
                        v.shape()
                    )));
                }
                Self::right_projection(v)?
            }
        };
        Ok(map)
    }
}

/// Stacked features of a sequence: `X_prev` holds `ω(A_0..A_{T-1})`,
/// `X_next` holds `ω(A_1..A_T)`, each as `T` blocks of `m` rows; `φ_T = ω(A_T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub x_prev: Matrix,
    pub x_next: Matrix,
    pub phi_t: Matrix,
}

impl FeatureStack {
    pub fn build(map: &FeatureMap, seq: &GraphSequence) -> Result<Self> {
        let feats = seq
            .snapshots()
            .iter()
            .map(|a| map.apply(a))
            .collect::<Result<Vec<_>>>()?;
        let (m, r) = (map.feature_rows(), map.feature_cols());
        let t = seq.horizon();
        let mut x_prev = Matrix::zeros(t * m, r);
        let mut x_next = Matrix::zeros(t * m, r);
        for k in 0..t {
            x_prev.rows_mut(k * m, m).copy_from(&feats[k]);
            x_next.rows_mut(k * m, m).copy_from(&feats[k + 1]);
        }
        Ok(Self {
            x_prev,
            x_next,
            phi_t: feats[t].clone(),
        })
    }
}
