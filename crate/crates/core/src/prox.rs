//! Proximal operators and SVD utilities.

use crate::error::{Error, Result};
use crate::Matrix;

/// `(eps, max sweeps)` tried in order until nalgebra's SVD converges.
const SVD_ATTEMPTS: [(f64, usize); 3] = [(f64::EPSILON, 10_000), (1e-14, 100_000), (1e-12, 1_000_000)];

/// Relative cutoff below which singular values count as zero for projectors.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Thin SVD `Z = U diag(s) Vᵀ` with descending singular values and a fixed
/// sign convention: the largest-magnitude entry of each column of `U` (first
/// one on ties) is nonnegative, and `V` is flipped to match.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn new(z: &Matrix) -> Result<Self> {
        let (rows, cols) = z.shape();
        let k = rows.min(cols);
        if k == 0 {
            return Ok(Self {
                u: Matrix::zeros(rows, 0),
                singular_values: Vec::new(),
                v: Matrix::zeros(cols, 0),
            });
        }
        // nalgebra occasionally stalls at machine precision; loosen and retry
        let svd = SVD_ATTEMPTS
            .iter()
            .find_map(|&(eps, sweeps)| z.clone().try_svd(true, true, eps, sweeps))
            .ok_or(Error::SvdFailed { rows, cols })?;
        let u_raw = svd.u.ok_or(Error::SvdFailed { rows, cols })?;
        let vt_raw = svd.v_t.ok_or(Error::SvdFailed { rows, cols })?;

        let mut order: Vec<usize> = (0..k).collect();
        // stable: equal singular values keep the solver's order
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let mut u = Matrix::zeros(rows, k);
        let mut v = Matrix::zeros(cols, k);
        let mut singular_values = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            let mut ucol = u_raw.column(src).clone_owned();
            let mut vcol = vt_raw.row(src).transpose();
            let mut pivot = 0;
            for i in 1..rows {
                if ucol[i].abs() > ucol[pivot].abs() {
                    pivot = i;
                }
            }
            if ucol[pivot] < 0.0 {
                ucol.neg_mut();
                vcol.neg_mut();
            }
            u.set_column(dst, &ucol);
            v.set_column(dst, &vcol);
            singular_values.push(svd.singular_values[src].max(0.0));
        }
        Ok(Self { u, singular_values, v })
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Number of singular values above `RANK_CUTOFF * max`.
    pub fn numerical_rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .take_while(|s| **s > RANK_CUTOFF * top)
            .count()
    }
}

/// Singular values in descending order.
pub fn singular_values(z: &Matrix) -> Result<Vec<f64>> {
    let (rows, cols) = z.shape();
    if rows.min(cols) == 0 {
        return Ok(Vec::new());
    }
    let svd = SVD_ATTEMPTS
        .iter()
        .find_map(|&(eps, sweeps)| z.clone().try_svd(false, false, eps, sweeps))
        .ok_or(Error::SvdFailed { rows, cols })?;
    let mut s: Vec<f64> = svd.singular_values.iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn nuclear_norm(z: &Matrix) -> Result<f64> {
    Ok(singular_values(z)?.iter().sum())
}

pub fn operator_norm(z: &Matrix) -> Result<f64> {
    Ok(singular_values(z)?.first().copied().unwrap_or(0.0))
}

pub fn l1_norm(z: &Matrix) -> f64 {
    z.iter().map(|v| v.abs()).sum()
}

fn check_threshold(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("must be finite and >= 0, got {lambda}")))
    }
}

fn soft(z: f64, lambda: f64) -> f64 {
    let m = z.abs() - lambda;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

/// Entrywise soft thresholding `sign(z) (|z| - λ)₊`, the prox of `λ‖·‖₁`.
pub fn prox_l1(z: &Matrix, lambda: f64) -> Result<Matrix> {
    check_threshold(lambda)?;
    Ok(z.map(|v| soft(v, lambda)))
}

/// Singular value shrinkage `U diag((s - λ)₊) Vᵀ`, the prox of `λ‖·‖_*`.
pub fn prox_trace(z: &Matrix, lambda: f64) -> Result<Matrix> {
    check_threshold(lambda)?;
    if lambda == 0.0 {
        return Ok(z.clone());
    }
    let mut svd = Svd::new(z)?;
    for s in svd.singular_values.iter_mut() {
        *s = (*s - lambda).max(0.0);
    }
    Ok(svd.reconstruct())
}

/// Euclidean projection onto the nonnegative orthant.
pub fn project_nonneg(z: &Matrix) -> Matrix {
    z.map(|v| v.max(0.0))
}

/// Decomposition of `B` along the row and column spaces of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub parallel: Matrix,
    pub orthogonal: Matrix,
}

/// `P_A(B) = P_U B + B P_V - P_U B P_V` and `P_A^⊥(B) = (I - P_U) B (I - P_V)`
/// with `U`, `V` spanning the numerical column and row spaces of `A`.
pub fn subspace_projectors(a: &Matrix, b: &Matrix) -> Result<Projected> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "A is {:?} but B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let svd = Svd::new(a)?;
    let rank = svd.numerical_rank();
    if rank == 0 {
        return Err(Error::ZeroMatrix);
    }
    let u = svd.u.columns(0, rank);
    let v = svd.v.columns(0, rank);
    let pu = u * u.transpose();
    let pv = v * v.transpose();
    let pub_ = &pu * b;
    let parallel = &pub_ + b * &pv - &pub_ * &pv;
    let (rows, cols) = b.shape();
    let orthogonal = (Matrix::identity(rows, rows) - &pu) * b * (Matrix::identity(cols, cols) - &pv);
    Ok(Projected { parallel, orthogonal })
}
