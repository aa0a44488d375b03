//! Link-scoring methods and the method registry.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::matio::{write_matrix, GraphSequence};
use crate::objective::{Penalties, ProblemData};
use crate::solver::{gfb_minimize, FitResult, SmoothTerm, SolverConfig};
use crate::Matrix;

/// Link scores for every ordered node pair; higher means more likely.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub scores: Matrix,
    /// Whether self-pairs take part in evaluation.
    pub include_diagonal: bool,
}

impl ScoreMatrix {
    pub fn new(scores: Matrix) -> Result<Self> {
        if !scores.is_square() {
            return Err(Error::Dimension(format!(
                "scores must be square, got {:?}",
                scores.shape()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("scores", "entries must be finite"));
        }
        Ok(Self {
            scores,
            include_diagonal: false,
        })
    }

    pub fn with_diagonal(mut self, include: bool) -> Self {
        self.include_diagonal = include;
        self
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_matrix(&self.scores, path)
    }
}

/// Entrywise sum `Ã_T = Σ_t A_t`.
pub fn cumulative(seq: &GraphSequence) -> Matrix {
    let snaps = seq.snapshots();
    snaps[1..].iter().fold(snaps[0].clone(), |acc, a| acc + a)
}

/// Common-neighbour counts `Ã_T²`.
pub fn nn_score(seq: &GraphSequence) -> Result<ScoreMatrix> {
    let c = cumulative(seq);
    ScoreMatrix::new(&c * &c)
}

/// `‖X - Ã‖²` over `A` alone; `W` is empty.
#[derive(Debug, Clone)]
pub struct StaticObjective {
    pub target: Matrix,
}

impl SmoothTerm for StaticObjective {
    fn shapes(&self) -> ((usize, usize), (usize, usize)) {
        (self.target.shape(), (0, 0))
    }

    fn value(&self, a: &Matrix, _w: &Matrix) -> Result<f64> {
        if a.shape() != self.target.shape() {
            return Err(Error::Dimension(format!(
                "expected {:?}, got {:?}",
                self.target.shape(),
                a.shape()
            )));
        }
        Ok((a - &self.target).norm_squared())
    }

    fn gradient(&self, a: &Matrix, _w: &Matrix) -> Result<(Matrix, Matrix)> {
        Ok(((a - &self.target) * 2.0, Matrix::zeros(0, 0)))
    }

    fn hessian_apply(&self, a: &Matrix, _w: &Matrix) -> Result<(Matrix, Matrix)> {
        Ok((a * 2.0, Matrix::zeros(0, 0)))
    }

    fn lipschitz(&self) -> Result<f64> {
        Ok(2.0)
    }
}

/// Minimizes `‖X - Ã_T‖² + τ‖X‖_* + γ‖X‖₁` (κ is ignored).
pub fn static_fit(seq: &GraphSequence, pen: &Penalties, cfg: &SolverConfig) -> Result<FitResult> {
    let smooth = StaticObjective {
        target: cumulative(seq),
    };
    gfb_minimize(&smooth, &Penalties { kappa: 0.0, ..*pen }, cfg)
}

/// Builds the SVD feature map of `Ã_T` and solves the joint problem.
pub fn autoregressive_fit(
    seq: &GraphSequence,
    feature_rank: usize,
    pen: &Penalties,
    cfg: &SolverConfig,
) -> Result<(ProblemData, FitResult)> {
    let map = FeatureMap::from_cumulative_svd(seq, feature_rank)?;
    let data = ProblemData::new(map, seq)?;
    let fit = gfb_minimize(&data, pen, cfg)?;
    Ok((data, fit))
}

pub fn autoregressive_score(fit: &FitResult) -> Result<ScoreMatrix> {
    ScoreMatrix::new(fit.a_hat.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nn,
    StaticSparseLowRank,
    StaticLowRank,
    AutoregressiveSparseLowRank,
    AutoregressiveLowRank,
}

/// Output of one method: scores plus the solver record when there is one.
#[derive(Debug, Clone)]
pub struct MethodFit {
    pub scores: ScoreMatrix,
    pub fit: Option<FitResult>,
    pub map: Option<FeatureMap>,
    /// Penalties actually used, after the method's own restrictions.
    pub penalties: Penalties,
}

impl Method {
    pub fn all() -> Vec<Method> {
        vec![
            Method::Nn,
            Method::StaticSparseLowRank,
            Method::StaticLowRank,
            Method::AutoregressiveSparseLowRank,
            Method::AutoregressiveLowRank,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Nn => "nn",
            Method::StaticSparseLowRank => "static-sparse-low-rank",
            Method::StaticLowRank => "static-low-rank",
            Method::AutoregressiveSparseLowRank => "autoregressive-sparse-low-rank",
            Method::AutoregressiveLowRank => "autoregressive-low-rank",
        }
    }

    pub fn is_autoregressive(self) -> bool {
        matches!(
            self,
            Method::AutoregressiveSparseLowRank | Method::AutoregressiveLowRank
        )
    }

    /// Whether the method has penalties to tune.
    pub fn is_penalized(self) -> bool {
        self != Method::Nn
    }

    pub fn uses_gamma(self) -> bool {
        matches!(self, Method::StaticSparseLowRank | Method::AutoregressiveSparseLowRank)
    }

    /// Zeroes the weights the method does not use.
    pub fn restrict(self, pen: &Penalties) -> Penalties {
        let mut p = *pen;
        if !self.uses_gamma() {
            p.gamma = 0.0;
        }
        if !self.is_autoregressive() {
            p.kappa = 0.0;
        }
        if !self.is_penalized() {
            p.tau = 0.0;
        }
        p
    }

    pub fn fit(
        self,
        seq: &GraphSequence,
        feature_rank: usize,
        pen: &Penalties,
        cfg: &SolverConfig,
    ) -> Result<MethodFit> {
        let penalties = self.restrict(pen);
        match self {
            Method::Nn => Ok(MethodFit {
                scores: nn_score(seq)?,
                fit: None,
                map: None,
                penalties,
            }),
            Method::StaticSparseLowRank | Method::StaticLowRank => {
                let fit = static_fit(seq, &penalties, cfg)?;
                Ok(MethodFit {
                    scores: ScoreMatrix::new(fit.a_hat.clone())?,
                    fit: Some(fit),
                    map: None,
                    penalties,
                })
            }
            Method::AutoregressiveSparseLowRank | Method::AutoregressiveLowRank => {
                let (data, fit) = autoregressive_fit(seq, feature_rank, &penalties, cfg)?;
                Ok(MethodFit {
                    scores: autoregressive_score(&fit)?,
                    fit: Some(fit),
                    map: Some(data.map),
                    penalties,
                })
            }
        }
    }

    pub fn score(
        self,
        seq: &GraphSequence,
        feature_rank: usize,
        pen: &Penalties,
        cfg: &SolverConfig,
    ) -> Result<ScoreMatrix> {
        Ok(self.fit(seq, feature_rank, pen, cfg)?.scores)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}
