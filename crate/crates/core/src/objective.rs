//! The joint objective
//!
//! ```text
//! L(A, W) = 1/(dT) ‖X_next - X_prev W‖² + κ‖W‖₁
//!         + 1/d ‖ω(A) - φ_T W‖² + τ‖A‖_* + γ‖A‖₁
//! ```
//!
//! with `d = m r`. The smooth part (both squared terms) is `Φ`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureStack};
use crate::matio::{GraphSequence, PenaltyConfig};
use crate::prox::{l1_norm, nuclear_norm};
use crate::rng::{stream, Purpose};
use crate::Matrix;

/// Relative Rayleigh-quotient change at which power iteration stops.
const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 10_000;
/// Safety factor applied to the power-iteration estimate of `L`.
const LIPSCHITZ_INFLATION: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    /// Trace-norm weight on `A`.
    pub tau: f64,
    /// ℓ1 weight on `A`.
    pub gamma: f64,
    /// ℓ1 weight on `W`.
    pub kappa: f64,
    /// Split between `tau` and `gamma` used by data-driven tuning.
    pub alpha: f64,
}

impl Penalties {
    pub fn new(tau: f64, gamma: f64, kappa: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("tau", tau), ("gamma", gamma), ("kappa", kappa)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        Ok(Self {
            tau,
            gamma,
            kappa,
            alpha,
        })
    }

    pub fn zero() -> Self {
        Self {
            tau: 0.0,
            gamma: 0.0,
            kappa: 0.0,
            alpha: 0.5,
        }
    }

    pub fn total(&self) -> f64 {
        self.tau + self.gamma + self.kappa
    }
}

impl TryFrom<PenaltyConfig> for Penalties {
    type Error = Error;

    fn try_from(p: PenaltyConfig) -> Result<Self> {
        Self::new(p.tau, p.gamma, p.kappa, p.alpha)
    }
}

/// Feature stack and map of one observed sequence.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub map: FeatureMap,
    pub stack: FeatureStack,
    pub horizon: usize,
    gram_prev: Matrix,
    cross: Matrix,
}

/// The quantities being estimated: the next snapshot and the VAR matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub a_next: Matrix,
    pub w0: Matrix,
}

impl ProblemData {
    pub fn new(map: FeatureMap, seq: &GraphSequence) -> Result<Self> {
        let stack = FeatureStack::build(&map, seq)?;
        Ok(Self::from_stack(map, stack, seq.horizon()))
    }

    pub fn from_stack(map: FeatureMap, stack: FeatureStack, horizon: usize) -> Self {
        let gram_prev = stack.x_prev.transpose() * &stack.x_prev;
        let cross = stack.x_prev.transpose() * &stack.x_next;
        Self {
            map,
            stack,
            horizon,
            gram_prev,
            cross,
        }
    }

    pub fn n(&self) -> usize {
        self.map.n()
    }

    /// VAR dimension `r`.
    pub fn r(&self) -> usize {
        self.map.feature_cols()
    }

    pub fn d_eff(&self) -> f64 {
        self.map.d_eff() as f64
    }

    fn check(&self, a: &Matrix, w: &Matrix) -> Result<()> {
        let (n, r) = (self.n(), self.r());
        if a.shape() != (n, n) || w.shape() != (r, r) {
            return Err(Error::Dimension(format!(
                "expected A {n}x{n} and W {r}x{r}, got {:?} and {:?}",
                a.shape(),
                w.shape()
            )));
        }
        Ok(())
    }

    /// Residuals `(X_next - X_prev W, ω(A) - φ_T W)`.
    fn residuals(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check(a, w)?;
        let var = &self.stack.x_next - &self.stack.x_prev * w;
        let pred = self.map.apply(a)? - &self.stack.phi_t * w;
        Ok((var, pred))
    }

    /// Smooth part `Φ(A, W)`.
    pub fn smooth(&self, a: &Matrix, w: &Matrix) -> Result<f64> {
        let d = self.d_eff();
        let t = self.horizon as f64;
        let (var, pred) = self.residuals(a, w)?;
        Ok(var.norm_squared() / (d * t) + pred.norm_squared() / d)
    }

    /// Full penalized objective `L(A, W)`.
    pub fn loss(&self, a: &Matrix, w: &Matrix, pen: &Penalties) -> Result<f64> {
        let mut value = self.smooth(a, w)? + pen.kappa * l1_norm(w) + pen.gamma * l1_norm(a);
        if pen.tau != 0.0 {
            value += pen.tau * nuclear_norm(a)?;
        }
        Ok(value)
    }

    /// Gradient `(∇_A Φ, ∇_W Φ)`.
    pub fn quad_gradient(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check(a, w)?;
        let d = self.d_eff();
        let t = self.horizon as f64;
        let pred = self.map.apply(a)? - &self.stack.phi_t * w;
        let g_a = self.map.adjoint(&pred)? * (2.0 / d);
        let g_w =
            (&self.gram_prev * w - &self.cross) * (2.0 / (d * t)) - self.stack.phi_t.transpose() * &pred * (2.0 / d);
        Ok((g_a, g_w))
    }

    /// Hessian of `Φ` applied to a direction; `Φ` is quadratic, so this is
    /// the gradient with the constant terms dropped.
    pub fn hessian_apply(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check(a, w)?;
        let d = self.d_eff();
        let t = self.horizon as f64;
        let pred = self.map.apply(a)? - &self.stack.phi_t * w;
        let h_a = self.map.adjoint(&pred)? * (2.0 / d);
        let h_w = &self.gram_prev * w * (2.0 / (d * t)) - self.stack.phi_t.transpose() * &pred * (2.0 / d);
        Ok((h_a, h_w))
    }

    /// The linear map `(A, W) ↦ ((1/√T) X_prev W, ω(A) - φ_T W)`.
    pub fn linear_map(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check(a, w)?;
        let t = self.horizon as f64;
        Ok((
            &self.stack.x_prev * w / t.sqrt(),
            self.map.apply(a)? - &self.stack.phi_t * w,
        ))
    }

    /// Mixed prediction-estimation error
    /// `E² = 1/d ‖φ_T (W - W₀) - ω(A - A_{T+1})‖² + 1/(dT) ‖X_prev (W - W₀)‖²`.
    pub fn error_metric(&self, a: &Matrix, w: &Matrix, truth: &GroundTruth) -> Result<f64> {
        self.check(a, w)?;
        self.check(&truth.a_next, &truth.w0)?;
        let d = self.d_eff();
        let t = self.horizon as f64;
        let dw = w - &truth.w0;
        let pred = &self.stack.phi_t * &dw - self.map.apply(&(a - &truth.a_next))?;
        let var = &self.stack.x_prev * &dw;
        Ok((pred.norm_squared() / d + var.norm_squared() / (d * t)).sqrt())
    }

    /// Least-squares VAR matrix `(X_prevᵀ X_prev)^† X_prevᵀ X_next`.
    pub fn ols_transition(&self) -> Result<Matrix> {
        let r = self.r();
        let scale = self.gram_prev.amax();
        if scale == 0.0 {
            return Ok(Matrix::zeros(r, r));
        }
        let pinv = self
            .gram_prev
            .clone()
            .pseudo_inverse(1e-12 * scale)
            .map_err(|_| Error::SvdFailed { rows: r, cols: r })?;
        Ok(pinv * &self.cross)
    }

    /// Upper estimate of the Lipschitz constant of `∇Φ`, i.e. the largest
    /// Hessian eigenvalue, from power iteration inflated by 1%.
    pub fn lipschitz(&self) -> Result<f64> {
        largest_eigenvalue((self.n(), self.n()), (self.r(), self.r()), |a, w| {
            self.hessian_apply(a, w)
        })
    }
}

/// Largest eigenvalue of a positive semidefinite operator on `(A, W)`
/// pairs, by power iteration from a fixed start, inflated by 1%.
pub fn largest_eigenvalue<F>(a_shape: (usize, usize), w_shape: (usize, usize), apply: F) -> Result<f64>
where
    F: Fn(&Matrix, &Matrix) -> Result<(Matrix, Matrix)>,
{
    let mut rng = stream(0, Purpose::Power);
    let mut a = Matrix::from_fn(a_shape.0, a_shape.1, |_, _| rng.random_range(-1.0..1.0));
    let mut w = Matrix::from_fn(w_shape.0, w_shape.1, |_, _| rng.random_range(-1.0..1.0));
    let norm = (a.norm_squared() + w.norm_squared()).sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    a /= norm;
    w /= norm;
    let mut previous = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let (ha, hw) = apply(&a, &w)?;
        let rayleigh = a.dot(&ha) + w.dot(&hw);
        let hnorm = (ha.norm_squared() + hw.norm_squared()).sqrt();
        if hnorm == 0.0 {
            return Ok(0.0);
        }
        if (rayleigh - previous).abs() < POWER_TOL * rayleigh.abs() {
            return Ok(rayleigh * LIPSCHITZ_INFLATION);
        }
        previous = rayleigh;
        a = ha / hnorm;
        w = hw / hnorm;
    }
    Err(Error::Stagnation {
        iterations: POWER_MAX_ITER,
    })
}
