//! Generalized forward-backward splitting for
//! `min Φ(A, W) + τ‖A‖_* + γ‖A‖₁ + ι_{A ≥ 0}(A) + κ‖W‖₁`.
//!
//! Each nonsmooth term on `A` gets its own auxiliary variable `z_k`
//! (`q` = 2, or 3 with the nonnegativity cone). One iteration is
//!
//! ```text
//! (G_A, G_W) = ∇Φ(A, W)
//! z_k ← z_k + prox_{qθ g_k}(2A - z_k - θ G_A) - A
//! A   ← mean(z_k)
//! W   ← prox_{θκ‖·‖₁}(W - θ G_W)
//! ```
//!
//! which converges for any step `θ < 2/L`. By default `A` and `W` take
//! separate steps `θ_A = c s_A / L_s`, `θ_W = c s_W / L_s`, where `s_A`,
//! `s_W` are the inverse curvatures of the two diagonal Hessian blocks and
//! `L_s` is the largest eigenvalue of the Hessian rescaled by them. This is
//! the same splitting in a block-diagonal metric.

use std::path::Path;

use crate::error::{Error, Result};
use crate::objective::{largest_eigenvalue, Penalties, ProblemData};
use crate::prox::{l1_norm, nuclear_norm, project_nonneg, prox_l1, prox_trace};
use crate::Matrix;

/// A convex quadratic smooth term with Lipschitz gradient.
pub trait SmoothTerm {
    /// Shapes of `A` and `W`.
    fn shapes(&self) -> ((usize, usize), (usize, usize));
    fn value(&self, a: &Matrix, w: &Matrix) -> Result<f64>;
    fn gradient(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)>;
    /// Hessian applied to a direction.
    fn hessian_apply(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)>;
    fn lipschitz(&self) -> Result<f64>;
}

impl SmoothTerm for ProblemData {
    fn shapes(&self) -> ((usize, usize), (usize, usize)) {
        ((self.n(), self.n()), (self.r(), self.r()))
    }

    fn value(&self, a: &Matrix, w: &Matrix) -> Result<f64> {
        self.smooth(a, w)
    }

    fn gradient(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
        self.quad_gradient(a, w)
    }

    fn hessian_apply(&self, a: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
        ProblemData::hessian_apply(self, a, w)
    }

    fn lipschitz(&self) -> Result<f64> {
        ProblemData::lipschitz(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zeros,
    Warm { a: Matrix, w: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Explicit step size shared by `A` and `W`; `None` derives the steps
    /// from `step_factor`.
    pub step: Option<f64>,
    pub step_factor: f64,
    /// Per-block steps from the rescaled Hessian instead of one `step_factor / L`.
    pub block_steps: bool,
    pub max_iter: usize,
    /// Stop once the relative changes of `A` and `W` both fall below this.
    pub tol: f64,
    pub enforce_nonneg: bool,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: None,
            step_factor: 1.9,
            block_steps: true,
            max_iter: 10_000,
            tol: 1e-6,
            enforce_nonneg: true,
            init: Init::Zeros,
        }
    }
}

impl SolverConfig {
    pub fn from_settings(s: &crate::matio::SolverSettings) -> Self {
        Self {
            step_factor: s.step_factor,
            block_steps: s.block_steps,
            max_iter: s.max_iter,
            tol: s.tol,
            enforce_nonneg: s.enforce_nonneg,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(step) = self.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::param("step", format!("must be > 0, got {step}")));
            }
        }
        if !(self.step_factor > 0.0) {
            return Err(Error::param("step_factor", "must be > 0"));
        }
        if self.max_iter < 1 {
            return Err(Error::param("max_iter", "must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        Ok(())
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub rel_change_a: f64,
    pub rel_change_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub a_hat: Matrix,
    pub w_hat: Matrix,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    /// Fixed-point residual of one more iteration from the final state.
    pub residual: f64,
    pub step_a: f64,
    pub step_w: f64,
    /// Lipschitz constant of `∇Φ` in the plain Euclidean metric.
    pub lipschitz: f64,
    /// Final auxiliary variables, one per nonsmooth term on `A`.
    pub aux: Vec<Matrix>,
}

impl FitResult {
    pub fn objective_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.objective).collect()
    }

    /// Writes `iteration,objective,rel_change_a,rel_change_w` rows.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(["iteration", "objective", "rel_change_a", "rel_change_w"])?;
        for row in &self.trace {
            out.write_record([
                row.iteration.to_string(),
                format!("{:e}", row.objective),
                format!("{:e}", row.rel_change_a),
                format!("{:e}", row.rel_change_w),
            ])?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Penalized objective: smooth part plus the three norms (the cone
/// indicator is not evaluated).
pub fn objective<S: SmoothTerm + ?Sized>(smooth: &S, a: &Matrix, w: &Matrix, pen: &Penalties) -> Result<f64> {
    let mut value = smooth.value(a, w)? + pen.gamma * l1_norm(a) + pen.kappa * l1_norm(w);
    if pen.tau != 0.0 {
        value += pen.tau * nuclear_norm(a)?;
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Trace(f64),
    L1(f64),
    Cone,
}

impl Term {
    fn prox(self, z: &Matrix, scale: f64) -> Result<Matrix> {
        match self {
            Term::Trace(tau) => prox_trace(z, scale * tau),
            Term::L1(gamma) => prox_l1(z, scale * gamma),
            Term::Cone => Ok(project_nonneg(z)),
        }
    }
}

struct State {
    a: Matrix,
    w: Matrix,
    z: Vec<Matrix>,
}

struct Splitting<'a, S: SmoothTerm + ?Sized> {
    smooth: &'a S,
    terms: Vec<Term>,
    kappa: f64,
    step_a: f64,
    step_w: f64,
}

impl<S: SmoothTerm + ?Sized> Splitting<'_, S> {
    fn step(&self, state: &State) -> Result<State> {
        let (g_a, g_w) = self.smooth.gradient(&state.a, &state.w)?;
        let q = self.terms.len() as f64;
        let base = &state.a * 2.0 - &g_a * self.step_a;
        let mut z = Vec::with_capacity(self.terms.len());
        for (term, zk) in self.terms.iter().zip(&state.z) {
            let p = term.prox(&(&base - zk), q * self.step_a)?;
            z.push(zk + p - &state.a);
        }
        let a = z
            .iter()
            .fold(Matrix::zeros(state.a.nrows(), state.a.ncols()), |acc, zk| acc + zk)
            / q;
        let w = prox_l1(&(&state.w - &g_w * self.step_w), self.step_w * self.kappa)?;
        Ok(State { a, w, z })
    }
}

/// `(θ_A, θ_W)` for the block-diagonal metric; a block with zero curvature
/// keeps unit scale.
fn block_steps<S: SmoothTerm + ?Sized>(smooth: &S, factor: f64) -> Result<(f64, f64)> {
    let (a_shape, w_shape) = smooth.shapes();
    let zero_a = Matrix::zeros(a_shape.0, a_shape.1);
    let zero_w = Matrix::zeros(w_shape.0, w_shape.1);
    let l_a = largest_eigenvalue(a_shape, (0, 0), |a, _| {
        Ok((smooth.hessian_apply(a, &zero_w)?.0, Matrix::zeros(0, 0)))
    })?;
    let l_w = largest_eigenvalue((0, 0), w_shape, |_, w| {
        Ok((Matrix::zeros(0, 0), smooth.hessian_apply(&zero_a, w)?.1))
    })?;
    let s_a = if l_a > 0.0 { 1.0 / l_a } else { 1.0 };
    let s_w = if l_w > 0.0 { 1.0 / l_w } else { 1.0 };
    let (r_a, r_w) = (s_a.sqrt(), s_w.sqrt());
    let l_s = largest_eigenvalue(a_shape, w_shape, |a, w| {
        let (ha, hw) = smooth.hessian_apply(&(a * r_a), &(w * r_w))?;
        Ok((ha * r_a, hw * r_w))
    })?;
    if l_s > 0.0 {
        Ok((factor * s_a / l_s, factor * s_w / l_s))
    } else {
        Ok((s_a, s_w))
    }
}

fn rel_change(new: &Matrix, old: &Matrix) -> f64 {
    (new - old).norm() / new.norm().max(1.0)
}

fn diverged(state: &State) -> bool {
    state.a.iter().chain(state.w.iter()).any(|v| !v.is_finite())
}

/// Minimizes the penalized objective by generalized forward-backward splitting.
///
/// The change measure is `‖Δ‖_F / max(‖new‖_F, 1)`, relative for matrices
/// of norm above one and absolute below.
pub fn gfb_minimize<S: SmoothTerm + ?Sized>(smooth: &S, pen: &Penalties, cfg: &SolverConfig) -> Result<FitResult> {
    cfg.validate()?;
    let (a_shape, w_shape) = smooth.shapes();
    let lipschitz = smooth.lipschitz()?;
    let (step_a, step_w) = match cfg.step {
        Some(s) => (s, s),
        None if cfg.block_steps => block_steps(smooth, cfg.step_factor)?,
        None if lipschitz > 0.0 => (cfg.step_factor / lipschitz, cfg.step_factor / lipschitz),
        None => (1.0, 1.0),
    };
    if cfg.step.is_some() && lipschitz > 0.0 && step_a >= 2.0 / lipschitz {
        log::warn!(
            "step {step_a:e} is not below 2/L = {:e}; convergence is not guaranteed",
            2.0 / lipschitz
        );
    }

    let mut terms = vec![Term::Trace(pen.tau), Term::L1(pen.gamma)];
    if cfg.enforce_nonneg {
        terms.push(Term::Cone);
    }
    let (a0, w0) = match &cfg.init {
        Init::Zeros => (Matrix::zeros(a_shape.0, a_shape.1), Matrix::zeros(w_shape.0, w_shape.1)),
        Init::Warm { a, w } => {
            if a.shape() != a_shape || w.shape() != w_shape {
                return Err(Error::Dimension(format!(
                    "warm start shapes {:?}/{:?}, expected {a_shape:?}/{w_shape:?}",
                    a.shape(),
                    w.shape()
                )));
            }
            (a.clone(), w.clone())
        }
    };
    let splitting = Splitting {
        smooth,
        kappa: pen.kappa,
        step_a,
        step_w,
        terms,
    };
    let mut state = State {
        z: vec![a0.clone(); splitting.terms.len()],
        a: a0,
        w: w0,
    };

    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.max_iter {
        let next = splitting.step(&state)?;
        if diverged(&next) {
            return Err(Error::Diverged { iteration });
        }
        let rel_change_a = rel_change(&next.a, &state.a);
        let rel_change_w = rel_change(&next.w, &state.w);
        state = next;
        let value = objective(smooth, &state.a, &state.w, pen)?;
        if !value.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        trace.push(TraceRow {
            iteration,
            objective: value,
            rel_change_a,
            rel_change_w,
        });
        if rel_change_a.max(rel_change_w) < cfg.tol {
            converged = true;
            break;
        }
    }

    let after = splitting.step(&state)?;
    let residual = (&state.a - &after.a).norm() + (&state.w - &after.w).norm();
    let a_hat = if cfg.enforce_nonneg {
        project_nonneg(&state.a)
    } else {
        state.a
    };
    Ok(FitResult {
        a_hat,
        w_hat: state.w,
        iterations: trace.len(),
        converged,
        trace,
        residual,
        step_a,
        step_w,
        lipschitz,
        aux: state.z,
    })
}

/// Fixed-point certificate for `(A, W)`: `‖A - T_A‖_F + ‖W - T_W‖_F`, where
/// `T` is one iteration of the splitting operator.
///
/// The auxiliary variables are not part of `(A, W)`, so they are re-derived
/// by a warm-up solve started at `(A, W)`; its converged auxiliary state is
/// shifted to average to `A` before the single exact iteration is applied.
/// The result is zero at fixed points and positive elsewhere.
pub fn optimality_residual<S: SmoothTerm + ?Sized>(
    smooth: &S,
    a: &Matrix,
    w: &Matrix,
    pen: &Penalties,
    cfg: &SolverConfig,
) -> Result<f64> {
    let warm_cfg = SolverConfig {
        init: Init::Warm {
            a: a.clone(),
            w: w.clone(),
        },
        ..cfg.clone()
    };
    let warm = gfb_minimize(smooth, pen, &warm_cfg)?;
    let q = warm.aux.len() as f64;
    let center = warm
        .aux
        .iter()
        .fold(Matrix::zeros(a.nrows(), a.ncols()), |acc, z| acc + z)
        / q;
    let z: Vec<Matrix> = warm.aux.iter().map(|zk| zk - &center + a).collect();

    let mut terms = vec![Term::Trace(pen.tau), Term::L1(pen.gamma)];
    if cfg.enforce_nonneg {
        terms.push(Term::Cone);
    }
    let splitting = Splitting {
        smooth,
        terms,
        kappa: pen.kappa,
        step_a: warm.step_a,
        step_w: warm.step_w,
    };
    let state = State {
        a: a.clone(),
        w: w.clone(),
        z,
    };
    let next = splitting.step(&state)?;
    Ok((a - &next.a).norm() + (w - &next.w).norm())
}
