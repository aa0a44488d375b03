//! Penalty selection: closed-form data-driven weights, cross-validation
//! over a grid, and Monte-Carlo checks of the noise concentration bounds.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cumulative, Method};
use crate::bench::auc_from_labels;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::matio::{GraphSequence, GridConfig, GridUnits};
use crate::objective::{Penalties, ProblemData};
use crate::prox::operator_norm;
use crate::rng::{run_seed, stream, Purpose};
use crate::solver::SolverConfig;
use crate::Matrix;

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

/// Scale-free parts of the three weights; each weight is `σ` times these.
fn theorem3_units(map: &FeatureMap, seq: &GraphSequence, alpha: f64, x: f64) -> Result<[f64; 3]> {
    let n = map.n() as f64;
    let d = map.d_eff() as f64;
    let t = seq.horizon() as f64;
    let v = map.variance_terms()?;
    let s = map.sequence_variance(seq)?;
    let e = std::f64::consts::E;
    Ok([
        3.0 * alpha * v.v_op * (2.0 * (x + (2.0 * n).ln()) / d).sqrt(),
        3.0 * (1.0 - alpha) * v.v_inf * (2.0 * (x + 2.0 * n.ln()) / d).sqrt(),
        6.0 * s.sigma_omega / d * (2.0 * e * (x + 2.0 * d.ln() + s.ell_t) / (t + 1.0)).sqrt(),
    ])
}

/// Data-driven weights
/// `τ = 3ασ v_op √(2(x + log 2n)/d)`,
/// `γ = 3(1-α)σ v_inf √(2(x + 2 log n)/d)`,
/// `κ = 6σσ_ω (1/d) √(2e(x + 2 log d + ℓ_T)/(T+1))`.
pub fn theorem3_params(map: &FeatureMap, seq: &GraphSequence, sigma: f64, alpha: f64, x: f64) -> Result<Penalties> {
    check_positive("sigma", sigma)?;
    check_positive("x", x)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if map.n() != seq.n() {
        return Err(Error::Dimension(format!(
            "map on {} nodes, sequence on {}",
            map.n(),
            seq.n()
        )));
    }
    let [tau, gamma, kappa] = theorem3_units(map, seq, alpha, x)?;
    Penalties::new(sigma * tau, sigma * gamma, sigma * kappa, alpha)
}

/// Noise level estimate: root mean square of the one-step feature
/// residuals `X_next - X_prev Ŵ` under the least-squares `Ŵ`, with a
/// degrees-of-freedom correction for the `r²` fitted entries.
pub fn estimate_sigma(data: &ProblemData) -> Result<f64> {
    let w = data.ols_transition()?;
    let resid = &data.stack.x_next - &data.stack.x_prev * &w;
    let dof = resid.len().saturating_sub(w.len()).max(1) as f64;
    Ok((resid.norm_squared() / dof).sqrt())
}

/// Penalty levels at which the method's fit from zero stays at zero; grid
/// values in relative units are fractions of these.
pub fn penalty_scale(method: Method, seq: &GraphSequence, feature_rank: usize) -> Result<Penalties> {
    let mut scale = Penalties::zero();
    match method {
        Method::Nn => {}
        Method::StaticSparseLowRank | Method::StaticLowRank => {
            let c = cumulative(seq);
            scale.tau = 2.0 * operator_norm(&c)?;
            scale.gamma = 2.0 * c.amax();
        }
        Method::AutoregressiveSparseLowRank | Method::AutoregressiveLowRank => {
            let map = FeatureMap::from_cumulative_svd(seq, feature_rank)?;
            let data = ProblemData::new(map, seq)?;
            let d = data.d_eff();
            let t = data.horizon as f64;
            let w = data.ols_transition()?;
            let grad_a = data.map.adjoint(&(&data.stack.phi_t * &w))? * (2.0 / d);
            scale.tau = operator_norm(&grad_a)?;
            scale.gamma = grad_a.amax();
            scale.kappa = (data.stack.x_prev.transpose() * &data.stack.x_next).amax() * 2.0 / (d * t);
        }
    }
    Ok(scale)
}

/// Factorial grid restricted to the weights the method uses, duplicates
/// removed in first-seen order.
pub fn method_grid(
    method: Method,
    grid: &GridConfig,
    seq: &GraphSequence,
    feature_rank: usize,
    alpha: f64,
) -> Result<Vec<Penalties>> {
    let scale = match grid.units {
        GridUnits::Relative => penalty_scale(method, seq, feature_rank)?,
        GridUnits::Absolute => Penalties {
            tau: 1.0,
            gamma: 1.0,
            kappa: 1.0,
            alpha,
        },
    };
    let mut cells: Vec<Penalties> = Vec::new();
    for &tau in &grid.tau {
        for &gamma in &grid.gamma {
            for &kappa in &grid.kappa {
                let raw = Penalties::new(tau * scale.tau, gamma * scale.gamma, kappa * scale.kappa, alpha)?;
                let cell = method.restrict(&raw);
                if !cells.contains(&cell) {
                    cells.push(cell);
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::param("grid", "must contain at least one value per axis"));
    }
    Ok(cells)
}

/// What cross-validation refits.
#[derive(Debug, Clone)]
pub struct CvProblem<'a> {
    pub method: Method,
    pub seq: &'a GraphSequence,
    pub feature_rank: usize,
    pub solver: SolverConfig,
    pub binarize_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub method: Method,
    pub cell: usize,
    pub tau: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub mean_auc: f64,
    pub folds_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best: Penalties,
    pub table: Vec<CvRow>,
    pub skipped_folds: Vec<usize>,
}

/// Random partition of the off-diagonal positions of an `n x n` matrix
/// into `folds` parts of near-equal size.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<(usize, usize)>>> {
    if folds < 2 {
        return Err(Error::param("folds", format!("must be >= 2, got {folds}")));
    }
    let mut positions: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    if positions.len() < folds {
        return Err(Error::param(
            "folds",
            format!("{folds} folds exceed the {} off-diagonal positions", positions.len()),
        ));
    }
    positions.shuffle(&mut stream(seed, Purpose::Folds));
    let mut parts = vec![Vec::new(); folds];
    for (k, p) in positions.into_iter().enumerate() {
        parts[k % folds].push(p);
    }
    Ok(parts)
}

/// Entry-fold cross-validation on the last observed snapshot.
///
/// Each fold's positions of `A_T` are set to zero, the method is refitted,
/// and its scores on those positions are compared with `A_T` by AUC. Folds
/// whose held-out truth has a single class are skipped. The best cell has
/// the highest mean AUC; ties go to the smallest `τ + γ + κ`, then to the
/// earlier cell.
pub fn cross_validate(problem: &CvProblem<'_>, grid: &[Penalties], folds: usize, seed: u64) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::param("grid", "must be nonempty"));
    }
    let seq = problem.seq;
    let last = seq.last();
    let parts = fold_partition(seq.n(), folds, seed)?;

    let mut usable = Vec::new();
    let mut skipped_folds = Vec::new();
    for (k, part) in parts.iter().enumerate() {
        let labels: Vec<bool> = part.iter().map(|&p| last[p] > problem.binarize_threshold).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            log::warn!("cross-validation fold {k} has single-class truth; skipped");
            skipped_folds.push(k);
        } else {
            usable.push((k, labels));
        }
    }
    if usable.is_empty() {
        return Err(Error::AllFoldsSkipped { folds });
    }
    let masked: Vec<GraphSequence> = usable
        .iter()
        .map(|(k, _)| seq.with_last_masked(&parts[*k]))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..usable.len()).map(move |f| (c, f)))
        .collect();
    let aucs: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (k, labels) = &usable[f];
            let scores = problem
                .method
                .score(&masked[f], problem.feature_rank, &grid[c], &problem.solver)?;
            let held: Vec<f64> = parts[*k].iter().map(|&p| scores.scores[p]).collect();
            auc_from_labels(&held, labels)
        })
        .collect::<Result<_>>()?;

    let table: Vec<CvRow> = grid
        .iter()
        .enumerate()
        .map(|(c, pen)| {
            let cell = &aucs[c * usable.len()..(c + 1) * usable.len()];
            CvRow {
                method: problem.method,
                cell: c,
                tau: pen.tau,
                gamma: pen.gamma,
                kappa: pen.kappa,
                mean_auc: cell.iter().sum::<f64>() / cell.len() as f64,
                folds_used: cell.len(),
            }
        })
        .collect();
    let mut best = 0;
    for c in 1..table.len() {
        let (cand, cur) = (&table[c], &table[best]);
        if cand.mean_auc > cur.mean_auc || (cand.mean_auc == cur.mean_auc && grid[c].total() < grid[best].total()) {
            best = c;
        }
    }
    Ok(CvOutcome {
        best: grid[best],
        table,
        skipped_folds,
    })
}

/// Writes CV rows with a header; `seed` and `run` identify the dataset.
pub fn write_cv_csv(rows: &[(u64, CvRow)], path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record([
        "schema_version",
        "seed",
        "method",
        "cell",
        "tau",
        "gamma",
        "kappa",
        "mean_auc",
        "folds_used",
    ])?;
    for (seed, row) in rows {
        out.write_record([
            crate::bench::SCHEMA_VERSION.to_string(),
            seed.to_string(),
            row.method.name().to_string(),
            row.cell.to_string(),
            format!("{:e}", row.tau),
            format!("{:e}", row.gamma),
            format!("{:e}", row.kappa),
            format!("{:e}", row.mean_auc),
            row.folds_used.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Monte-Carlo record of one concentration inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRecord {
    pub name: String,
    pub bound: f64,
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    /// Probability cap on a violation, clipped at 1.
    pub cap: f64,
}

impl ConcentrationRecord {
    /// `cap + 3 √(cap / trials)`.
    pub fn tolerance(&self) -> f64 {
        self.cap + 3.0 * (self.cap / self.trials as f64).sqrt()
    }

    pub fn within_tolerance(&self) -> bool {
        self.rate <= self.tolerance()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub records: Vec<ConcentrationRecord>,
}

impl ConcentrationReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(["schema_version", "name", "bound", "trials", "violations", "rate", "cap"])?;
        for r in &self.records {
            out.write_record([
                crate::bench::SCHEMA_VERSION.to_string(),
                r.name.clone(),
                format!("{:e}", r.bound),
                r.trials.to_string(),
                r.violations.to_string(),
                format!("{:e}", r.rate),
                format!("{:e}", r.cap),
            ])?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Simulates i.i.d. `N(0, σ²)` noise and counts how often each of
///
/// - (a) `‖(1/d) Σ_j g_j Ω_j‖_op ≤ σ v_op √(2(x + log 2n)/d)`,
/// - (b) `max |(1/d) Σ_j g_j Ω_j| ≤ σ v_inf √(2(x + 2 log n)/d)`,
/// - (c) `‖(1/(T+1)) Σ_t ω(A_{t-1}) N_tᵀ‖_∞ ≤ σ σ_ω √(2e(x + 2 log d + ℓ_T)/(T+1))`
///
/// fails, against caps `e^{-x}`, `2e^{-x}` and `14e^{-x}`.
pub fn concentration_check(
    map: &FeatureMap,
    seq: &GraphSequence,
    sigma: f64,
    x: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if trials < 1 {
        return Err(Error::param("trials", "must be >= 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be >= 0, got {sigma}")));
    }
    check_positive("x", x)?;
    let n = map.n() as f64;
    let d_eff = map.d_eff();
    let d = d_eff as f64;
    let steps = seq.snapshots().len();
    let count = steps as f64;
    let v = map.variance_terms()?;
    let s = map.sequence_variance(seq)?;
    let e = std::f64::consts::E;
    let bounds = [
        sigma * (v.v_op * (2.0 * (x + (2.0 * n).ln()) / d).sqrt()),
        sigma * (v.v_inf * (2.0 * (x + 2.0 * n.ln()) / d).sqrt()),
        sigma * (s.sigma_omega * (2.0 * e * (x + 2.0 * d.ln() + s.ell_t) / count).sqrt()),
    ];
    let caps = [(-x).exp(), 2.0 * (-x).exp(), 14.0 * (-x).exp()].map(|c: f64| c.min(1.0));

    // Features of A_0..A_T as columns of a d x (T+1) matrix.
    let mut features = Matrix::zeros(d_eff, steps);
    for (t, a) in seq.snapshots().iter().enumerate() {
        let f = map.apply(a)?;
        features.column_mut(t).copy_from_slice(f.as_slice());
    }
    let (rows, cols) = (map.feature_rows(), map.feature_cols());

    let stats: Vec<[f64; 3]> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(run_seed(seed, trial as u64), Purpose::Concentration);
            let mut draw = |r: usize, c: usize| -> Matrix {
                if sigma == 0.0 {
                    return Matrix::zeros(r, c);
                }
                let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
                Matrix::from_fn(r, c, |_, _| normal.sample(&mut rng))
            };
            let g = draw(rows, cols);
            let m = map.adjoint(&g)? / d;
            let noise = draw(d_eff, steps);
            let xi = &features * noise.transpose() / count;
            Ok([operator_norm(&m)?, m.amax(), xi.amax()])
        })
        .collect::<Result<_>>()?;

    let names = ["operator", "entrywise", "cross"];
    let records = (0..3)
        .map(|k| {
            let violations = stats.iter().filter(|st| st[k] > bounds[k]).count();
            ConcentrationRecord {
                name: names[k].to_string(),
                bound: bounds[k],
                trials,
                violations,
                rate: violations as f64 / trials as f64,
                cap: caps[k],
            }
        })
        .collect();
    Ok(ConcentrationReport { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, GeneratorParams};
    use rand::Rng;

    fn random_seq(n: usize, len: usize, seed: u64) -> GraphSequence {
        let mut rng = stream(seed, Purpose::Test);
        let snaps = (0..len)
            .map(|_| {
                Matrix::from_fn(n, n, |_, _| {
                    if rng.random_bool(0.4) {
                        rng.random_range(0.0..1.0)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        GraphSequence::new(snaps).unwrap()
    }

    #[test]
    fn zero_omegas_give_zero_tau_gamma() {
        let seq = random_seq(4, 3, 1);
        let map = FeatureMap::omega_list(vec![Matrix::zeros(4, 4); 3]).unwrap();
        let p = theorem3_params(&map, &seq, 0.5, 0.5, 3.0).unwrap();
        assert_eq!((p.tau, p.gamma), (0.0, 0.0));
    }

    #[test]
    fn theorem3_linear_in_sigma() {
        let seq = random_seq(6, 4, 2);
        let map = FeatureMap::from_cumulative_svd(&seq, 2).unwrap();
        let p1 = theorem3_params(&map, &seq, 0.5, 0.5, 3.0).unwrap();
        let p2 = theorem3_params(&map, &seq, 1.0, 0.5, 3.0).unwrap();
        assert_eq!(p2.tau, 2.0 * p1.tau);
        assert_eq!(p2.gamma, 2.0 * p1.gamma);
        assert_eq!(p2.kappa, 2.0 * p1.kappa);
    }

    #[test]
    fn theorem3_matches_scalar_formulas() {
        let ds = generate(&GeneratorParams::new(50, 2, 10, 0.5, 3).unwrap()).unwrap();
        let seq = &ds.sequence;
        let map = FeatureMap::from_cumulative_svd(seq, 2).unwrap();
        let (sigma, alpha, x) = (0.5, 0.5, 3.0);
        let p = theorem3_params(&map, seq, sigma, alpha, x).unwrap();

        // independent scalar re-implementation
        let n = 50.0f64;
        let r = 2usize;
        let d = 100.0f64;
        let t = 10.0f64;
        let v = match &map {
            FeatureMap::RightProjection { v } => v.clone(),
            _ => unreachable!(),
        };
        let v_op = (1.0f64 / n).max(1.0 / r as f64).sqrt();
        let mut v_inf_sq = 0.0f64;
        for k in 0..50 {
            for l in 0..50 {
                let mut acc = 0.0;
                for i in 0..50 {
                    for j in 0..r {
                        let val = if i == k { v[(l, j)] } else { 0.0 };
                        acc += val * val;
                    }
                }
                v_inf_sq = v_inf_sq.max(acc / d);
            }
        }
        let mut sums = vec![0.0f64; 50 * r];
        for a in seq.snapshots() {
            for i in 0..50 {
                for j in 0..r {
                    let mut f = 0.0;
                    for k in 0..50 {
                        f += a[(i, k)] * v[(k, j)];
                    }
                    sums[i * r + j] += f * f;
                }
            }
        }
        let cnt = t + 1.0;
        let sigma_omega = (sums.iter().cloned().fold(0.0, f64::max) / cnt).sqrt();
        let mut ell = 0.0f64;
        for s in &sums {
            if *s > 0.0 {
                let ratio = (s / cnt).max(cnt / s).max(std::f64::consts::E);
                ell = ell.max(ratio.ln().ln());
            }
        }
        let ell = 2.0 * ell;
        let tau = 3.0 * alpha * sigma * v_op * (2.0 * (x + (2.0 * n).ln()) / d).sqrt();
        let gamma = 3.0 * (1.0 - alpha) * sigma * v_inf_sq.sqrt() * (2.0 * (x + 2.0 * n.ln()) / d).sqrt();
        let kappa =
            6.0 * sigma * sigma_omega / d * (2.0 * std::f64::consts::E * (x + 2.0 * d.ln() + ell) / (t + 1.0)).sqrt();
        assert!((p.tau - tau).abs() <= 1e-12 * tau.max(1.0));
        assert!((p.gamma - gamma).abs() <= 1e-12 * gamma.max(1.0));
        assert!((p.kappa - kappa).abs() <= 1e-12 * kappa.max(1.0));
    }

    #[test]
    fn theorem3_increasing_in_x() {
        let seq = random_seq(6, 4, 4);
        let map = FeatureMap::from_cumulative_svd(&seq, 3).unwrap();
        let mut last = Penalties::zero();
        for x in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let p = theorem3_params(&map, &seq, 0.5, 0.3, x).unwrap();
            assert!(p.tau > last.tau && p.gamma > last.gamma && p.kappa > last.kappa);
            last = p;
        }
    }

    #[test]
    fn theorem3_rejects_bad_domain() {
        let seq = random_seq(4, 3, 5);
        let map = FeatureMap::from_cumulative_svd(&seq, 2).unwrap();
        assert!(theorem3_params(&map, &seq, 0.0, 0.5, 3.0).is_err());
        assert!(theorem3_params(&map, &seq, 0.5, 1.0, 3.0).is_err());
        assert!(theorem3_params(&map, &seq, 0.5, 0.5, -1.0).is_err());
    }

    #[test]
    fn folds_cover_off_diagonal_once() {
        let parts = fold_partition(4, 2, 7).unwrap();
        let mut all: Vec<(usize, usize)> = parts.concat();
        all.sort();
        let expected: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        assert_eq!(all, expected);
        assert_eq!(parts[0].len(), 6);
        assert_eq!(fold_partition(4, 2, 7).unwrap(), parts);
    }

    fn learnable() -> GraphSequence {
        generate(&GeneratorParams::new(15, 3, 5, 0.1, 8).unwrap())
            .unwrap()
            .sequence
    }

    #[test]
    fn single_cell_grid() {
        let seq = learnable();
        let problem = CvProblem {
            method: Method::StaticLowRank,
            seq: &seq,
            feature_rank: 3,
            solver: SolverConfig::default(),
            binarize_threshold: 1e-6,
        };
        let cell = Penalties::new(0.5, 0.0, 0.0, 0.5).unwrap();
        let out = cross_validate(&problem, &[cell], 3, 1).unwrap();
        assert_eq!(out.best, cell);
        assert_eq!(out.table.len(), 1);
    }

    #[test]
    fn dominated_cell_loses() {
        let seq = learnable();
        let problem = CvProblem {
            method: Method::AutoregressiveSparseLowRank,
            seq: &seq,
            feature_rank: 3,
            solver: SolverConfig::default(),
            binarize_threshold: 1e-6,
        };
        let moderate = Penalties::new(1e-3, 1e-3, 1e-3, 0.5).unwrap();
        let absurd = Penalties::new(1e6, 1e6, 1e6, 0.5).unwrap();
        let out = cross_validate(&problem, &[absurd, moderate], 4, 2).unwrap();
        assert_eq!(out.best, moderate);
        assert_eq!(out.table[0].mean_auc, 0.5);
        assert!(out.table[1].mean_auc > 0.5);
        let again = cross_validate(&problem, &[absurd, moderate], 4, 2).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn all_single_class_folds_fail() {
        let ones = Matrix::from_element(4, 4, 1.0);
        let seq = GraphSequence::new(vec![ones.clone(), ones]).unwrap();
        let problem = CvProblem {
            method: Method::StaticLowRank,
            seq: &seq,
            feature_rank: 2,
            solver: SolverConfig::default(),
            binarize_threshold: 1e-6,
        };
        let err = cross_validate(&problem, &[Penalties::zero()], 2, 1).unwrap_err();
        assert!(matches!(err, Error::AllFoldsSkipped { folds: 2 }));
    }

    #[test]
    fn grid_restricted_per_method() {
        let seq = learnable();
        let grid = GridConfig::default();
        let low = method_grid(Method::StaticLowRank, &grid, &seq, 3, 0.5).unwrap();
        assert_eq!(low.len(), 3);
        assert!(low.iter().all(|p| p.gamma == 0.0 && p.kappa == 0.0));
        let full = method_grid(Method::AutoregressiveSparseLowRank, &grid, &seq, 3, 0.5).unwrap();
        assert_eq!(full.len(), 9);
    }

    #[test]
    fn fit_vanishes_at_scale() {
        let seq = learnable();
        for method in [Method::StaticSparseLowRank, Method::AutoregressiveSparseLowRank] {
            let scale = penalty_scale(method, &seq, 3).unwrap();
            let just_above = Penalties {
                tau: scale.tau * 1.01,
                ..Penalties::zero()
            };
            let fit = method.fit(&seq, 3, &just_above, &SolverConfig::default()).unwrap();
            assert!(
                fit.scores.scores.amax() < 1e-3,
                "{method}: {}",
                fit.scores.scores.amax()
            );
        }
    }

    #[test]
    fn sigma_estimate_zero_on_exact_var() {
        // disjoint indicator columns keep every snapshot nonnegative
        let n = 6;
        let v = Matrix::from_fn(n, 2, |i, j| if i % 2 == j { (1.0f64 / 3.0).sqrt() } else { 0.0 });
        let w = Matrix::from_row_slice(2, 2, &[0.0, 0.8, 0.5, 0.0]);
        let mut u = Matrix::from_fn(n, 2, |i, j| 1.0 + (i + 2 * j) as f64);
        let mut snaps = Vec::new();
        for _ in 0..5 {
            snaps.push(&u * v.transpose());
            u = &u * &w;
        }
        let seq = GraphSequence::new(snaps).unwrap();
        let data = ProblemData::new(FeatureMap::right_projection(v).unwrap(), &seq).unwrap();
        assert!(estimate_sigma(&data).unwrap() < 1e-8);
        assert!((data.ols_transition().unwrap() - w).norm() < 1e-8);
    }

    #[test]
    fn concentration_zero_noise() {
        let seq = random_seq(6, 4, 10);
        let map = FeatureMap::from_cumulative_svd(&seq, 2).unwrap();
        let report = concentration_check(&map, &seq, 0.0, 3.0, 20, 1).unwrap();
        for r in &report.records {
            assert_eq!((r.bound, r.violations), (0.0, 0));
        }
    }

    #[test]
    fn concentration_bounds_scale_with_sigma() {
        let seq = random_seq(6, 4, 11);
        let map = FeatureMap::from_cumulative_svd(&seq, 2).unwrap();
        let r1 = concentration_check(&map, &seq, 0.5, 3.0, 10, 1).unwrap();
        let r2 = concentration_check(&map, &seq, 1.0, 3.0, 10, 1).unwrap();
        for (a, b) in r1.records.iter().zip(&r2.records) {
            assert_eq!(b.bound, 2.0 * a.bound);
        }
    }

    #[test]
    fn concentration_rates_within_caps() {
        let seq = random_seq(10, 5, 12);
        let map = FeatureMap::from_cumulative_svd(&seq, 3).unwrap();
        let report = concentration_check(&map, &seq, 0.5, 3.0, 1000, 13).unwrap();
        for r in &report.records {
            assert!(r.violations <= r.trials);
            assert!(r.within_tolerance(), "{r:?}");
        }
    }
}
