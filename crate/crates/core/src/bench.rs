//! AUC scoring, experiment orchestration and CSV output.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{Method, ScoreMatrix};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::generator::{generate, GeneratorParams, SyntheticDataset};
use crate::matio::{ExperimentSpec, TuningPolicy};
use crate::objective::{Penalties, ProblemData};
use crate::rng::run_seed;
use crate::solver::SolverConfig;
use crate::tuning::{cross_validate, estimate_sigma, method_grid, theorem3_params, CvProblem, CvRow};
use crate::Matrix;

/// Version tag written in every CSV row.
pub const SCHEMA_VERSION: u32 = 1;

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs in which
/// the positive scores higher, ties counting one half.
pub fn auc_from_labels(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores", "contain NaN"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += midrank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// AUC of `scores` against `truth > binarize_threshold`, over off-diagonal
/// positions unless the score matrix includes the diagonal.
pub fn auc(scores: &ScoreMatrix, truth: &Matrix, binarize_threshold: f64) -> Result<f64> {
    let n = scores.n();
    if truth.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "scores are {n}x{n}, truth is {:?}",
            truth.shape()
        )));
    }
    let mut s = Vec::with_capacity(n * n);
    let mut labels = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            if i != j || scores.include_diagonal {
                s.push(scores.scores[(i, j)]);
                labels.push(truth[(i, j)] > binarize_threshold);
            }
        }
    }
    auc_from_labels(&s, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    pub horizon: usize,
    pub rank: usize,
    /// `None` when the run failed; see `error`.
    pub auc: Option<f64>,
    pub error: Option<String>,
    pub penalties: Option<Penalties>,
    /// Seconds; logged but kept out of CSV output.
    pub wall_time: f64,
}

/// Results plus the cross-validation tables that produced the penalties.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub results: Vec<RunResult>,
    pub cv: Vec<(u64, CvRow)>,
}

/// Chooses penalties for one method on one sequence per the spec's policy.
/// `theorem3` weights exist only for the autoregressive methods; the static
/// ones fall back to cross-validation.
pub fn tune_method(
    spec: &ExperimentSpec,
    method: Method,
    ds_seq: &crate::matio::GraphSequence,
    seed: u64,
    cv: &mut Vec<(u64, CvRow)>,
) -> Result<Penalties> {
    let feature_rank = spec.feature_rank();
    let alpha = spec.fixed_penalties().alpha;
    if !method.is_penalized() {
        return Ok(Penalties::zero());
    }
    let policy = spec.tuning_policy();
    match policy {
        TuningPolicy::Fixed => Ok(method.restrict(&Penalties::try_from(spec.fixed_penalties())?)),
        TuningPolicy::Theorem3 if method.is_autoregressive() => {
            let map = FeatureMap::from_cumulative_svd(ds_seq, feature_rank)?;
            let sigma = match spec.theorem3.sigma {
                Some(s) => s,
                None => estimate_sigma(&ProblemData::new(map.clone(), ds_seq)?)?,
            };
            let pen = theorem3_params(&map, ds_seq, sigma, alpha, spec.theorem3.x)?;
            Ok(method.restrict(&pen))
        }
        TuningPolicy::Theorem3 | TuningPolicy::Cv => {
            let grid = method_grid(method, &spec.grid, ds_seq, feature_rank, alpha)?;
            let problem = CvProblem {
                method,
                seq: ds_seq,
                feature_rank,
                solver: SolverConfig::from_settings(&spec.solver),
                binarize_threshold: spec.binarize_threshold,
            };
            let outcome = cross_validate(&problem, &grid, spec.cv_folds, seed)?;
            cv.extend(outcome.table.into_iter().map(|row| (seed, row)));
            Ok(outcome.best)
        }
    }
}

fn evaluate_method(
    spec: &ExperimentSpec,
    method: Method,
    ds: &SyntheticDataset,
    seed: u64,
    cv: &mut Vec<(u64, CvRow)>,
) -> Result<(f64, Penalties)> {
    let pen = tune_method(spec, method, &ds.sequence, seed, cv)?;
    let cfg = SolverConfig::from_settings(&spec.solver);
    let scores = method
        .score(&ds.sequence, spec.feature_rank(), &pen, &cfg)?
        .with_diagonal(spec.include_diagonal);
    Ok((auc(&scores, &ds.truth.a_next, spec.binarize_threshold)?, pen))
}

/// All methods on the dataset of one run.
pub fn evaluate_run(spec: &ExperimentSpec, run: usize) -> (Vec<RunResult>, Vec<(u64, CvRow)>) {
    let seed = run_seed(spec.seed, run as u64);
    let mut cv = Vec::new();
    let dataset = GeneratorParams::from_spec(spec, seed).and_then(|p| generate(&p));
    let results = spec
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = dataset
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|ds| evaluate_method(spec, method, ds, seed, &mut cv).map_err(|e| e.to_string()));
            let wall_time = start.elapsed().as_secs_f64();
            let (auc, penalties, error) = match outcome {
                Ok((a, p)) => (Some(a), Some(p), None),
                Err(e) => {
                    log::warn!("run {run} (seed {seed}) {method}: {e}");
                    (None, None, Some(e))
                }
            };
            log::info!(
                "T={} r={} run {run} {method}: auc {} ({wall_time:.2}s)",
                spec.horizon,
                spec.r,
                auc.map_or("failed".to_string(), |a| format!("{a:.4}"))
            );
            RunResult {
                method,
                run,
                seed,
                horizon: spec.horizon,
                rank: spec.r,
                auc,
                error,
                penalties,
                wall_time,
            }
        })
        .collect();
    (results, cv)
}

/// Generates, tunes, fits and scores every method on `spec.runs` datasets
/// with seeds `master ^ run`. Output order is run-major, then method order,
/// whatever the thread schedule.
pub fn run_experiment_detailed(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let per_run: Vec<_> = (0..spec.runs)
        .into_par_iter()
        .map(|run| evaluate_run(spec, run))
        .collect();
    let mut out = ExperimentOutput::default();
    for (results, cv) in per_run {
        out.results.extend(results);
        out.cv.extend(cv);
    }
    Ok(out)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunResult>> {
    Ok(run_experiment_detailed(spec)?.results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub mean_auc: f64,
    /// `1.96 sd / √k` over the `k` successful runs.
    pub ci_halfwidth: f64,
    pub n_runs: usize,
    pub n_failed: usize,
}

/// Per-method aggregates in registry order; failed runs are counted, not averaged.
pub fn summarize(results: &[RunResult]) -> Vec<Summary> {
    Method::all()
        .into_iter()
        .filter(|m| results.iter().any(|r| r.method == *m))
        .map(|method| {
            let aucs: Vec<f64> = results
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| r.auc)
                .collect();
            let failed = results.iter().filter(|r| r.method == method && r.auc.is_none()).count();
            let k = aucs.len() as f64;
            let mean = if aucs.is_empty() {
                f64::NAN
            } else {
                aucs.iter().sum::<f64>() / k
            };
            let ci = if aucs.len() < 2 {
                0.0
            } else {
                let var = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0);
                1.96 * var.sqrt() / k.sqrt()
            };
            Summary {
                method,
                mean_auc: mean,
                ci_halfwidth: ci,
                n_runs: aucs.len(),
                n_failed: failed,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub horizon: usize,
    pub rank: usize,
    pub results: Vec<RunResult>,
    pub summary: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub horizons: Vec<usize>,
    pub ranks: Vec<usize>,
    /// Horizon-major order.
    pub cells: Vec<SweepCell>,
    pub cv: Vec<(u64, CvRow)>,
}

impl SweepGrid {
    pub fn cell(&self, horizon: usize, rank: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.horizon == horizon && c.rank == rank)
    }

    pub fn mean_auc(&self, horizon: usize, rank: usize, method: Method) -> Option<f64> {
        self.cell(horizon, rank)?
            .summary
            .iter()
            .find(|s| s.method == method)
            .map(|s| s.mean_auc)
    }
}

/// Full factorial over `(T, r)`; every cell repeats the spec's runs with
/// the same seeds, and the feature rank follows `r` unless set explicitly.
pub fn sweep_phase(spec: &ExperimentSpec, horizons: &[usize], ranks: &[usize]) -> Result<SweepGrid> {
    if horizons.is_empty() || ranks.is_empty() {
        return Err(Error::param("sweep", "T_values and rank_values must be nonempty"));
    }
    let cell_specs: Vec<ExperimentSpec> = horizons
        .iter()
        .flat_map(|&t| {
            ranks.iter().map(move |&r| ExperimentSpec {
                horizon: t,
                r,
                sweep: None,
                ..spec.clone()
            })
        })
        .collect();
    for s in &cell_specs {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..cell_specs.len())
        .flat_map(|c| (0..spec.runs).map(move |run| (c, run)))
        .collect();
    let outputs: Vec<_> = jobs
        .par_iter()
        .map(|&(c, run)| evaluate_run(&cell_specs[c], run))
        .collect();
    let mut cells: Vec<SweepCell> = cell_specs
        .iter()
        .map(|s| SweepCell {
            horizon: s.horizon,
            rank: s.r,
            results: Vec::new(),
            summary: Vec::new(),
        })
        .collect();
    let mut cv = Vec::new();
    for (&(c, _), (results, rows)) in jobs.iter().zip(outputs) {
        cells[c].results.extend(results);
        cv.extend(rows);
    }
    for cell in &mut cells {
        cell.summary = summarize(&cell.results);
    }
    Ok(SweepGrid {
        horizons: horizons.to_vec(),
        ranks: ranks.to_vec(),
        cells,
        cv,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:e}"))
}

/// One row per (run, method): penalties, AUC and any failure message.
pub fn write_results_csv(results: &[RunResult], path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record([
        "schema_version",
        "run",
        "seed",
        "T",
        "rank",
        "method",
        "auc",
        "tau",
        "gamma",
        "kappa",
        "error",
    ])?;
    for r in results {
        out.write_record([
            SCHEMA_VERSION.to_string(),
            r.run.to_string(),
            r.seed.to_string(),
            r.horizon.to_string(),
            r.rank.to_string(),
            r.method.name().to_string(),
            fmt_opt(r.auc),
            fmt_opt(r.penalties.map(|p| p.tau)),
            fmt_opt(r.penalties.map(|p| p.gamma)),
            fmt_opt(r.penalties.map(|p| p.kappa)),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// One row per (T, rank, method) cell.
pub fn write_sweep_csv(grid: &SweepGrid, path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record([
        "schema_version",
        "T",
        "rank",
        "method",
        "mean_auc",
        "ci_halfwidth",
        "n_runs",
        "n_failed",
    ])?;
    for cell in &grid.cells {
        for s in &cell.summary {
            out.write_record([
                SCHEMA_VERSION.to_string(),
                cell.horizon.to_string(),
                cell.rank.to_string(),
                s.method.name().to_string(),
                format!("{:e}", s.mean_auc),
                format!("{:e}", s.ci_halfwidth),
                s.n_runs.to_string(),
                s.n_failed.to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matio::PenaltyConfig;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;

    fn pair_count(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    fn score_matrix(m: Matrix) -> ScoreMatrix {
        ScoreMatrix::new(m).unwrap()
    }

    #[test]
    fn perfect_and_inverted_rankings() {
        let truth = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0]);
        assert_eq!(auc(&score_matrix(truth.clone()), &truth, 1e-6).unwrap(), 1.0);
        assert_eq!(auc(&score_matrix(-truth.clone()), &truth, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let truth = Matrix::zeros(3, 3);
        let err = auc(&score_matrix(Matrix::zeros(3, 3)), &truth, 1e-6).unwrap_err();
        assert!(matches!(err, Error::SingleClass));
    }

    #[test]
    fn diagonal_excluded_by_default() {
        let truth = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let scores = Matrix::from_row_slice(2, 2, &[-5.0, 1.0, 0.0, 9.0]);
        assert_eq!(auc(&score_matrix(scores.clone()), &truth, 1e-6).unwrap(), 1.0);
        let with = score_matrix(scores).with_diagonal(true);
        assert!(auc(&with, &truth, 1e-6).unwrap() < 1.0);
    }

    #[test]
    fn matches_pair_count_with_ties() {
        let mut rng = stream(1, Purpose::Test);
        for _ in 0..50 {
            let n = rng.random_range(3..9);
            let truth = Matrix::from_fn(n, n, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
            let scores = Matrix::from_fn(n, n, |_, _| rng.random_range(0..4) as f64);
            let (mut s, mut l) = (Vec::new(), Vec::new());
            for j in 0..n {
                for i in 0..n {
                    if i != j {
                        s.push(scores[(i, j)]);
                        l.push(truth[(i, j)] > 1e-6);
                    }
                }
            }
            if l.iter().all(|&x| x) || l.iter().all(|&x| !x) {
                continue;
            }
            let got = auc(&score_matrix(scores), &truth, 1e-6).unwrap();
            assert!((got - pair_count(&s, &l)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn invariant_under_increasing_transform(
            data in prop::collection::vec((0.0f64..10.0, any::<bool>()), 4..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 + 1.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
            prop_assert_eq!(auc_from_labels(&scores, &labels).unwrap(), auc_from_labels(&cubed, &labels).unwrap());
        }

        #[test]
        fn negation_complements(
            data in prop::collection::vec((-1e3f64..1e3, any::<bool>()), 4..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let sum = auc_from_labels(&scores, &labels).unwrap() + auc_from_labels(&neg, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    fn small_spec(methods: Vec<Method>) -> ExperimentSpec {
        let mut spec =
            ExperimentSpec::from_json_str(r#"{"n": 12, "r": 2, "T": 4, "sigma": 0.3, "runs": 3, "seed": 5}"#).unwrap();
        spec.methods = methods;
        spec
    }

    #[test]
    fn nn_runs_are_reproducible() {
        let spec = small_spec(vec![Method::Nn]);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.len(), 3);
        let strip = |v: Vec<RunResult>| {
            v.into_iter()
                .map(|r| (r.seed, r.auc.map(f64::to_bits)))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn noiseless_proposed_method_is_perfect() {
        let mut spec = small_spec(vec![Method::AutoregressiveSparseLowRank]);
        spec.n = 20;
        spec.r = 3;
        spec.horizon = 6;
        spec.sigma = 0.0;
        spec.nonnegative_factors = true;
        spec.penalties = Some(PenaltyConfig {
            tau: 1e-6,
            gamma: 1e-9,
            kappa: 1e-6,
            alpha: 0.5,
        });
        spec.solver.tol = 1e-9;
        spec.solver.max_iter = 100_000;
        for r in run_experiment(&spec).unwrap() {
            assert_eq!(r.auc, Some(1.0), "{r:?}");
        }
    }

    #[test]
    fn one_cell_sweep_matches_experiment() {
        let spec = small_spec(vec![Method::Nn, Method::StaticLowRank]);
        let grid = sweep_phase(&spec, &[4], &[2]).unwrap();
        let direct = run_experiment(&spec).unwrap();
        assert_eq!(grid.cells.len(), 1);
        assert_eq!(grid.cells[0].summary, summarize(&direct));
    }

    #[test]
    fn summary_counts_failures() {
        let ok = |auc: f64| RunResult {
            method: Method::Nn,
            run: 0,
            seed: 0,
            horizon: 1,
            rank: 1,
            auc: Some(auc),
            error: None,
            penalties: None,
            wall_time: 0.0,
        };
        let failed = RunResult {
            auc: None,
            error: Some("x".into()),
            ..ok(0.0)
        };
        let s = summarize(&[ok(0.6), ok(0.8), failed]);
        assert_eq!(s.len(), 1);
        assert!((s[0].mean_auc - 0.7).abs() < 1e-15);
        assert_eq!((s[0].n_runs, s[0].n_failed), (2, 1));
        let sd = (2.0f64 * 0.01).sqrt();
        assert!((s[0].ci_halfwidth - 1.96 * sd / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_outputs_are_stable() {
        let spec = small_spec(vec![Method::Nn]);
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_results_csv(&run_experiment(&spec).unwrap(), &p1).unwrap();
        write_results_csv(&run_experiment(&spec).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(text.starts_with("schema_version,run,seed,T,rank,method,auc"));
    }
}
