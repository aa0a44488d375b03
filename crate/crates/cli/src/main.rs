use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linkvar::baselines::{Method, MethodFit};
use linkvar::bench::{self, summarize};
use linkvar::features::FeatureMap;
use linkvar::generator::{generate, GeneratorParams, SyntheticDataset};
use linkvar::matio::{apply_overrides, read_matrix, write_matrix, ExperimentSpec, GraphSequence};
use linkvar::objective::Penalties;
use linkvar::solver::SolverConfig;
use linkvar::tuning::concentration_check;
use linkvar::{Error, Result};
use serde_json::json;

/// Joint graph prediction and VAR feature estimation.
#[derive(Debug, Parser)]
#[command(name = "linkvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; replaces the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Config override `dotted.key=value`; repeatable.
    #[arg(long = "override", value_name = "K=V", global = true)]
    overrides: Vec<String>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (needs --out).
    Generate,
    /// Fit one method on a dataset and write its estimates to --out.
    Fit {
        /// Dataset directory; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "autoregressive-sparse-low-rank")]
        method: String,
    },
    /// Write the link scores of a fit directory as MatrixMarket.
    Predict {
        /// Directory written by `fit`.
        #[arg(long)]
        fit: PathBuf,
    },
    /// Select penalties per the config's tuning policy.
    Tune {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Restrict to one method.
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the benchmark and write the per-run results CSV.
    Evaluate,
    /// Run the (T, rank) grid and write the sweep CSV.
    Sweep {
        /// Horizons; defaults to the config's `sweep.T_values`.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
        /// Ranks; defaults to the config's `sweep.rank_values`.
        #[arg(long, value_delimiter = ',')]
        ranks: Vec<usize>,
    },
    /// Monte-Carlo check of the noise concentration bounds.
    Diagnose {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Confidence level; defaults to the config's `theorem3.x`.
        #[arg(long)]
        x: Option<f64>,
        /// Noise level; defaults to the config's `sigma`.
        #[arg(long)]
        sigma: Option<f64>,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::UnknownMethod(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {jobs} workers: {e}")))?;
    }
    match &cli.command {
        Command::Generate => cmd_generate(&cli.common),
        Command::Fit { data, method } => cmd_fit(&cli.common, data.as_deref(), method),
        Command::Predict { fit } => cmd_predict(&cli.common, fit),
        Command::Tune { data, method } => cmd_tune(&cli.common, data.as_deref(), method.as_deref()),
        Command::Evaluate => cmd_evaluate(&cli.common),
        Command::Sweep { horizons, ranks } => cmd_sweep(&cli.common, horizons, ranks),
        Command::Diagnose { data, trials, x, sigma } => cmd_diagnose(&cli.common, data.as_deref(), *trials, *x, *sigma),
    }
}

fn load_spec(common: &Common) -> CliResult<ExperimentSpec> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut doc, &common.overrides)?;
    if let Some(seed) = common.seed {
        apply_overrides(&mut doc, &[format!("seed={seed}")])?;
    }
    Ok(ExperimentSpec::from_json_value(doc)?)
}

fn require_out(common: &Common) -> CliResult<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Failure::Usage("--out is required".into()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| {
            Failure::Runtime(Error::Io {
                path: p.to_path_buf(),
                source: e,
            })
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| {
                Failure::Runtime(Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })
            })
        }
    }
}

/// Writes via a temporary file when no path is given, then copies to stdout.
fn emit_file(path: Option<&Path>, write: impl FnOnce(&Path) -> Result<()>) -> CliResult<()> {
    match path {
        Some(p) => Ok(write(p)?),
        None => {
            let tmp = std::env::temp_dir().join(format!("linkvar-{}.out", std::process::id()));
            write(&tmp)?;
            let text = fs::read_to_string(&tmp).map_err(|e| {
                Failure::Runtime(Error::Io {
                    path: tmp.clone(),
                    source: e,
                })
            })?;
            let _ = fs::remove_file(&tmp);
            write_text(None, &text)
        }
    }
}

fn dataset_for(spec: &ExperimentSpec) -> Result<SyntheticDataset> {
    generate(&GeneratorParams::from_spec(spec, spec.seed)?)
}

fn sequence_for(spec: &ExperimentSpec, data: Option<&Path>) -> Result<GraphSequence> {
    match data {
        Some(dir) => GraphSequence::read_dir(dir),
        None => Ok(dataset_for(spec)?.sequence),
    }
}

fn cmd_generate(common: &Common) -> CliResult<()> {
    let spec = load_spec(common)?;
    let out = require_out(common)?;
    let ds = dataset_for(&spec)?;
    ds.write_dir(out)?;
    log::info!(
        "wrote {} snapshots of {}x{} to {} (clamped fraction {:.3})",
        ds.sequence.snapshots().len(),
        spec.n,
        spec.n,
        out.display(),
        ds.clamped_fraction
    );
    Ok(())
}

fn cmd_fit(common: &Common, data: Option<&Path>, method: &str) -> CliResult<()> {
    let spec = load_spec(common)?;
    let method: Method = method.parse()?;
    let out = require_out(common)?;
    let seq = sequence_for(&spec, data)?;
    let mut cv = Vec::new();
    let pen = bench::tune_method(&spec, method, &seq, spec.seed, &mut cv)?;
    let cfg = SolverConfig::from_settings(&spec.solver);
    let fitted = method.fit(&seq, spec.feature_rank(), &pen, &cfg)?;
    create_dir(out)?;
    write_fit_dir(out, method, &fitted)?;
    if let Some(path) = &spec.outputs.trace_csv {
        if let Some(fit) = &fitted.fit {
            fit.write_trace_csv(path)?;
        }
    }
    if let Some(path) = &spec.outputs.cv_csv {
        linkvar::tuning::write_cv_csv(&cv, path)?;
    }
    Ok(())
}

fn write_fit_dir(out: &Path, method: Method, fitted: &MethodFit) -> CliResult<()> {
    fitted.scores.write(&out.join("scores.mtx"))?;
    let mut record = json!({
        "method": method,
        "penalties": fitted.penalties,
    });
    if let Some(fit) = &fitted.fit {
        write_matrix(&fit.a_hat, &out.join("a_hat.mtx"))?;
        if !fit.w_hat.is_empty() {
            write_matrix(&fit.w_hat, &out.join("w_hat.mtx"))?;
        }
        fit.write_trace_csv(&out.join("trace.csv"))?;
        record["iterations"] = json!(fit.iterations);
        record["converged"] = json!(fit.converged);
        record["residual"] = json!(fit.residual);
        record["step_a"] = json!(fit.step_a);
        record["step_w"] = json!(fit.step_w);
        record["lipschitz"] = json!(fit.lipschitz);
        log::info!(
            "{method}: {} iterations, converged {}, residual {:e}",
            fit.iterations,
            fit.converged,
            fit.residual
        );
    }
    if let Some(map) = &fitted.map {
        map.write_dir(&out.join("features"))?;
    }
    let text = serde_json::to_string_pretty(&record).map_err(Error::from)? + "\n";
    write_text(Some(&out.join("fit.json")), &text)
}

fn cmd_predict(common: &Common, fit_dir: &Path) -> CliResult<()> {
    let record_path = fit_dir.join("fit.json");
    let text = fs::read_to_string(&record_path).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: record_path.clone(),
            source: e,
        })
    })?;
    let record: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    let method: Method = serde_json::from_value(record["method"].clone()).map_err(Error::from)?;
    let source = if method == Method::Nn {
        "scores.mtx"
    } else {
        "a_hat.mtx"
    };
    let scores = read_matrix(&fit_dir.join(source))?;
    emit_file(common.out.as_deref(), |p| write_matrix(&scores, p))
}

fn cmd_tune(common: &Common, data: Option<&Path>, method: Option<&str>) -> CliResult<()> {
    let spec = load_spec(common)?;
    let methods = match method {
        Some(m) => vec![m.parse::<Method>()?],
        None => spec.methods.clone(),
    };
    let seq = sequence_for(&spec, data)?;
    let mut cv = Vec::new();
    let mut chosen = serde_json::Map::new();
    for m in methods {
        let pen: Penalties = bench::tune_method(&spec, m, &seq, spec.seed, &mut cv)?;
        log::info!("{m}: tau {:e} gamma {:e} kappa {:e}", pen.tau, pen.gamma, pen.kappa);
        chosen.insert(m.name().to_string(), serde_json::to_value(pen).map_err(Error::from)?);
    }
    if let Some(path) = &spec.outputs.cv_csv {
        linkvar::tuning::write_cv_csv(&cv, path)?;
    }
    let text = serde_json::to_string_pretty(&json!({
        "policy": spec.tuning_policy(),
        "penalties": chosen,
    }))
    .map_err(Error::from)?
        + "\n";
    write_text(common.out.as_deref(), &text)
}

fn cmd_evaluate(common: &Common) -> CliResult<()> {
    let spec = load_spec(common)?;
    let out = bench::run_experiment_detailed(&spec)?;
    for s in summarize(&out.results) {
        eprintln!(
            "{:<32} mean AUC {:.4} ± {:.4} ({} runs, {} failed)",
            s.method.name(),
            s.mean_auc,
            s.ci_halfwidth,
            s.n_runs,
            s.n_failed
        );
    }
    if let Some(path) = &spec.outputs.cv_csv {
        linkvar::tuning::write_cv_csv(&out.cv, path)?;
    }
    let target = common.out.as_deref().or(spec.outputs.results_csv.as_deref());
    emit_file(target, |p| bench::write_results_csv(&out.results, p))
}

fn cmd_sweep(common: &Common, horizons: &[usize], ranks: &[usize]) -> CliResult<()> {
    let spec = load_spec(common)?;
    let (horizons, ranks) = match (&spec.sweep, horizons.is_empty(), ranks.is_empty()) {
        (_, false, false) => (horizons.to_vec(), ranks.to_vec()),
        (Some(s), h_empty, r_empty) => (
            if h_empty { s.horizons.clone() } else { horizons.to_vec() },
            if r_empty { s.ranks.clone() } else { ranks.to_vec() },
        ),
        (None, h_empty, r_empty) => (
            if h_empty { vec![spec.horizon] } else { horizons.to_vec() },
            if r_empty { vec![spec.r] } else { ranks.to_vec() },
        ),
    };
    let grid = bench::sweep_phase(&spec, &horizons, &ranks)?;
    for cell in &grid.cells {
        for s in &cell.summary {
            eprintln!(
                "T={:<3} r={:<3} {:<32} mean AUC {:.4} ± {:.4}",
                cell.horizon,
                cell.rank,
                s.method.name(),
                s.mean_auc,
                s.ci_halfwidth
            );
        }
    }
    if let Some(path) = &spec.outputs.cv_csv {
        linkvar::tuning::write_cv_csv(&grid.cv, path)?;
    }
    let target = common.out.as_deref().or(spec.outputs.sweep_csv.as_deref());
    emit_file(target, |p| bench::write_sweep_csv(&grid, p))
}

fn cmd_diagnose(
    common: &Common,
    data: Option<&Path>,
    trials: usize,
    x: Option<f64>,
    sigma: Option<f64>,
) -> CliResult<()> {
    let spec = load_spec(common)?;
    let seq = sequence_for(&spec, data)?;
    let map = FeatureMap::from_cumulative_svd(&seq, spec.feature_rank())?;
    let sigma = sigma.unwrap_or(spec.sigma);
    let x = x.unwrap_or(spec.theorem3.x);
    let report = concentration_check(&map, &seq, sigma, x, trials, spec.seed)?;
    for r in &report.records {
        eprintln!(
            "{:<10} bound {:.4e} violations {}/{} rate {:.4} cap {:.4} {}",
            r.name,
            r.bound,
            r.violations,
            r.trials,
            r.rate,
            r.cap,
            if r.within_tolerance() { "ok" } else { "EXCEEDED" }
        );
    }
    emit_file(common.out.as_deref(), |p| report.write_csv(p))
}
