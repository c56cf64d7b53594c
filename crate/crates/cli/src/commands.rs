use std::fs;
use std::path::{Path, PathBuf};

use mfk_core::sequential::{run_loop, EnrichmentTrace, LoopSettings, StopReason};
use mfk_core::testbed::io::{self, Bounds};
use mfk_core::{CostModel, Domain, Error, MultiFidelityModel, Quadrature, Result, Search};
use serde::Serialize;

use crate::config::RunConfig;
use crate::setup::Setup;

pub const FIT_REPORT: &str = "fit_report.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const TRACE: &str = "trace.csv";
pub const STATUS: &str = "status.json";
pub const FINAL_MODEL_DIR: &str = "model";
pub const IMSE_VS_COST: &str = "imse_vs_cost.csv";
pub const LEVEL_HISTOGRAM: &str = "level_histogram.csv";

/// Failures of a command; [`CliError::exit_code`] maps them to the process status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    /// The sequential run stopped before its budget was spent; the partial trace is on disk.
    #[error("sequential run incomplete after {iterations} iterations: {reason}")]
    Incomplete {
        iterations: usize,
        reason: String,
        numerical: bool,
    },
}

impl CliError {
    /// 0 success, 1 validation or config error, 2 numerical failure, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 3,
            CliError::Core(Error::Simulator { .. }) => 3,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
            CliError::Incomplete {
                numerical: true, ..
            } => 2,
            CliError::Incomplete { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Progress messages on standard error unless quiet.
#[derive(Debug, Clone, Copy)]
pub struct Reporter {
    pub quiet: bool,
}

impl Reporter {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Serialize)]
struct LevelReport {
    level: usize,
    points: usize,
    kernel: &'static str,
    lengthscales: Vec<f64>,
    sigma2: f64,
    beta: Vec<f64>,
    beta_rho: Option<Vec<f64>>,
    neg_log_likelihood: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    seed: u64,
    levels: Vec<LevelReport>,
}

fn fit_report(model: &MultiFidelityModel, seed: u64) -> FitReport {
    FitReport {
        seed,
        levels: model
            .levels()
            .iter()
            .map(|l| LevelReport {
                level: l.level(),
                points: model.data().design(l.level()).len(),
                kernel: l.kernel().family.name(),
                lengthscales: l.lengthscales().to_vec(),
                sigma2: l.sigma2(),
                beta: l.beta().to_vec(),
                beta_rho: l.beta_rho().map(<[f64]>::to_vec),
                neg_log_likelihood: l.neg_log_likelihood(),
            })
            .collect(),
    }
}

fn fit_model(cfg: &RunConfig, log: Reporter) -> Result<(Setup, MultiFidelityModel)> {
    let setup = Setup::from_config(cfg)?;
    log.note(format!(
        "fitting {} levels on {:?} points",
        setup.data.levels(),
        setup
            .data
            .designs()
            .iter()
            .map(Vec::len)
            .collect::<Vec<_>>()
    ));
    let model = MultiFidelityModel::fit(setup.data.clone(), setup.configs.clone(), &setup.fit)?;
    Ok((setup, model))
}

/// Fits the configured model; writes the model files and `fit_report.json` into `out`.
pub fn cmd_fit(cfg: &RunConfig, out: &Path, log: Reporter) -> CliResult<()> {
    let (setup, model) = fit_model(cfg, log)?;
    create_dir(out)?;
    io::save_model_in(&model, Some(&setup.domain), out)?;
    write_json(&out.join(FIT_REPORT), &fit_report(&model, cfg.seed))?;
    for l in model.levels() {
        log.note(format!(
            "level {}: sigma2 = {:.4e}, theta = {:?}",
            l.level(),
            l.sigma2(),
            l.lengthscales()
        ));
    }
    log.note(format!("model written to {}", out.display()));
    Ok(())
}

pub enum Probes {
    Points(PathBuf),
    Grid(usize),
}

fn grid(domain: &Domain, n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for (lo, hi) in domain.lower.iter().zip(&domain.upper) {
        let axis: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Predicts at the probes; writes `predictions.csv` with per-level means, variances and
/// contributions to the top-level variance.
pub fn cmd_predict(model_dir: &Path, probes: &Probes, out: &Path, log: Reporter) -> CliResult<()> {
    let sidecar = io::read_sidecar(model_dir)?;
    let model = io::model_from_sidecar(model_dir, &sidecar)?;
    let d = model.dim();
    let s = model.level_count();
    let points = match probes {
        Probes::Points(path) => {
            let (dim, pts) = io::read_points(path)?;
            if dim != d {
                return Err(Error::Validation(format!(
                    "{} has {dim} columns but the model has dimension {d}",
                    path.display()
                ))
                .into());
            }
            pts
        }
        Probes::Grid(n) => {
            if *n == 0 {
                return Err(
                    Error::Validation("--grid needs at least one node per axis".into()).into(),
                );
            }
            let domain = match &sidecar.domain {
                Some(b) => b.domain()?,
                None => Bounds {
                    lower: (0..d)
                        .map(|k| {
                            model
                                .data()
                                .design(1)
                                .iter()
                                .map(|x| x[k])
                                .fold(f64::INFINITY, f64::min)
                        })
                        .collect(),
                    upper: (0..d)
                        .map(|k| {
                            model
                                .data()
                                .design(1)
                                .iter()
                                .map(|x| x[k])
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect(),
                }
                .domain()?,
            };
            grid(&domain, *n)
        }
    };
    create_dir(out)?;
    let path = out.join(PREDICTIONS);
    let mut w = csv_writer(&path)?;
    let mut header = io::design_header(d);
    for prefix in ["mean", "var", "contrib"] {
        header.extend((1..=s).map(|t| format!("{prefix}_{t}")));
    }
    w.write_record(&header).map_err(|e| csv_io(&path, e))?;
    for x in &points {
        let b = model.predict(x)?;
        let total = b.variance();
        let sum: f64 = b.contributions.iter().sum();
        if (sum - total).abs() > 1e-10 * (1.0 + total) {
            return Err(Error::InternalConsistency(format!(
                "contributions sum to {sum:e}, top variance is {total:e} at {x:?}"
            ))
            .into());
        }
        let row: Vec<String> = x
            .iter()
            .chain(&b.means)
            .chain(&b.variances)
            .chain(&b.contributions)
            .map(|v| float(*v))
            .collect();
        w.write_record(&row).map_err(|e| csv_io(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    log.note(format!(
        "{} predictions written to {}",
        points.len(),
        path.display()
    ));
    Ok(())
}

#[derive(Debug, Serialize)]
struct Status {
    complete: bool,
    stop: StopReason,
    iterations: usize,
    budget: f64,
    cum_cost: f64,
    initial_imse: f64,
    final_imse: f64,
}

fn with_seed_search(search: Search, seed: u64) -> Search {
    match search {
        Search::Random { n, .. } => Search::Random { n, seed },
        Search::MultistartLocal {
            candidates, starts, ..
        } => Search::MultistartLocal {
            candidates,
            starts,
            seed,
        },
        grid => grid,
    }
}

fn with_seed_quadrature(q: Quadrature, seed: u64) -> Quadrature {
    match q {
        Quadrature::MonteCarlo { n, .. } => Quadrature::MonteCarlo { n, seed },
        grid => grid,
    }
}

/// Fits the initial model, runs the enrichment loop, and writes `trace.csv`,
/// `status.json` and the final model (under `model/`).
pub fn cmd_sequential(cfg: &RunConfig, out: &Path, log: Reporter) -> CliResult<()> {
    let seq = cfg.sequential()?;
    if !(seq.budget > 0.0 && seq.budget.is_finite()) {
        return Err(Error::Validation(format!(
            "sequential.budget must be positive, got {}",
            seq.budget
        ))
        .into());
    }
    let (setup, model) = fit_model(cfg, log)?;
    let cost = setup.costs(cfg)?;
    let code = setup.code.as_ref().ok_or_else(|| {
        Error::Validation("the sequential loop needs problem.builtin or problem.command".into())
    })?;
    let d = setup.domain.dim();
    let settings = LoopSettings {
        budget: seq.budget,
        rule: seq.rule,
        search: seq
            .search
            .clone()
            .unwrap_or_else(|| with_seed_search(Search::default_for(d), cfg.seed)),
        quadrature: seq
            .quadrature
            .clone()
            .unwrap_or_else(|| with_seed_quadrature(Quadrature::default_for(d), cfg.seed)),
        refit: seq.refit,
        fit: setup.fit.clone(),
    };
    let outcome = run_loop(model, &setup.domain, &cost, &settings, code.simulator())?;
    create_dir(out)?;
    let trace_path = out.join(TRACE);
    let file = fs::File::create(&trace_path).map_err(|e| io_err(&trace_path, e))?;
    outcome.trace.write_csv(file)?;
    let model_dir = out.join(FINAL_MODEL_DIR);
    create_dir(&model_dir)?;
    io::save_model_in(&outcome.model, Some(&setup.domain), &model_dir)?;
    let rows = &outcome.trace.rows;
    let status = Status {
        complete: outcome.trace.is_complete(),
        stop: outcome.trace.stop.clone(),
        iterations: rows.len(),
        budget: seq.budget,
        cum_cost: rows.last().map_or(0.0, |r| r.cum_cost),
        initial_imse: outcome.initial_imse,
        final_imse: rows.last().map_or(outcome.initial_imse, |r| r.imse_after),
    };
    write_json(&out.join(STATUS), &status)?;
    log.note(format!(
        "{} iterations, cost {} of {}, IMSE {:.4e} -> {:.4e}",
        status.iterations, status.cum_cost, status.budget, status.initial_imse, status.final_imse
    ));
    match &outcome.trace.stop {
        StopReason::SimulatorFailed(msg) => Err(CliError::Incomplete {
            iterations: rows.len(),
            reason: format!("simulator failed: {msg}"),
            numerical: false,
        }),
        StopReason::UpdateFailed(msg) => Err(CliError::Incomplete {
            iterations: rows.len(),
            reason: format!("model update failed: {msg}"),
            numerical: true,
        }),
        StopReason::Budget | StopReason::Saturated => Ok(()),
    }
}

/// Checks the trace's cost column: against `costs` when given, otherwise for
/// internal consistency (nondecreasing, same increment for the same level).
fn check_costs(trace: &EnrichmentTrace, costs: Option<&CostModel>, path: &Path) -> Result<()> {
    let tol = |a: f64| 1e-9 * (1.0 + a.abs());
    let mut prev = 0.0;
    let mut step_for_level: Vec<Option<f64>> = vec![None; trace.levels];
    for row in &trace.rows {
        let step = row.cum_cost - prev;
        let bad = |why: String| {
            Error::Validation(format!("{}: iteration {}: {why}", path.display(), row.iter))
        };
        if step < -tol(prev) {
            return Err(bad(format!(
                "cumulative cost decreases to {}",
                row.cum_cost
            )));
        }
        match costs {
            Some(c) => {
                let expected = prev + c.through(row.level);
                if (row.cum_cost - expected).abs() > tol(expected) {
                    return Err(bad(format!(
                        "cumulative cost {} but the levels run add up to {expected}",
                        row.cum_cost
                    )));
                }
            }
            None => match step_for_level[row.level - 1] {
                Some(s) if (s - step).abs() > tol(s) => {
                    return Err(bad(format!(
                        "level {} costs {step} here but {s} earlier",
                        row.level
                    )))
                }
                _ => step_for_level[row.level - 1] = Some(step),
            },
        }
        prev = row.cum_cost;
    }
    Ok(())
}

/// Writes `imse_vs_cost.csv` and `level_histogram.csv` from a trace.
pub fn cmd_report(
    trace_path: &Path,
    cfg: Option<&RunConfig>,
    out: &Path,
    log: Reporter,
) -> CliResult<()> {
    let file = fs::File::open(trace_path).map_err(|e| io_err(trace_path, e))?;
    let trace = EnrichmentTrace::read_csv(file, trace_path)?;
    let costs = match cfg {
        Some(c) => {
            let seq = c.sequential()?;
            let raw = match (&seq.costs, &c.problem.builtin) {
                (Some(v), _) => v.clone(),
                (None, Some(name)) => {
                    mfk_core::testbed::builtin_problem(name)
                        .ok_or_else(|| {
                            Error::Validation(format!("unknown built-in problem {name:?}"))
                        })?
                        .costs
                }
                (None, None) => {
                    return Err(Error::Validation("sequential.costs is required".into()).into())
                }
            };
            if raw.len() != trace.levels {
                return Err(Error::Validation(format!(
                    "config has {} costs, trace has {} levels",
                    raw.len(),
                    trace.levels
                ))
                .into());
            }
            Some(CostModel::new(raw)?)
        }
        None => None,
    };
    check_costs(&trace, costs.as_ref(), trace_path)?;
    create_dir(out)?;

    let path = out.join(IMSE_VS_COST);
    let mut w = csv_writer(&path)?;
    w.write_record(["iter", "cum_cost", "imse"])
        .map_err(|e| csv_io(&path, e))?;
    if let Some(first) = trace.rows.first() {
        w.write_record(["0".to_string(), float(0.0), float(first.imse_before)])
            .map_err(|e| csv_io(&path, e))?;
    }
    for row in &trace.rows {
        w.write_record([
            row.iter.to_string(),
            float(row.cum_cost),
            float(row.imse_after),
        ])
        .map_err(|e| csv_io(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let path = out.join(LEVEL_HISTOGRAM);
    let mut w = csv_writer(&path)?;
    w.write_record(["level", "count"])
        .map_err(|e| csv_io(&path, e))?;
    if !trace.rows.is_empty() {
        for level in 1..=trace.levels {
            let count = trace.rows.iter().filter(|r| r.level == level).count();
            w.write_record([level.to_string(), count.to_string()])
                .map_err(|e| csv_io(&path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    log.note(format!(
        "report for {} iterations written to {}",
        trace.rows.len(),
        out.display()
    ));
    Ok(())
}
