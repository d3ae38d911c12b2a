//! Experiment runner: builds or loads a dataset, estimates the optimal value,
//! runs each (solver, seed) pair and records convergence metrics.
//!
//! Timing covers solver work only. The clock is stopped while the full-data
//! objective and fidelity are evaluated for a logged iterate.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::{batch_mirror_step, rpr_step, BATCH_MD_ETA};
use crate::error::{Error, Result};
use crate::model::{fidelity_pure, nll, DensityMatrix, ShotDataset};
use crate::smd::{step_size_for_horizon, Iterate, SmdBurg, SolverConfig, DEFAULT_NEWTON_EPS};
use crate::synthetic::{generate, read_dataset, PauliSchedule, PureState, TrueState};

pub const CSV_HEADER: [&str; 7] = [
    "solver",
    "seed",
    "epoch",
    "f_value",
    "approx_opt_error",
    "fidelity",
    "elapsed_seconds",
];

/// Ratio between consecutive logged iterate indices of a stochastic run.
pub const LOG_GROWTH: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "smd-burg")]
    SmdBurg,
    #[serde(rename = "rpr")]
    Rpr,
    #[serde(rename = "batch-md")]
    BatchMd,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::SmdBurg, SolverKind::Rpr, SolverKind::BatchMd];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::SmdBurg => "smd-burg",
            SolverKind::Rpr => "rpr",
            SolverKind::BatchMd => "batch-md",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, SolverKind::SmdBurg)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = SolverKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!(
                    "unknown solver {s:?}; valid solvers: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// JSON-configurable description of one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Register size of the generated W-state dataset (ignored when `data` is set).
    #[serde(default)]
    pub qubits: usize,
    /// Total shot count `n`.
    #[serde(default)]
    pub shots: Option<u64>,
    /// Alternative to `shots`: `n = 4^q * shots_per_setting`.
    #[serde(default)]
    pub shots_per_setting: Option<u64>,
    /// Load this dataset file instead of generating one.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub exhaustive: bool,
    pub solvers: Vec<SolverKind>,
    pub epochs: u64,
    pub seeds: Vec<u64>,
    /// Step-size override for smd-burg and batch-md.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_newton_eps")]
    pub newton_eps: f64,
    /// Epoch budget of the optimal-value estimate; defaults to `epochs`.
    #[serde(default)]
    pub fstar_epochs: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_newton_eps() -> f64 {
    DEFAULT_NEWTON_EPS
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must not be empty"));
        }
        if self.solvers.is_empty() {
            return Err(Error::invalid("solvers must not be empty"));
        }
        if !(self.newton_eps > 0.0) {
            return Err(Error::invalid("newton_eps must be positive"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::invalid(format!("eta must be positive, got {eta}")));
            }
        }
        if self.data.is_none() {
            if self.qubits == 0 {
                return Err(Error::invalid("qubits must be at least 1"));
            }
            match (self.shots, self.shots_per_setting) {
                (Some(_), Some(_)) => {
                    return Err(Error::invalid(
                        "set only one of shots and shots_per_setting",
                    ))
                }
                (None, None) => {
                    return Err(Error::invalid(
                        "one of shots or shots_per_setting is required",
                    ))
                }
                (Some(0), _) | (_, Some(0)) => {
                    return Err(Error::invalid("shot count must be positive"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn total_shots(&self) -> Result<u64> {
        match (self.shots, self.shots_per_setting) {
            (Some(n), _) => Ok(n),
            (None, Some(k)) => 4u64
                .checked_pow(self.qubits as u32)
                .and_then(|s| s.checked_mul(k))
                .ok_or_else(|| Error::invalid("shot count overflows")),
            (None, None) => Err(Error::invalid(
                "one of shots or shots_per_setting is required",
            )),
        }
    }
}

/// A dataset ready for solving, with the optional pure target state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: ShotDataset,
    pub target: Option<PureState>,
}

impl Problem {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = read_dataset(std::fs::File::open(path)?)?;
        Ok(Self {
            data: file.to_dataset()?,
            target: file.true_state()?,
        })
    }
}

/// Solver parameters shared by all runs of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub epochs: u64,
    pub eta: Option<f64>,
    pub newton_eps: f64,
}

impl SolverSettings {
    pub fn new(epochs: u64) -> Self {
        Self {
            epochs,
            eta: None,
            newton_eps: DEFAULT_NEWTON_EPS,
        }
    }
}

/// One logged sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub solver: SolverKind,
    pub seed: u64,
    /// Shots consumed divided by `n` (stochastic) or iterations (batch).
    pub epoch: f64,
    pub f_value: f64,
    pub approx_opt_error: f64,
    pub fidelity: Option<f64>,
    /// Solver wall time so far; `None` when timing was not requested.
    pub elapsed_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub solver: SolverKind,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub fstar: f64,
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<RunFailure>,
}

/// Stochastic iterate indices to log for a run of `steps` mirror steps over
/// `n` shots: `t = 1`, every `t` that crosses the next power of
/// [`LOG_GROWTH`], every epoch boundary `t = m n + 1`, and the last iterate.
pub fn log_schedule(steps: u64, n: u64) -> BTreeSet<u64> {
    let last = steps + 1;
    let mut out = BTreeSet::new();
    let mut threshold = 1.0f64;
    while threshold <= last as f64 {
        out.insert(threshold.ceil() as u64);
        threshold *= LOG_GROWTH;
    }
    if n > 0 {
        let mut t = 1;
        while t <= last {
            out.insert(t);
            t += n;
        }
    }
    out.insert(last);
    out.retain(|&t| t >= 1 && t <= last);
    out
}

/// Step size a solver will use on `data`: the override if set, otherwise the
/// horizon-tuned value for smd-burg (`T = epochs * n`) and
/// [`BATCH_MD_ETA`] for batch-md. R-rho-R has none.
pub fn effective_eta(
    kind: SolverKind,
    settings: &SolverSettings,
    data: &ShotDataset,
) -> Result<Option<f64>> {
    Ok(match kind {
        SolverKind::Rpr => None,
        SolverKind::BatchMd => Some(settings.eta.unwrap_or(BATCH_MD_ETA)),
        SolverKind::SmdBurg => match settings.eta {
            Some(eta) => Some(eta),
            None => {
                let steps = settings.epochs.saturating_mul(data.total_shots());
                Some(step_size_for_horizon(data.dim(), steps.max(2))?)
            }
        },
    })
}

/// Unfilled metrics: `(epoch, f, fidelity, elapsed)`.
type Trace = Vec<(f64, f64, Option<f64>, f64)>;

struct Evaluator<'a> {
    problem: &'a Problem,
}

impl Evaluator<'_> {
    fn eval(&self, rho: &DensityMatrix) -> Result<(f64, Option<f64>)> {
        let f = nll(&self.problem.data, rho)?;
        let fid = match &self.problem.target {
            Some(psi) => Some(fidelity_pure(psi.amplitudes(), rho)?),
            None => None,
        };
        Ok((f, fid))
    }
}

/// Runs one solver, calling `log` for each logged iterate. On error the rows
/// logged so far are kept in `trace`.
fn trace_solver(
    problem: &Problem,
    kind: SolverKind,
    seed: u64,
    settings: &SolverSettings,
    trace: &mut Trace,
) -> Result<()> {
    let data = &problem.data;
    data.require_nonempty()?;
    let n = data.total_shots();
    let d = data.dim();
    let eval = Evaluator { problem };
    let mut elapsed = Duration::ZERO;

    match kind {
        SolverKind::SmdBurg => {
            let steps = settings
                .epochs
                .checked_mul(n)
                .ok_or_else(|| Error::invalid("epochs * n overflows"))?;
            let config = SolverConfig {
                eta: effective_eta(kind, settings, data)?.expect("smd-burg has a step size"),
                horizon: steps + 1,
                newton_eps: settings.newton_eps,
                seed,
            };
            let mut solver = SmdBurg::new(data, config)?;
            for t in log_schedule(steps, n) {
                let clock = Instant::now();
                while solver.t() < t {
                    solver.step()?;
                }
                elapsed += clock.elapsed();
                let avg = solver.average();
                let (f, fid) = eval.eval(&avg)?;
                let epoch = solver.shots_consumed() as f64 / n as f64;
                trace.push((epoch, f, fid, elapsed.as_secs_f64()));
            }
        }
        SolverKind::Rpr => {
            let mut rho = DensityMatrix::maximally_mixed(d);
            for k in 0..=settings.epochs {
                if k > 0 {
                    let clock = Instant::now();
                    rho = rpr_step(data, &rho)?;
                    elapsed += clock.elapsed();
                }
                let (f, fid) = eval.eval(&rho)?;
                trace.push((k as f64, f, fid, elapsed.as_secs_f64()));
            }
        }
        SolverKind::BatchMd => {
            let eta = effective_eta(kind, settings, data)?.expect("batch-md has a step size");
            let mut current = Iterate::maximally_mixed(d);
            for k in 0..=settings.epochs {
                if k > 0 {
                    let clock = Instant::now();
                    current = batch_mirror_step(data, &current, eta, settings.newton_eps)?;
                    elapsed += clock.elapsed();
                }
                let (f, fid) = eval.eval(current.rho())?;
                trace.push((k as f64, f, fid, elapsed.as_secs_f64()));
            }
        }
    }
    Ok(())
}

/// Lowest objective value seen across every in-scope solver run for
/// `budget_epochs` epochs (smd-burg with seed 0, at its logged iterates).
pub fn estimate_fstar(
    problem: &Problem,
    budget_epochs: u64,
    settings: &SolverSettings,
) -> Result<f64> {
    if budget_epochs == 0 {
        return Err(Error::invalid("f* budget must be at least one epoch"));
    }
    let budget = SolverSettings {
        epochs: budget_epochs,
        ..*settings
    };
    let mut best = f64::INFINITY;
    for kind in SolverKind::ALL {
        let mut trace = Trace::new();
        trace_solver(problem, kind, 0, &budget, &mut trace)?;
        best = trace.iter().map(|r| r.1).fold(best, f64::min);
    }
    Ok(best)
}

/// Builds the problem an experiment runs on.
pub fn prepare_problem(config: &ExperimentConfig) -> Result<Problem> {
    match &config.data {
        Some(path) => Problem::load(path),
        None => {
            let schedule = if config.exhaustive {
                PauliSchedule::Exhaustive
            } else {
                PauliSchedule::Uniform
            };
            let file = generate(
                config.qubits,
                config.total_shots()?,
                config.data_seed,
                TrueState::W,
                schedule,
            )?;
            Ok(Problem {
                data: file.to_dataset()?,
                target: file.true_state()?,
            })
        }
    }
}

/// Runs every `(solver, seed)` pair on one problem. Solver failures are
/// collected rather than propagated; rows logged before a failure are kept.
pub fn run_on_problem(
    problem: &Problem,
    solvers: &[SolverKind],
    seeds: &[u64],
    settings: &SolverSettings,
    fstar_estimate: f64,
) -> ExperimentResults {
    let mut raw: Vec<(SolverKind, u64, Trace)> = Vec::new();
    let mut failures = Vec::new();
    for &kind in solvers {
        for &seed in seeds {
            let mut trace = Trace::new();
            if let Err(e) = trace_solver(problem, kind, seed, settings, &mut trace) {
                failures.push(RunFailure {
                    solver: kind,
                    seed,
                    message: e.to_string(),
                });
            }
            raw.push((kind, seed, trace));
        }
    }

    let fstar = raw
        .iter()
        .flat_map(|(_, _, t)| t.iter().map(|r| r.1))
        .fold(fstar_estimate, f64::min);
    let rows = raw
        .into_iter()
        .flat_map(|(solver, seed, trace)| {
            trace
                .into_iter()
                .map(move |(epoch, f, fid, secs)| MetricsRow {
                    solver,
                    seed,
                    epoch,
                    f_value: f,
                    approx_opt_error: f - fstar,
                    fidelity: fid,
                    elapsed_seconds: Some(secs),
                })
        })
        .collect();
    ExperimentResults {
        fstar,
        rows,
        failures,
    }
}

/// Generates or loads the dataset, estimates the optimal value once, then runs
/// every configured `(solver, seed)` pair in config order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let problem = prepare_problem(config)?;
    let settings = SolverSettings {
        epochs: config.epochs,
        eta: config.eta,
        newton_eps: config.newton_eps,
    };
    let fstar = estimate_fstar(
        &problem,
        config.fstar_epochs.unwrap_or(config.epochs),
        &settings,
    )?;
    Ok(run_on_problem(
        &problem,
        &config.solvers,
        &config.seeds,
        &settings,
        fstar,
    ))
}

/// Formats `x` in plain decimal notation with 12 significant digits.
pub fn format_significant(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // exponent after rounding to 12 significant digits
    let sci = format!("{:.11e}", x);
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .expect("scientific format has an exponent");
    let decimals = (11 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Writes `rows` as CSV with the fixed results header.
pub fn write_results<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    };
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.solver.name().to_string(),
            r.seed.to_string(),
            format_significant(r.epoch),
            format_significant(r.f_value),
            format_significant(r.approx_opt_error),
            r.fidelity.map(format_significant).unwrap_or_default(),
            r.elapsed_seconds
                .map(format_significant)
                .unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
