use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use burg_qst::bench::{
    effective_eta, format_significant, run_experiment, run_on_problem, write_results,
    ExperimentConfig, Problem, SolverKind, SolverSettings,
};
use burg_qst::smd::DEFAULT_NEWTON_EPS;
use burg_qst::synthetic::{generate, write_dataset, PauliSchedule, TrueState};
use burg_qst::Error;

#[derive(Parser)]
#[command(
    name = "burg-qst",
    version,
    about = "Maximum-likelihood state tomography solvers and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate Pauli measurements of the W state and write a dataset file.
    Generate {
        #[arg(long)]
        qubits: usize,
        /// Total number of shots.
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Cycle through every non-identity Pauli string instead of sampling.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Run one solver on a dataset and print the final objective and fidelity.
    Solve {
        /// One of smd-burg, rpr, batch-md.
        #[arg(long)]
        solver: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        eta: Option<f64>,
        /// Newton tolerance of the mirror step.
        #[arg(long)]
        eps: Option<f64>,
        /// Also write the logged metrics as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the elapsed_seconds column of --out (otherwise left empty).
        #[arg(long)]
        timing: bool,
    },
    /// Run an experiment described by a JSON config and write metrics CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufWriter::new(f))
}

fn cmd_generate(
    qubits: usize,
    shots: u64,
    seed: u64,
    out: &Path,
    exhaustive: bool,
) -> Result<(), Failure> {
    if qubits == 0 || shots == 0 {
        return Err(Failure::Usage(
            "--qubits and --shots must be positive".into(),
        ));
    }
    let schedule = if exhaustive {
        PauliSchedule::Exhaustive
    } else {
        PauliSchedule::Uniform
    };
    let file = generate(qubits, shots, seed, TrueState::W, schedule)?;
    let mut w = create(out)?;
    write_dataset(&file, &mut w)?;
    w.flush()?;
    println!(
        "wrote {} shots in {} records to {}",
        file.total_shots(),
        file.records.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    solver: &str,
    data: &Path,
    epochs: u64,
    seed: u64,
    eta: Option<f64>,
    eps: Option<f64>,
    out: Option<&Path>,
    timing: bool,
) -> Result<(), Failure> {
    let kind: SolverKind = solver
        .parse()
        .map_err(|e: Error| Failure::Usage(e.to_string()))?;
    if epochs == 0 {
        return Err(Failure::Usage("--epochs must be at least 1".into()));
    }
    if eta.is_some_and(|x| !(x > 0.0) || !x.is_finite()) || eps.is_some_and(|x| !(x > 0.0)) {
        return Err(Failure::Usage("--eta and --eps must be positive".into()));
    }
    let problem = Problem::load(data)?;
    let settings = SolverSettings {
        epochs,
        eta,
        newton_eps: eps.unwrap_or(DEFAULT_NEWTON_EPS),
    };
    let step = effective_eta(kind, &settings, &problem.data)?;
    let mut results = run_on_problem(&problem, &[kind], &[seed], &settings, f64::INFINITY);
    if let Some(fail) = results.failures.first() {
        return Err(Failure::Run(Error::NumericDegeneracy(format!(
            "{} (seed {}) failed: {}",
            fail.solver, fail.seed, fail.message
        ))));
    }
    let last = results
        .rows
        .last()
        .expect("a successful run logs its final iterate");

    let mut stdout = io::stdout().lock();
    writeln!(stdout, "solver: {kind}")?;
    writeln!(stdout, "seed: {seed}")?;
    writeln!(stdout, "dimension: {}", problem.data.dim())?;
    writeln!(stdout, "shots: {}", problem.data.total_shots())?;
    writeln!(stdout, "epochs: {epochs}")?;
    if let Some(step) = step {
        writeln!(stdout, "eta: {}", format_significant(step))?;
    }
    writeln!(stdout, "f: {}", format_significant(last.f_value))?;
    match last.fidelity {
        Some(fid) => writeln!(stdout, "fidelity: {}", format_significant(fid))?,
        None => writeln!(stdout, "fidelity: n/a")?,
    }

    if let Some(path) = out {
        if !timing {
            for row in &mut results.rows {
                row.elapsed_seconds = None;
            }
        }
        let mut w = create(path)?;
        write_results(&results.rows, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_bench(config: &Path, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config).map_err(|e| {
        Error::Io(io::Error::new(
            e.kind(),
            format!("{}: {e}", config.display()),
        ))
    })?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let results = run_experiment(&cfg)?;
    let mut w = create(out)?;
    write_results(&results.rows, &mut w)?;
    w.flush()?;
    for f in &results.failures {
        eprintln!("run {} seed {} failed: {}", f.solver, f.seed, f.message);
    }
    println!(
        "f* estimate {}; {} rows written to {}",
        format_significant(results.fstar),
        results.rows.len(),
        out.display()
    );
    if results.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(Error::NumericDegeneracy(format!(
            "{} run(s) failed",
            results.failures.len()
        ))))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Generate {
            qubits,
            shots,
            seed,
            out,
            exhaustive,
        } => cmd_generate(*qubits, *shots, *seed, out, *exhaustive),
        Command::Solve {
            solver,
            data,
            epochs,
            seed,
            eta,
            eps,
            out,
            timing,
        } => cmd_solve(
            solver,
            data,
            *epochs,
            *seed,
            *eta,
            *eps,
            out.as_deref(),
            *timing,
        ),
        Command::Bench { config, out } => cmd_bench(config, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Io(_) | Error::Parse { .. } | Error::UnsupportedVersion { .. } => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
