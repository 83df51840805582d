//! The `granular` command line: `simulate`, `solve`, `baseline`, `pauli`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure, 4 I/O failure. Log verbosity comes from `GRANULAR_LOG`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{SimConfig, SolverKind};
use crate::error::Error;
use crate::io::{read_bundle, save_vector};
use crate::lcp::residual_inf;
use crate::linsys::{condition_number, direct_solve, from_quantum_solution, from_quantum_solution_complex};
use crate::pauli::{count_report, write_count_report, MAX_DECOMPOSE_QUBITS};
use crate::sim::{self, DirectorySink, CHECKPOINT_DIR, FAILURE_DIR, SNAPSHOT_FILE, SUMMARY_FILE};
use crate::vnls::{generate_ising_system, train, TrainingReport};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_FILE: &str = "losses.csv";
pub const SOLUTION_FILE: &str = "solution.txt";
pub const COUNTS_FILE: &str = "pauli_counts.csv";

const ISING_COUPLING: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "granular", version, about = "Granular contact dynamics with direct and variational neural linear solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a sedimentation and write snapshots, a per-step summary and
    /// optional checkpoint bundles.
    Simulate(SimulateArgs),
    /// Solve a checkpoint bundle with the direct or the VNLS solver.
    Solve(SolveArgs),
    /// Train VNLS on an Ising-inspired system of given size and condition number.
    Baseline(BaselineArgs),
    /// Count Pauli-string terms of one or more bundles.
    Pauli(PauliArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite outputs of an earlier run.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Bundle directory holding A.mtx, b.txt and meta.json.
    pub bundle: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub solver: Option<SolverKind>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 5)]
    pub qubits: usize,
    #[arg(long, default_value_t = 10.0)]
    pub kappa: f64,
}

#[derive(Debug, Args)]
pub struct PauliArgs {
    /// Bundle directories.
    #[arg(required = true)]
    pub bundles: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Truncation tolerance; repeat for a grid. Defaults to 0, 1e-6, 1e-3.
    #[arg(long = "tau")]
    pub tau: Vec<f64>,
}

impl clap::ValueEnum for SolverKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[SolverKind::Direct, SolverKind::Vnls]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            SolverKind::Direct => "direct",
            SolverKind::Vnls => "vnls",
        }))
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::InvalidConfig { .. } | Error::Json(_) => EXIT_USAGE,
            Error::Io(_) | Error::MissingBundleFile { .. } | Error::Parse { .. } => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("GRANULAR_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Pauli(a) => cmd_pauli(&a),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError {
                code: EXIT_IO,
                message: format!("cannot read config {}: {e}", p.display()),
            })?;
            SimConfig::from_json_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
    }
}

/// Creates `out` if needed. Refuses to touch existing `outputs` unless
/// `force`, in which case they are removed first.
fn prepare_out(out: &Path, force: bool, outputs: &[&str]) -> CliResult<()> {
    let existing: Vec<&str> = outputs.iter().copied().filter(|f| out.join(f).exists()).collect();
    if !existing.is_empty() {
        if !force {
            return Err(CliError::usage(format!(
                "{} already contains {}; pass --force to overwrite",
                out.display(),
                existing.join(", ")
            )));
        }
        for f in existing {
            let p = out.join(f);
            if p.is_dir() {
                fs::remove_dir_all(&p)?;
            } else {
                fs::remove_file(&p)?;
            }
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    steps: usize,
    bodies: usize,
    final_time: f64,
    peak_kinetic_energy: f64,
    final_kinetic_energy: f64,
    max_overlap: f64,
    checkpoints: usize,
    retried_steps: usize,
}

/// Tracks the summary while forwarding to the directory sink.
struct Tracking {
    inner: DirectorySink,
    summary: SimulationSummary,
}

impl sim::SnapshotSink for Tracking {
    fn record(&mut self, r: &sim::SnapshotRecord, snapshot: bool) -> crate::Result<()> {
        let s = &mut self.summary;
        s.steps = r.step;
        s.final_time = r.time;
        s.peak_kinetic_energy = s.peak_kinetic_energy.max(r.kinetic_energy);
        s.final_kinetic_energy = r.kinetic_energy;
        s.max_overlap = s.max_overlap.max(r.max_overlap);
        s.retried_steps += usize::from(r.lcp.retried);
        self.inner.record(r, snapshot)
    }

    fn checkpoint(&mut self, c: &sim::Checkpoint) -> crate::Result<()> {
        self.summary.checkpoints += 1;
        self.inner.checkpoint(c)
    }

    fn failure(&mut self, last_good: &crate::state::BodyState, f: &sim::StepFailure) -> crate::Result<()> {
        self.inner.failure(last_good, f)
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let c = &args.common;
    let mut config = load_config(c.config.as_deref())?;
    if let Some(s) = args.solver {
        config.solver = s;
    }
    if let Some(seed) = c.seed {
        config.seed = seed;
        config.vnls.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(k) = args.checkpoint_every {
        config.checkpoint_every = k;
    }
    config.validate()?;
    let initial = sim::initial_state_for(&config)?;

    prepare_out(
        &c.out,
        c.force,
        &[SNAPSHOT_FILE, SUMMARY_FILE, CHECKPOINT_DIR, FAILURE_DIR, REPORT_FILE, CONFIG_FILE],
    )?;
    fs::write(c.out.join(CONFIG_FILE), config.to_json_string() + "\n")?;
    let mut sink = Tracking {
        inner: DirectorySink::create(&c.out)?,
        summary: SimulationSummary {
            steps: 0,
            bodies: initial.n_bodies(),
            final_time: 0.0,
            peak_kinetic_energy: 0.0,
            final_kinetic_energy: 0.0,
            max_overlap: 0.0,
            checkpoints: 0,
            retried_steps: 0,
        },
    };
    let mut solver = sim::make_solver(&config);
    let start = Instant::now();
    let result = sim::run(&config, &initial, config.steps, &mut sink, solver.as_mut());
    sink.inner.flush()?;
    result?;
    log::info!("simulated {} steps in {:.1}s", config.steps, start.elapsed().as_secs_f64());
    let s = &sink.summary;
    write_json(&c.out.join(REPORT_FILE), s)?;
    println!(
        "steps {}  final KE {:.6e}  peak KE {:.6e}  max overlap {:.3e}  checkpoints {}",
        s.steps, s.final_kinetic_energy, s.peak_kinetic_energy, s.max_overlap, s.checkpoints
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SolveReport {
    solver: SolverKind,
    n_qubits: usize,
    original_dim: usize,
    /// `||A x - b||_inf` in the bundle's original units.
    residual: f64,
    relative_residual: f64,
    fidelity: Option<f64>,
    condition_number: Option<f64>,
    training: Option<TrainingReport>,
}

fn write_losses(path: &Path, report: &TrainingReport) -> CliResult<()> {
    let smoothed = report.smoothed_losses();
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "iteration,loss,smoothed")?;
    for (i, (l, s)) in report.losses.iter().zip(&smoothed).enumerate() {
        writeln!(w, "{i},{l},{s}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let c = &args.common;
    let mut config = load_config(c.config.as_deref())?;
    if let Some(seed) = c.seed {
        config.vnls.seed = seed;
    }
    config.vnls.validate()?;
    let solver = args.solver.unwrap_or(config.solver);
    let (qs, _meta) = read_bundle(&args.bundle)?;
    prepare_out(&c.out, c.force, &[REPORT_FILE, LOSS_FILE, SOLUTION_FILE])?;

    let a = qs.original_matrix();
    let b = qs.original_rhs();
    let exact_unit = direct_solve(&qs.a, &qs.b).ok().map(|x| {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.into_iter().map(|v| v / n).collect::<Vec<f64>>()
    });
    let (x, fidelity, training) = match solver {
        SolverKind::Direct => {
            let unit = exact_unit.ok_or(Error::NumericallySingular { ratio: 0.0 })?;
            (from_quantum_solution(&qs, &unit)?, None, None)
        }
        SolverKind::Vnls => {
            let (rbm, report) = train(&qs, &config.vnls)?;
            let psi = rbm.statevector();
            let x = from_quantum_solution_complex(&qs, &psi)?;
            write_losses(&c.out.join(LOSS_FILE), &report)?;
            (x, report.fidelity, Some(report))
        }
    };
    let residual = residual_inf(&a, &x, &b);
    let b_inf = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let report = SolveReport {
        solver,
        n_qubits: qs.n_qubits,
        original_dim: qs.original_dim,
        residual,
        relative_residual: residual / b_inf,
        fidelity,
        condition_number: training.as_ref().and_then(|t| t.condition_number),
        training,
    };
    save_vector(&x, &c.out.join(SOLUTION_FILE))?;
    write_json(&c.out.join(REPORT_FILE), &report)?;
    match fidelity {
        Some(f) => println!("residual {residual:.6e}  fidelity {f:.6}"),
        None => println!("residual {residual:.6e}"),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BaselineReport {
    n_qubits: usize,
    kappa_requested: f64,
    kappa_measured: f64,
    final_smoothed_loss: Option<f64>,
    initial_smoothed_loss: Option<f64>,
    training: TrainingReport,
}

pub fn cmd_baseline(args: &BaselineArgs) -> CliResult<()> {
    let c = &args.common;
    if !(2..=10).contains(&args.qubits) {
        return Err(CliError::usage(format!("--qubits must be in 2..=10 (got {})", args.qubits)));
    }
    if !(args.kappa > 1.0 && args.kappa.is_finite()) {
        return Err(CliError::usage(format!("--kappa must be a finite number > 1 (got {})", args.kappa)));
    }
    let mut config = load_config(c.config.as_deref())?;
    if let Some(seed) = c.seed {
        config.vnls.seed = seed;
    }
    config.vnls.validate()?;
    let sys = generate_ising_system(args.qubits, args.kappa, ISING_COUPLING)?;
    let measured = condition_number(&sys.a)?;
    if (measured - args.kappa).abs() > 0.01 * args.kappa {
        log::warn!("measured condition number {measured} differs from requested {}", args.kappa);
    }
    prepare_out(&c.out, c.force, &[REPORT_FILE, LOSS_FILE])?;
    let (_, training) = train(&sys, &config.vnls)?;
    write_losses(&c.out.join(LOSS_FILE), &training)?;
    let smoothed = training.smoothed_losses();
    let report = BaselineReport {
        n_qubits: args.qubits,
        kappa_requested: args.kappa,
        kappa_measured: measured,
        final_smoothed_loss: smoothed.last().copied(),
        initial_smoothed_loss: smoothed.first().copied(),
        training,
    };
    write_json(&c.out.join(REPORT_FILE), &report)?;
    println!(
        "n {}  kappa {:.4}  fidelity {:.6}  final loss {:.3e}",
        args.qubits,
        measured,
        report.training.fidelity.unwrap_or(f64::NAN),
        report.final_smoothed_loss.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_pauli(args: &PauliArgs) -> CliResult<()> {
    let taus = if args.tau.is_empty() {
        vec![0.0, 1e-6, 1e-3]
    } else {
        args.tau.clone()
    };
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(CliError::usage(format!("--tau must be finite and >= 0 (got {t})")));
    }
    let mut systems = Vec::with_capacity(args.bundles.len());
    for b in &args.bundles {
        let (qs, _) = read_bundle(b)?;
        if qs.n_qubits > MAX_DECOMPOSE_QUBITS {
            return Err(Error::Infeasible(format!(
                "{} has {} qubits; Pauli decomposition is limited to {MAX_DECOMPOSE_QUBITS}",
                b.display(),
                qs.n_qubits
            ))
            .into());
        }
        systems.push(qs);
    }
    prepare_out(&args.out, args.force, &[COUNTS_FILE])?;
    let rows = count_report(&systems, &taus)?;
    let mut file = std::io::BufWriter::new(fs::File::create(args.out.join(COUNTS_FILE))?);
    write_count_report(&rows, &mut file)?;
    file.flush()?;
    write_count_report(&rows, std::io::stdout().lock())?;
    Ok(())
}
