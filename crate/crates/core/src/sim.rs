//! Time stepping: semi-implicit Euler with a contact LCP per step.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Container, SimConfig, SolverKind};
use crate::contact::{assemble_direction_matrices, detect_contacts_swept, Contact, Pairing};
use crate::error::{Error, Result};
use crate::io::{save_matrix_market, save_vector, write_bundle, BundleMeta};
use crate::lcp::{assemble_lcp, solve_lcp, DirectSolver, InnerReport, LcpProblem, LinearSolver, SolveContext};
use crate::linsys::{condition_number, to_quantum_form, QuantumLinearSystem, SparseMatrix};
use crate::state::{build_mass_matrix, external_force, kinetic_energy, BodyState};
use crate::vnls::VnlsSolver;

const MAX_REJECTIONS: usize = 100_000;
const CONDITION_LIMIT: usize = 1024;
const MAX_DETECTION_PASSES: usize = 4;
const PROJECTION_SWEEPS: usize = 8;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LcpDiagnostics {
    pub n_contacts: usize,
    /// Newton iterations summed over both attempts when the step was retried.
    pub newton_iterations: usize,
    pub inner_iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// The first solve missed the tolerance and a looser one succeeded.
    pub retried: bool,
    pub regularized: bool,
    /// Contact detection passes; more than one when impulses reached new pairs.
    pub detection_passes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotRecord {
    pub step: usize,
    pub time: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    /// Net contact force magnitude per body, impulse / h.
    pub contact_forces: Vec<f64>,
    pub kinetic_energy: f64,
    pub max_overlap: f64,
    pub lcp: LcpDiagnostics,
}

impl SnapshotRecord {
    fn initial(state: &BodyState, config: &SimConfig) -> Self {
        Self {
            step: 0,
            time: state.time,
            positions: state.positions.clone(),
            velocities: state.velocities.clone(),
            contact_forces: vec![0.0; state.n_bodies()],
            kinetic_energy: kinetic_energy(state),
            max_overlap: state.max_overlap(config),
            lcp: LcpDiagnostics {
                converged: true,
                ..Default::default()
            },
        }
    }
}

/// Newton system `Q_AA dy_A = rhs` seen during a step's LCP solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CapturedSystem {
    pub newton_iteration: usize,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

/// A checkpoint ready to be written as a bundle.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub system: QuantumLinearSystem,
    pub meta: BundleMeta,
}

/// Passes solves through and keeps the system of the requested Newton
/// iteration, or of the last earlier one if the solve finished sooner.
struct Capturing<'a> {
    inner: &'a mut dyn LinearSolver,
    target: usize,
    captured: Option<CapturedSystem>,
}

impl LinearSolver for Capturing<'_> {
    fn solve(&mut self, a: &SparseMatrix, rhs: &[f64], ctx: SolveContext) -> Result<(Vec<f64>, InnerReport)> {
        let it = ctx.newton_iteration;
        let newer = self.captured.as_ref().map_or(true, |c| it > c.newton_iteration);
        if it <= self.target && newer {
            self.captured = Some(CapturedSystem {
                newton_iteration: it,
                matrix: a.clone(),
                rhs: rhs.to_vec(),
            });
        }
        self.inner.solve(a, rhs, ctx)
    }
}

/// Result of one step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: BodyState,
    pub record: SnapshotRecord,
    pub captured: Option<CapturedSystem>,
}

/// A failed step, with the LCP that could not be solved when there was one.
#[derive(Debug)]
pub struct StepFailure {
    pub error: Error,
    pub problem: Option<LcpProblem>,
}

impl From<Error> for StepFailure {
    fn from(error: Error) -> Self {
        Self { error, problem: None }
    }
}

/// One time step from `state`.
///
/// `v_known = v + h M^-1 f`; contacts are detected with a margin swept by
/// `v_known`; the LCP in impulses is solved from `y = 0`; then
/// `v+ = v_known + M^-1 (D_n gamma + D_t beta)` and `p+ = p + h v+`.
pub fn euler_update(
    state: &BodyState,
    config: &SimConfig,
    solver: &mut dyn LinearSolver,
) -> Result<(BodyState, SnapshotRecord)> {
    let out = euler_update_capturing(state, config, solver, None).map_err(|f| f.error)?;
    Ok((out.state, out.record))
}

/// [`euler_update`] that also records the Newton system of iteration
/// `capture`, if given.
pub fn euler_update_capturing(
    state: &BodyState,
    config: &SimConfig,
    solver: &mut dyn LinearSolver,
    capture: Option<usize>,
) -> std::result::Result<StepOutput, StepFailure> {
    state.validate()?;
    let h = config.timestep;
    let mass = build_mass_matrix(&state.masses)?;
    let accel = mass.apply_inverse(&external_force(state, config));
    let v_known: Vec<f64> = state.velocities.iter().zip(&accel).map(|(v, a)| v + h * a).collect();

    let mut contacts = detect_contacts_swept(state, &v_known, config)?;
    let mut lcp = LcpDiagnostics {
        converged: true,
        ..Default::default()
    };
    let mut impulse;
    let mut captured;
    let mut pass = 0;
    loop {
        pass += 1;
        lcp.n_contacts = contacts.len();
        (impulse, captured) = contact_impulse(&contacts, state, config, &v_known, solver, capture, &mut lcp)?;
        if pass == MAX_DETECTION_PASSES {
            break;
        }
        // Impulses can push a body into a neighbour that was out of reach at
        // v_known; add those pairs and solve again.
        let dv = mass.apply_inverse(&impulse);
        let v_trial: Vec<f64> = v_known.iter().zip(&dv).map(|(v, d)| v + d).collect();
        let extra: Vec<Contact> = detect_contacts_swept(state, &v_trial, config)?
            .into_iter()
            .filter(|c| !contacts.iter().any(|d| d.pairing == c.pairing))
            .collect();
        if extra.is_empty() {
            break;
        }
        contacts.extend(extra);
        contacts.sort_by_key(|c| c.pairing.sort_key());
    }
    lcp.detection_passes = pass;

    let dv = mass.apply_inverse(&impulse);
    let velocities: Vec<f64> = v_known.iter().zip(&dv).map(|(v, d)| v + d).collect();
    let mut positions: Vec<f64> = state.positions.iter().zip(&velocities).map(|(p, v)| p + h * v).collect();
    if config.gap_stabilization {
        project_overlaps(&mut positions, &contacts, state, config);
    }
    let contact_forces = impulse
        .chunks_exact(3)
        .map(|j| (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]).sqrt() / h)
        .collect();
    let next = BodyState {
        positions,
        velocities,
        radii: state.radii.clone(),
        masses: state.masses.clone(),
        time: state.time + h,
    };
    let record = SnapshotRecord {
        step: 0,
        time: next.time,
        positions: next.positions.clone(),
        velocities: next.velocities.clone(),
        contact_forces,
        kinetic_energy: kinetic_energy(&next),
        max_overlap: next.max_overlap(config),
        lcp,
    };
    Ok(StepOutput {
        state: next,
        record,
        captured,
    })
}

/// Moves overlapping pairs apart along their center line, mass-weighted so
/// the center of mass stays put, and pulls bodies back inside the
/// container. Velocities are untouched.
fn project_overlaps(positions: &mut [f64], contacts: &[Contact], state: &BodyState, config: &SimConfig) {
    let tol = 1e-12 * state.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let at = |p: &[f64], i: usize| Vector3::new(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
    let shift = |p: &mut [f64], i: usize, d: Vector3<f64>| {
        for k in 0..3 {
            p[3 * i + k] += d[k];
        }
    };
    for _ in 0..PROJECTION_SWEEPS {
        let mut worst = 0.0f64;
        for c in contacts {
            match c.pairing {
                Pairing::Bodies { i, j } => {
                    let delta = at(positions, j) - at(positions, i);
                    let dist = delta.norm();
                    let depth = state.radii[i] + state.radii[j] - dist;
                    if depth <= tol || dist == 0.0 {
                        continue;
                    }
                    worst = worst.max(depth);
                    let n = delta / dist;
                    let total = state.masses[i] + state.masses[j];
                    shift(positions, i, -n * (depth * state.masses[j] / total));
                    shift(positions, j, n * (depth * state.masses[i] / total));
                }
                Pairing::Wall { body } => {
                    let Some(container) = &config.container else { continue };
                    let offset = at(positions, body) - Vector3::from(container.center);
                    let dist = offset.norm();
                    let depth = dist + state.radii[body] - container.radius;
                    if depth <= tol || dist == 0.0 {
                        continue;
                    }
                    worst = worst.max(depth);
                    shift(positions, body, -offset * (depth / dist));
                }
            }
        }
        if worst <= tol {
            break;
        }
    }
}

/// Total contact impulse on every body (generalized vector) for the given
/// contact list.
fn contact_impulse(
    contacts: &[Contact],
    state: &BodyState,
    config: &SimConfig,
    v_known: &[f64],
    solver: &mut dyn LinearSolver,
    capture: Option<usize>,
    lcp: &mut LcpDiagnostics,
) -> std::result::Result<(Vec<f64>, Option<CapturedSystem>), StepFailure> {
    let n = state.n_bodies();
    let h = config.timestep;
    let mass = build_mass_matrix(&state.masses)?;
    let set = assemble_direction_matrices(contacts.to_vec(), n, config.cone_directions)?;
    let Some(mut problem) = assemble_lcp(&set, &mass, v_known, config.friction, config.frictionless)? else {
        return Ok((vec![0.0; 3 * n], None));
    };
    if config.gap_stabilization {
        for (r, c) in problem.r.iter_mut().zip(contacts) {
            *r += c.gap.max(0.0) / h;
        }
    }
    let mut captured = None;
    let y = match solve_with_retry(&problem, config, solver, capture, lcp, &mut captured) {
        Ok(y) => y,
        Err(error) => {
            return Err(StepFailure {
                error,
                problem: Some(problem),
            })
        }
    };
    let nc = set.len();
    let mut impulse = set.d_normal.matvec(&y[..nc]);
    if !config.frictionless {
        let s = config.cone_directions;
        let tangential = set.d_tangent.matvec(&y[nc..nc + s * nc]);
        impulse.iter_mut().zip(tangential).for_each(|(a, b)| *a += b);
    }
    Ok((impulse, captured))
}

fn solve_with_retry(
    problem: &LcpProblem,
    config: &SimConfig,
    solver: &mut dyn LinearSolver,
    capture: Option<usize>,
    diag: &mut LcpDiagnostics,
    captured: &mut Option<CapturedSystem>,
) -> Result<Vec<f64>> {
    let y0 = vec![0.0; problem.size()];
    let mut tol = config.newton_tolerance;
    for attempt in 0..2 {
        let mut cap = Capturing {
            inner: &mut *solver,
            target: capture.unwrap_or(0),
            captured: None,
        };
        let sol = solve_lcp(&problem.q, &problem.r, &y0, tol, config.newton_max_iterations, &mut cap)?;
        if capture.is_some() {
            *captured = cap.captured;
        }
        diag.newton_iterations += sol.iterations;
        for rep in sol.reports.iter().filter_map(|r| r.inner.as_ref()) {
            diag.inner_iterations += rep.iterations;
            diag.regularized |= rep.regularized;
        }
        diag.residual = sol.residual;
        if sol.converged {
            diag.retried = attempt > 0;
            return Ok(sol.y);
        }
        log::warn!(
            "LCP not converged at tolerance {tol:e} (residual {:e}); retrying",
            sol.residual
        );
        tol *= 10.0;
    }
    diag.converged = false;
    Err(Error::NonConvergence {
        iterations: diag.newton_iterations,
        residual: diag.residual,
    })
}

/// Receives the output of [`run`].
pub trait SnapshotSink {
    /// Called after every step (and once for the initial state with step 0).
    /// `snapshot` is true on the configured cadence and for step 0.
    fn record(&mut self, record: &SnapshotRecord, snapshot: bool) -> Result<()>;
    fn checkpoint(&mut self, checkpoint: &Checkpoint) -> Result<()>;
    /// Called once before an error is returned, with the state before the
    /// failed step.
    fn failure(&mut self, last_good: &BodyState, failure: &StepFailure) -> Result<()>;
}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<SnapshotRecord>,
    pub snapshots: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
    pub failure: Option<(BodyState, String)>,
}

impl SnapshotSink for MemorySink {
    fn record(&mut self, record: &SnapshotRecord, snapshot: bool) -> Result<()> {
        if snapshot {
            self.snapshots.push(self.records.len());
        }
        self.records.push(record.clone());
        Ok(())
    }

    fn checkpoint(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        self.checkpoints.push(checkpoint.clone());
        Ok(())
    }

    fn failure(&mut self, last_good: &BodyState, failure: &StepFailure) -> Result<()> {
        self.failure = Some((last_good.clone(), failure.error.to_string()));
        Ok(())
    }
}

pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FAILURE_DIR: &str = "failure";

/// Writes `snapshots.csv`, `summary.csv`, `checkpoints/step_NNNNNNN/` and,
/// on failure, `failure/` into a directory.
pub struct DirectorySink {
    dir: PathBuf,
    snapshots: BufWriter<fs::File>,
    summary: BufWriter<fs::File>,
}

impl DirectorySink {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut snapshots = BufWriter::new(fs::File::create(dir.join(SNAPSHOT_FILE))?);
        writeln!(snapshots, "step,time,body,x,y,z,vx,vy,vz,f_contact")?;
        let mut summary = BufWriter::new(fs::File::create(dir.join(SUMMARY_FILE))?);
        writeln!(
            summary,
            "step,time,kinetic_energy,max_overlap,n_contacts,newton_iterations,inner_iterations,residual,converged,retried,regularized"
        )?;
        Ok(Self {
            dir: dir.to_path_buf(),
            snapshots,
            summary,
        })
    }

    pub fn checkpoint_dir(dir: &Path, step: usize) -> PathBuf {
        dir.join(CHECKPOINT_DIR).join(format!("step_{step:07}"))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.snapshots.flush()?;
        self.summary.flush()?;
        Ok(())
    }
}

impl SnapshotSink for DirectorySink {
    fn record(&mut self, r: &SnapshotRecord, snapshot: bool) -> Result<()> {
        let d = &r.lcp;
        writeln!(
            self.summary,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.time,
            r.kinetic_energy,
            r.max_overlap,
            d.n_contacts,
            d.newton_iterations,
            d.inner_iterations,
            d.residual,
            d.converged,
            d.retried,
            d.regularized
        )?;
        if snapshot {
            for (i, f) in r.contact_forces.iter().enumerate() {
                let p = &r.positions[3 * i..3 * i + 3];
                let v = &r.velocities[3 * i..3 * i + 3];
                writeln!(
                    self.snapshots,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.step, r.time, i, p[0], p[1], p[2], v[0], v[1], v[2], f
                )?;
            }
        }
        Ok(())
    }

    fn checkpoint(&mut self, c: &Checkpoint) -> Result<()> {
        let step = c.meta.step.unwrap_or(0);
        write_bundle(&Self::checkpoint_dir(&self.dir, step), &c.system, &c.meta)
    }

    fn failure(&mut self, last_good: &BodyState, failure: &StepFailure) -> Result<()> {
        self.flush()?;
        let dir = self.dir.join(FAILURE_DIR);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("state.json"), serde_json::to_string_pretty(last_good)? + "\n")?;
        fs::write(dir.join("error.txt"), format!("{}\n", failure.error))?;
        if let Some(p) = &failure.problem {
            save_matrix_market(&p.q, &dir.join("Q.mtx"))?;
            save_vector(&p.r, &dir.join("r.txt"))?;
        }
        Ok(())
    }
}

/// The inner solver selected by `config.solver`.
pub fn make_solver(config: &SimConfig) -> Box<dyn LinearSolver> {
    match config.solver {
        SolverKind::Direct => Box::new(DirectSolver),
        SolverKind::Vnls => Box::new(VnlsSolver::new(config.vnls.clone())),
    }
}

/// Advances `initial` by `steps` steps, reporting to `sink`.
///
/// Every `config.checkpoint_every` steps (if nonzero) the Newton system of
/// iteration `config.checkpoint_newton_iteration` is padded, normalized and
/// handed to the sink. Steps whose LCP never reaches a linear solve export
/// nothing. On error the last good state goes to [`SnapshotSink::failure`].
pub fn run(
    config: &SimConfig,
    initial: &BodyState,
    steps: usize,
    sink: &mut dyn SnapshotSink,
    solver: &mut dyn LinearSolver,
) -> Result<BodyState> {
    config.validate()?;
    initial.validate()?;
    sink.record(&SnapshotRecord::initial(initial, config), true)?;
    let mut state = initial.clone();
    for step in 1..=steps {
        let capture = (config.checkpoint_every > 0 && step % config.checkpoint_every == 0)
            .then_some(config.checkpoint_newton_iteration);
        let out = match euler_update_capturing(&state, config, solver, capture) {
            Ok(out) => out,
            Err(failure) => {
                log::error!("step {step} failed: {}", failure.error);
                sink.failure(&state, &failure)?;
                return Err(failure.error);
            }
        };
        let mut record = out.record;
        record.step = step;
        sink.record(&record, step % config.snapshot_every == 0)?;
        if let Some(c) = out.captured {
            match to_quantum_form(&c.matrix, &c.rhs) {
                Ok(system) => {
                    let mut meta = BundleMeta::for_system(&system);
                    meta.step = Some(step);
                    meta.time = Some(out.state.time);
                    meta.newton_iteration = Some(c.newton_iteration);
                    meta.n_contacts = Some(record.lcp.n_contacts);
                    if system.dim() <= CONDITION_LIMIT {
                        meta.condition_number = condition_number(&system.a).ok();
                    }
                    sink.checkpoint(&Checkpoint { system, meta })?;
                }
                Err(e) => log::warn!("checkpoint at step {step} skipped: {e}"),
            }
        }
        state = out.state;
    }
    Ok(state)
}

/// Non-overlapping uniform random centers inside the container (or, without
/// one, inside a cube sized for a 10% volume fraction), zero velocities.
pub fn seed_initial_state(
    n_bodies: usize,
    radius: f64,
    mass: f64,
    container: Option<&Container>,
    seed: u64,
) -> Result<BodyState> {
    if !(radius > 0.0) || !(mass > 0.0) {
        return Err(Error::invalid("radius and mass must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (center, half, ball) = match container {
        Some(c) => {
            let reach = c.radius - radius;
            if reach <= 0.0 {
                return Err(Error::PackingInfeasible {
                    placed: 0,
                    requested: n_bodies,
                });
            }
            (Vector3::from(c.center), reach, true)
        }
        None => {
            let volume = n_bodies as f64 * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3) / 0.1;
            (Vector3::zeros(), 0.5 * volume.cbrt(), false)
        }
    };
    let mut centers: Vec<Vector3<f64>> = Vec::with_capacity(n_bodies);
    let mut rejections = 0;
    while centers.len() < n_bodies {
        let p = center
            + Vector3::new(
                rng.gen_range(-half..=half),
                rng.gen_range(-half..=half),
                rng.gen_range(-half..=half),
            );
        let inside = !ball || (p - center).norm() < half;
        if inside && centers.iter().all(|q| (p - q).norm() >= 2.0 * radius) {
            centers.push(p);
            continue;
        }
        rejections += 1;
        if rejections >= MAX_REJECTIONS {
            return Err(Error::PackingInfeasible {
                placed: centers.len(),
                requested: n_bodies,
            });
        }
    }
    let flat: Vec<[f64; 3]> = centers.iter().map(|c| [c.x, c.y, c.z]).collect();
    BodyState::at_rest(&flat, radius, mass)
}

/// [`seed_initial_state`] with the layout fields of `config`.
pub fn initial_state_for(config: &SimConfig) -> Result<BodyState> {
    seed_initial_state(
        config.bodies,
        config.body_radius,
        config.body_mass,
        config.container.as_ref(),
        config.seed,
    )
}
