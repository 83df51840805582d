//! C interface to the granular simulator and its linear solvers.
//!
//! Objects are opaque handles created by `*_new`/`*_load` and released with
//! the matching `*_free`. Every fallible call returns a [`GranularStatus`];
//! on failure [`granular_last_error`] describes what went wrong. Panics are
//! caught at the boundary and reported as [`GranularStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use granular::io::read_bundle;
use granular::lcp::LinearSolver;
use granular::linsys::{direct_solve, from_quantum_solution, from_quantum_solution_complex, QuantumLinearSystem};
use granular::pauli::{decompose, truncate, MAX_DECOMPOSE_QUBITS};
use granular::sim::{euler_update, initial_state_for, make_solver};
use granular::state::{kinetic_energy, BodyState};
use granular::vnls::{train, VnlsConfig};
use granular::{Error, SimConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GranularStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, wrong buffer length or invalid input data.
    InvalidArgument = 1,
    InvalidConfig = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// A simulation: configuration, current state and inner solver.
pub struct GranularSim {
    config: SimConfig,
    state: BodyState,
    solver: Box<dyn LinearSolver>,
}

/// A padded, normalized linear system loaded from a bundle.
pub struct GranularSystem {
    system: QuantumLinearSystem,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GranularStatus {
    match e {
        Error::InvalidInput(_) => GranularStatus::InvalidArgument,
        Error::InvalidConfig { .. } | Error::Json(_) => GranularStatus::InvalidConfig,
        Error::Io(_) | Error::MissingBundleFile { .. } | Error::Parse { .. } => GranularStatus::Io,
        _ => GranularStatus::Numerical,
    }
}

struct Fail(GranularStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(GranularStatus::InvalidArgument, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> GranularStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GranularStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            GranularStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(invalid("output buffer is null"));
    }
    if len != need {
        return Err(invalid(format!("output buffer has length {len}, need {need}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message describing the last failed call on this thread ("" after a
/// successful call). Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn granular_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn granular_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulation from a JSON config (null for defaults) with bodies
/// placed by the config's seed.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn granular_sim_new(config_json: *const c_char, out: *mut *mut GranularSim) -> GranularStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let config = match str_arg(config_json, "config")? {
            Some(text) => SimConfig::from_json_str(text)?,
            None => SimConfig::default(),
        };
        let state = initial_state_for(&config)?;
        let solver = make_solver(&config);
        *out = Box::into_raw(Box::new(GranularSim {
            config,
            state,
            solver,
        }));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle from [`granular_sim_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn granular_sim_free(sim: *mut GranularSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn granular_sim_body_count(sim: *const GranularSim) -> usize {
    sim.as_ref().map_or(0, |s| s.state.n_bodies())
}

/// Advances by `steps` time steps. On failure the state is left at the
/// last step that succeeded.
///
/// # Safety
/// `sim` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn granular_sim_step(sim: *mut GranularSim, steps: usize) -> GranularStatus {
    guard(|| {
        let s = sim.as_mut().ok_or_else(|| invalid("sim is null"))?;
        for _ in 0..steps {
            let (next, _) = euler_update(&s.state, &s.config, s.solver.as_mut())?;
            s.state = next;
        }
        Ok(())
    })
}

/// Copies the `3 * body_count` positions into `out`.
///
/// # Safety
/// `sim` must be a valid handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn granular_sim_positions(sim: *const GranularSim, out: *mut f64, len: usize) -> GranularStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| invalid("sim is null"))?;
        out_slice(out, len, s.state.positions.len())?.copy_from_slice(&s.state.positions);
        Ok(())
    })
}

/// Copies the `3 * body_count` velocities into `out`.
///
/// # Safety
/// `sim` must be a valid handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn granular_sim_velocities(sim: *const GranularSim, out: *mut f64, len: usize) -> GranularStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| invalid("sim is null"))?;
        out_slice(out, len, s.state.velocities.len())?.copy_from_slice(&s.state.velocities);
        Ok(())
    })
}

/// # Safety
/// `sim` must be a valid handle; `time` and `kinetic` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn granular_sim_status(
    sim: *const GranularSim,
    time: *mut f64,
    kinetic: *mut f64,
) -> GranularStatus {
    guard(|| {
        let s = sim.as_ref().ok_or_else(|| invalid("sim is null"))?;
        if time.is_null() || kinetic.is_null() {
            return Err(invalid("output pointer is null"));
        }
        *time = s.state.time;
        *kinetic = kinetic_energy(&s.state);
        Ok(())
    })
}

/// Loads a bundle directory (`A.mtx`, `b.txt`, `meta.json`).
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn granular_system_load(dir: *const c_char, out: *mut *mut GranularSystem) -> GranularStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let dir = str_arg(dir, "dir")?.ok_or_else(|| invalid("dir is null"))?;
        let (system, _) = read_bundle(Path::new(dir))?;
        *out = Box::into_raw(Box::new(GranularSystem { system }));
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or a handle from [`granular_system_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn granular_system_free(sys: *mut GranularSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// # Safety
/// `sys` must be a valid handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn granular_system_dims(
    sys: *const GranularSystem,
    n_qubits: *mut usize,
    original_dim: *mut usize,
) -> GranularStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| invalid("sys is null"))?;
        if n_qubits.is_null() || original_dim.is_null() {
            return Err(invalid("output pointer is null"));
        }
        *n_qubits = s.system.n_qubits;
        *original_dim = s.system.original_dim;
        Ok(())
    })
}

/// Solution of the original (unpadded, unnormalized) system through the
/// direct solver; `out` holds `original_dim` doubles.
///
/// # Safety
/// `sys` must be a valid handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn granular_system_solve_direct(
    sys: *const GranularSystem,
    out: *mut f64,
    len: usize,
) -> GranularStatus {
    guard(|| {
        let s = &sys.as_ref().ok_or_else(|| invalid("sys is null"))?.system;
        let dst = out_slice(out, len, s.original_dim)?;
        let x = direct_solve(&s.a, &s.b)?;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit: Vec<f64> = x.iter().map(|v| v / norm).collect();
        dst.copy_from_slice(&from_quantum_solution(s, &unit)?);
        Ok(())
    })
}

/// Trains VNLS on the system (`vnls_json` configures it, null for defaults)
/// and writes the recovered solution of the original system to `out`.
/// `fidelity` may be null.
///
/// # Safety
/// `sys` must be a valid handle, `vnls_json` null or NUL-terminated, `out`
/// must point to `len` doubles and `fidelity` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn granular_system_solve_vnls(
    sys: *const GranularSystem,
    vnls_json: *const c_char,
    out: *mut f64,
    len: usize,
    fidelity: *mut f64,
) -> GranularStatus {
    guard(|| {
        let s = &sys.as_ref().ok_or_else(|| invalid("sys is null"))?.system;
        let dst = out_slice(out, len, s.original_dim)?;
        let config: VnlsConfig = match str_arg(vnls_json, "vnls config")? {
            Some(text) => serde_json::from_str(text).map_err(Error::from)?,
            None => VnlsConfig::default(),
        };
        let (rbm, report) = train(s, &config)?;
        if let Some(msg) = &report.aborted {
            return Err(Fail(GranularStatus::Numerical, format!("training aborted: {msg}")));
        }
        let x = from_quantum_solution_complex(s, &rbm.statevector())?;
        dst.copy_from_slice(&x);
        if !fidelity.is_null() {
            *fidelity = report.fidelity.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Number of Pauli strings with `|coefficient| > tau` (`tau = 0` counts every
/// stored term).
///
/// # Safety
/// `sys` must be a valid handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn granular_system_pauli_count(
    sys: *const GranularSystem,
    tau: f64,
    count: *mut usize,
) -> GranularStatus {
    guard(|| {
        let s = &sys.as_ref().ok_or_else(|| invalid("sys is null"))?.system;
        if count.is_null() {
            return Err(invalid("count is null"));
        }
        if s.n_qubits > MAX_DECOMPOSE_QUBITS {
            return Err(Error::Infeasible(format!("{} qubits exceeds {MAX_DECOMPOSE_QUBITS}", s.n_qubits)).into());
        }
        let (kept, _) = truncate(&decompose(&s.a)?, tau)?;
        *count = kept.len();
        Ok(())
    })
}
