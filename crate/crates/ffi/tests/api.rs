use std::ffi::{CStr, CString};
use std::ptr;

use granular::io::write_bundle;
use granular::io::BundleMeta;
use granular::linsys::{to_quantum_form, SparseMatrix};
use granular_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(granular_last_error()) }.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{"bodies": 4, "steps": 10, "container": {"center": [0,0,0], "radius": 4.0}}"#;

#[test]
fn simulation_round_trip() {
    let cfg = CString::new(SMALL).unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { granular_sim_new(cfg.as_ptr(), &mut sim) }, GranularStatus::Ok);
    assert!(!sim.is_null());
    let n = unsafe { granular_sim_body_count(sim) };
    assert_eq!(n, 4);

    let mut before = vec![0.0; 3 * n];
    assert_eq!(unsafe { granular_sim_positions(sim, before.as_mut_ptr(), before.len()) }, GranularStatus::Ok);
    assert_eq!(unsafe { granular_sim_step(sim, 10) }, GranularStatus::Ok);
    let mut after = vec![0.0; 3 * n];
    unsafe { granular_sim_positions(sim, after.as_mut_ptr(), after.len()) };
    for i in 0..n {
        assert!(after[3 * i + 2] < before[3 * i + 2], "body {i} did not fall");
    }

    let (mut t, mut ke) = (0.0, 0.0);
    assert_eq!(unsafe { granular_sim_status(sim, &mut t, &mut ke) }, GranularStatus::Ok);
    assert!((t - 0.01).abs() < 1e-12);
    assert!(ke > 0.0);

    let mut v = vec![0.0; 3 * n];
    assert_eq!(unsafe { granular_sim_velocities(sim, v.as_mut_ptr(), v.len()) }, GranularStatus::Ok);
    assert!((v[2] + 9.81 * 0.01).abs() < 1e-9);
    unsafe { granular_sim_free(sim) };
}

#[test]
fn defaults_when_config_is_null() {
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { granular_sim_new(ptr::null(), &mut sim) }, GranularStatus::Ok);
    assert_eq!(unsafe { granular_sim_body_count(sim) }, 100);
    unsafe { granular_sim_free(sim) };
}

#[test]
fn bad_config_reports_field() {
    let cfg = CString::new(r#"{"timestep": "fast"}"#).unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { granular_sim_new(cfg.as_ptr(), &mut sim) }, GranularStatus::InvalidConfig);
    assert!(sim.is_null());
    assert!(last_error().contains("timestep"), "{}", last_error());
}

#[test]
fn wrong_buffer_length_is_rejected() {
    let cfg = CString::new(SMALL).unwrap();
    let mut sim = ptr::null_mut();
    unsafe { granular_sim_new(cfg.as_ptr(), &mut sim) };
    let mut buf = vec![0.0; 5];
    assert_eq!(unsafe { granular_sim_positions(sim, buf.as_mut_ptr(), buf.len()) }, GranularStatus::InvalidArgument);
    assert!(last_error().contains("need 12"));
    unsafe { granular_sim_free(sim) };
}

#[test]
fn null_handles_are_rejected() {
    assert_eq!(unsafe { granular_sim_step(ptr::null_mut(), 1) }, GranularStatus::InvalidArgument);
    assert_eq!(unsafe { granular_sim_body_count(ptr::null()) }, 0);
    unsafe { granular_sim_free(ptr::null_mut()) };
    unsafe { granular_system_free(ptr::null_mut()) };
}

#[test]
fn missing_bundle_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { granular_system_load(path.as_ptr(), &mut sys) }, GranularStatus::Io);
    assert!(last_error().contains("A.mtx"), "{}", last_error());
}

fn tridiagonal(n: usize) -> (SparseMatrix, Vec<f64>) {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 4.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    let b = (0..n).map(|i| 1.0 + i as f64).collect();
    (SparseMatrix::from_triplets(n, n, t).unwrap(), b)
}

#[test]
fn bundle_solve_and_pauli_count() {
    let (a, b) = tridiagonal(6);
    let qs = to_quantum_form(&a, &b).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), &qs, &BundleMeta::for_system(&qs)).unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();

    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { granular_system_load(path.as_ptr(), &mut sys) }, GranularStatus::Ok);
    let (mut nq, mut dim) = (0, 0);
    assert_eq!(unsafe { granular_system_dims(sys, &mut nq, &mut dim) }, GranularStatus::Ok);
    assert_eq!((nq, dim), (3, 6));

    let mut x = vec![0.0; dim];
    assert_eq!(unsafe { granular_system_solve_direct(sys, x.as_mut_ptr(), dim) }, GranularStatus::Ok);
    let ax = a.matvec(&x);
    for i in 0..dim {
        assert!((ax[i] - b[i]).abs() < 1e-10);
    }

    let mut all = 0;
    let mut kept = 0;
    assert_eq!(unsafe { granular_system_pauli_count(sys, 0.0, &mut all) }, GranularStatus::Ok);
    assert_eq!(unsafe { granular_system_pauli_count(sys, 1e-3, &mut kept) }, GranularStatus::Ok);
    assert!(kept <= all && all > 0);

    let vnls = CString::new(r#"{"iterations": 200, "samples": 256}"#).unwrap();
    let mut fid = f64::NAN;
    assert_eq!(
        unsafe { granular_system_solve_vnls(sys, vnls.as_ptr(), x.as_mut_ptr(), dim, &mut fid) },
        GranularStatus::Ok,
        "{}",
        last_error()
    );
    assert!((0.0..=1.0 + 1e-12).contains(&fid));
    unsafe { granular_system_free(sys) };
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(granular_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
