#![allow(dead_code)]

use granular::contact::{assemble_direction_matrices, build_tangent_frame, linearize_cone, Contact, Pairing};
use granular::lcp::{assemble_lcp, LcpProblem};
use granular::linsys::SparseMatrix;
use granular::sim::{Checkpoint, SnapshotRecord, SnapshotSink, StepFailure};
use granular::state::{build_mass_matrix, BodyState};
use granular::Result;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

/// Every solution of the LCP found by enumerating complementary bases.
pub struct OracleResult {
    pub solutions: Vec<Vec<f64>>,
    /// Some basis had a (numerically) singular block, so solutions may have
    /// been missed or may form a continuum.
    pub degenerate: bool,
}

impl OracleResult {
    pub fn unique(&self) -> Option<&[f64]> {
        (self.solutions.len() == 1 && !self.degenerate).then(|| self.solutions[0].as_slice())
    }
}

pub fn lcp_oracle(q: &DMatrix<f64>, r: &[f64]) -> OracleResult {
    let m = r.len();
    assert!(m <= 16);
    let scale = 1.0 + q.amax() + r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let feas = 1e-9 * scale;
    let mut solutions: Vec<Vec<f64>> = Vec::new();
    let mut degenerate = false;
    for mask in 0u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let mut y = vec![0.0; m];
        if !idx.is_empty() {
            let k = idx.len();
            let sub = DMatrix::from_fn(k, k, |a, b| q[(idx[a], idx[b])]);
            let rhs = DVector::from_iterator(k, idx.iter().map(|&i| -r[i]));
            let svd = sub.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 1e-10 * smax.max(1e-300) {
                degenerate = true;
                continue;
            }
            let Some(sol) = sub.lu().solve(&rhs) else {
                degenerate = true;
                continue;
            };
            for (a, &i) in idx.iter().enumerate() {
                y[i] = sol[a];
            }
        }
        if y.iter().any(|v| *v < -feas) {
            continue;
        }
        let z: Vec<f64> = (0..m).map(|i| (0..m).map(|j| q[(i, j)] * y[j]).sum::<f64>() + r[i]).collect();
        if z.iter().any(|v| *v < -feas) {
            continue;
        }
        let y: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
        if !solutions.iter().any(|s| max_diff(s, &y) <= 1e-9 * scale) {
            solutions.push(y);
        }
    }
    OracleResult { solutions, degenerate }
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dense(a: &SparseMatrix) -> DMatrix<f64> {
    a.to_dense()
}

/// `B^T B + shift I` with standard-uniform entries in `B`.
pub fn random_psd<R: Rng>(m: usize, shift: f64, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    b.transpose() * &b + DMatrix::identity(m, m) * shift
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn body_contact(i: usize, j: usize, normal: Vector3<f64>, s: usize) -> Contact {
    let (t1, t2) = build_tangent_frame(&normal).unwrap();
    Contact {
        pairing: Pairing::Bodies { i, j },
        normal,
        tangents: [t1, t2],
        directions: linearize_cone(&t1, &t2, s).unwrap(),
        gap: 0.0,
    }
}

/// A frictional one-contact LCP between two bodies with random masses,
/// normal, friction coefficient and approach velocity.
pub fn random_frictional_problem<R: Rng>(s: usize, rng: &mut R) -> (LcpProblem, f64) {
    let normal = random_unit(rng);
    let contact = body_contact(0, 1, normal, s);
    let set = assemble_direction_matrices(vec![contact], 2, s).unwrap();
    let mass = build_mass_matrix(&[rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)]).unwrap();
    let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mu = rng.gen_range(0.1..1.0);
    let problem = assemble_lcp(&set, &mass, &v, mu, false).unwrap().unwrap();
    (problem, mu)
}

/// Frictionless LCP `D^T M^-1 D` from `k` random pairwise contacts among
/// `bodies` bodies (a pair may carry several normals); rank deficient when
/// contacts outnumber the relative degrees of freedom.
pub fn random_contact_problem<R: Rng>(k: usize, bodies: usize, rng: &mut R) -> LcpProblem {
    assert!(bodies >= 2);
    let mut contacts = Vec::new();
    while contacts.len() < k {
        let i = rng.gen_range(0..bodies);
        let j = rng.gen_range(0..bodies);
        if i < j {
            contacts.push(body_contact(i, j, random_unit(rng), 4));
        }
    }
    contacts.sort_by_key(|c| c.pairing.sort_key());
    let set = assemble_direction_matrices(contacts, bodies, 4).unwrap();
    let masses: Vec<f64> = (0..bodies).map(|_| rng.gen_range(0.5..2.0)).collect();
    let mass = build_mass_matrix(&masses).unwrap();
    let v: Vec<f64> = (0..3 * bodies).map(|_| rng.gen_range(-2.0..2.0)).collect();
    assemble_lcp(&set, &mass, &v, 0.0, true).unwrap().unwrap()
}

/// Streams run output into summary statistics without keeping every record.
#[derive(Default)]
pub struct StatsSink {
    pub steps: usize,
    pub peak_kinetic: f64,
    pub final_kinetic: f64,
    pub max_overlap: f64,
    pub max_newton: usize,
    pub retried: usize,
    pub failure: Option<String>,
    pub records: Option<Vec<SnapshotRecord>>,
    pub checkpoints: Vec<Checkpoint>,
}

impl StatsSink {
    pub fn keeping_records() -> Self {
        Self {
            records: Some(Vec::new()),
            ..Default::default()
        }
    }
}

impl SnapshotSink for StatsSink {
    fn record(&mut self, record: &SnapshotRecord, _snapshot: bool) -> Result<()> {
        self.steps = record.step;
        self.peak_kinetic = self.peak_kinetic.max(record.kinetic_energy);
        self.final_kinetic = record.kinetic_energy;
        self.max_overlap = self.max_overlap.max(record.max_overlap);
        self.max_newton = self.max_newton.max(record.lcp.newton_iterations);
        self.retried += record.lcp.retried as usize;
        if let Some(r) = &mut self.records {
            r.push(record.clone());
        }
        Ok(())
    }

    fn checkpoint(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        self.checkpoints.push(checkpoint.clone());
        Ok(())
    }

    fn failure(&mut self, _last_good: &BodyState, failure: &StepFailure) -> Result<()> {
        self.failure = Some(failure.error.to_string());
        Ok(())
    }
}

/// `true` if every entry of the smoothed series is strictly below the
/// previous one at the given indices.
pub fn strictly_decreasing_at(series: &[f64], idx: &[usize]) -> bool {
    idx.windows(2).all(|w| series[w[1]] < series[w[0]])
}

/// Ten evenly spaced indices over `0..len`, first and last included.
pub fn ten_checkpoints(len: usize) -> Vec<usize> {
    (0..10).map(|k| ((k * (len - 1)) as f64 / 9.0).round() as usize).collect()
}

use granular::linsys::{direct_solve, to_quantum_form, QuantumLinearSystem};
use granular::vnls::{estimate_loss_weighted, exact_global_loss, fidelity, RbmState};

/// Random symmetric sparse system on `n` qubits, strictly diagonally
/// dominant so the condition number stays moderate.
pub fn random_quantum_system<R: Rng>(n: usize, rng: &mut R) -> QuantumLinearSystem {
    let dim = 1 << n;
    let mut t = Vec::new();
    let mut row_sum = vec![0.0; dim];
    for i in 0..dim {
        for _ in 0..3 {
            let j = rng.gen_range(0..dim);
            if j == i {
                continue;
            }
            let v: f64 = rng.gen_range(-1.0..1.0);
            t.push((i, j, v));
            t.push((j, i, v));
            row_sum[i] += v.abs();
            row_sum[j] += v.abs();
        }
    }
    for (i, s) in row_sum.iter().enumerate() {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        t.push((i, i, sign * (s + rng.gen_range(0.1..1.0))));
    }
    let a = SparseMatrix::from_triplets(dim, dim, t).unwrap();
    let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    to_quantum_form(&a, &b).unwrap()
}

/// Estimator evaluated on every configuration with exact weights:
/// `pi ∝ |psi|^2` and `rho ∝ b^2`.
pub fn exhaustive_estimate(rbm: &RbmState, sys: &QuantumLinearSystem) -> f64 {
    let psi = rbm.statevector();
    let configs: Vec<usize> = (0..sys.dim()).collect();
    let pw: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    let rho: Vec<usize> = configs.iter().copied().filter(|&x| sys.b[x] != 0.0).collect();
    let rw: Vec<f64> = rho.iter().map(|&x| sys.b[x] * sys.b[x]).collect();
    estimate_loss_weighted(rbm, sys, (&configs, &pw), (&rho, &rw), false).unwrap()
}

/// `(trace distance to the normalized solution, kappa sqrt(L) / ||A||)`,
/// with the singular values taken from a dense SVD.
pub fn trace_distance_and_bound(rbm: &RbmState, sys: &QuantumLinearSystem) -> (f64, f64) {
    let x = direct_solve(&sys.a, &sys.b).unwrap();
    let f = fidelity(&rbm.statevector(), &x).clamp(0.0, 1.0);
    let loss = exact_global_loss(rbm, sys).unwrap();
    let sv = sys.a.to_dense().singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    let kappa = smax / smin;
    ((1.0 - f).sqrt(), kappa * loss.sqrt() / smax)
}
