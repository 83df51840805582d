use std::borrow::Cow;
use std::collections::HashMap;

use num_complex::Complex64;

use super::rbm::RbmState;
use super::sampler::histogram;
use super::spin::SpinConfiguration;
use crate::error::{Error, Result};
use crate::linsys::{QuantumLinearSystem, SparseMatrix};

type C64 = Complex64;

const DENSE_QUBIT_LIMIT: usize = 12;

/// Quantum-form system plus the pieces the local energy needs repeatedly.
#[derive(Clone, Debug)]
pub(crate) struct Prepared<'a> {
    pub sys: &'a QuantumLinearSystem,
    pub at: SparseMatrix,
    pub atb: Vec<f64>,
}

impl<'a> Prepared<'a> {
    pub fn new(sys: &'a QuantumLinearSystem) -> Self {
        Self {
            sys,
            at: sys.a.transpose(),
            atb: sys.a.matvec_transpose(&sys.b),
        }
    }
}

/// Local-energy evaluator for one parameter setting.
///
/// Amplitudes are cached and measured relative to `exp(reference)`, so
/// the ratios in the local energy stay in floating-point range.
pub struct Evaluator<'a> {
    rbm: &'a RbmState,
    prep: Cow<'a, Prepared<'a>>,
    reference: C64,
    psi: HashMap<usize, C64>,
    a_psi: HashMap<usize, C64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(rbm: &'a RbmState, sys: &'a QuantumLinearSystem, reference: C64) -> Result<Self> {
        check_dims(rbm, sys)?;
        Ok(Self::with_prepared(rbm, Cow::Owned(Prepared::new(sys)), reference))
    }

    pub(crate) fn with_prepared(
        rbm: &'a RbmState,
        prep: Cow<'a, Prepared<'a>>,
        reference: C64,
    ) -> Self {
        Self {
            rbm,
            prep,
            reference,
            psi: HashMap::new(),
            a_psi: HashMap::new(),
        }
    }

    /// `psi(x) / exp(reference)`.
    pub fn psi(&mut self, x: usize) -> C64 {
        amplitude(&mut self.psi, self.rbm, self.reference, x)
    }

    /// `<y|A|psi>`, same scaling as [`Self::psi`].
    pub fn a_psi(&mut self, y: usize) -> C64 {
        let Self {
            rbm,
            prep,
            reference,
            psi,
            a_psi,
        } = self;
        a_psi_entry(a_psi, psi, &prep.sys.a, rbm, *reference, y)
    }

    /// `<x|A^dag A|psi>` by a pass over column `x` of `A` and then rows of `A`.
    pub fn ata_psi(&mut self, x: usize) -> C64 {
        let Self {
            rbm,
            prep,
            reference,
            psi,
            a_psi,
        } = self;
        let (rows, vals) = prep.at.row(x);
        let mut acc = C64::default();
        for (&y, &v) in rows.iter().zip(vals) {
            acc += a_psi_entry(a_psi, psi, &prep.sys.a, rbm, *reference, y) * v;
        }
        acc
    }

    /// Weighted mean of `<x'|A|psi> / <x'|b>` over `x'`.
    pub fn inner(&mut self, configs: &[usize], weights: &[f64]) -> Result<C64> {
        let mut acc = C64::default();
        for (&x, &w) in configs.iter().zip(weights) {
            let bx = self.prep.sys.b[x];
            if bx == 0.0 {
                return Err(Error::invalid(format!(
                    "rho sample {x} lies outside the support of b"
                )));
            }
            acc += self.a_psi(x) * (w / bx);
        }
        Ok(acc)
    }

    pub fn local_energy(&mut self, x: usize, inner: C64) -> Result<C64> {
        let p = self.psi(x);
        if p.norm() == 0.0 || !p.re.is_finite() || !p.im.is_finite() {
            return Err(Error::AmplitudeUnderflow(x));
        }
        let atb = self.prep.atb[x];
        Ok((self.ata_psi(x) - inner * atb) / p)
    }

    /// `<x|A^dag A|psi> / <x|psi>`, the local value of `<A^dag A>`.
    pub fn local_norm(&mut self, x: usize) -> Result<C64> {
        let p = self.psi(x);
        if p.norm() == 0.0 {
            return Err(Error::AmplitudeUnderflow(x));
        }
        Ok(self.ata_psi(x) / p)
    }
}

fn amplitude(cache: &mut HashMap<usize, C64>, rbm: &RbmState, reference: C64, x: usize) -> C64 {
    *cache
        .entry(x)
        .or_insert_with(|| (rbm.log_amplitude(x) - reference).exp())
}

fn a_psi_entry(
    cache: &mut HashMap<usize, C64>,
    psi: &mut HashMap<usize, C64>,
    a: &SparseMatrix,
    rbm: &RbmState,
    reference: C64,
    y: usize,
) -> C64 {
    if let Some(v) = cache.get(&y) {
        return *v;
    }
    let (cols, vals) = a.row(y);
    let mut acc = C64::default();
    for (&z, &v) in cols.iter().zip(vals) {
        acc += amplitude(psi, rbm, reference, z) * v;
    }
    cache.insert(y, acc);
    acc
}

fn check_dims(rbm: &RbmState, sys: &QuantumLinearSystem) -> Result<()> {
    if rbm.n_visible != sys.n_qubits {
        return Err(Error::invalid(format!(
            "RBM has {} visible units but the system has {} qubits",
            rbm.n_visible, sys.n_qubits
        )));
    }
    Ok(())
}

/// Largest real part of the log-amplitude over `configs`.
pub(crate) fn reference_for(rbm: &RbmState, configs: &[usize]) -> C64 {
    let re = configs
        .iter()
        .map(|&x| rbm.log_amplitude(x).re)
        .fold(f64::NEG_INFINITY, f64::max);
    C64::new(if re.is_finite() { re } else { 0.0 }, 0.0)
}

fn normalized(weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("sample weights must have a positive sum"));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Local energy at `x` in unshifted units; `inner` must come from
/// [`inner_estimate`] on the same RBM.
pub fn local_energy(
    rbm: &RbmState,
    sys: &QuantumLinearSystem,
    x: &SpinConfiguration,
    inner: C64,
) -> Result<C64> {
    let mut ev = Evaluator::new(rbm, sys, C64::default())?;
    ev.local_energy(x.index(), inner)
}

/// Sample mean of `<x'|A|psi> / <x'|b>` over `x' ~ rho`, in unshifted units.
pub fn inner_estimate(rbm: &RbmState, sys: &QuantumLinearSystem, samples_rho: &[usize]) -> Result<C64> {
    if samples_rho.is_empty() {
        return Err(Error::invalid("no rho samples"));
    }
    let mut ev = Evaluator::new(rbm, sys, C64::default())?;
    let (configs, weights) = histogram(samples_rho);
    ev.inner(&configs, &weights)
}

/// Loss estimate from weighted configurations. With `normalize` the result
/// is divided by the estimated `<A^dag A>`.
pub fn estimate_loss_weighted(
    rbm: &RbmState,
    sys: &QuantumLinearSystem,
    pi: (&[usize], &[f64]),
    rho: (&[usize], &[f64]),
    normalize: bool,
) -> Result<f64> {
    check_dims(rbm, sys)?;
    if pi.0.is_empty() || rho.0.is_empty() {
        return Err(Error::invalid("sample sets must be nonempty"));
    }
    let wp = normalized(pi.1)?;
    let wr = normalized(rho.1)?;
    let mut ev = Evaluator::new(rbm, sys, reference_for(rbm, pi.0))?;
    let inner = ev.inner(rho.0, &wr)?;
    let mut loss = 0.0;
    let mut h_a = 0.0;
    for (&x, &w) in pi.0.iter().zip(&wp) {
        loss += w * ev.local_energy(x, inner)?.re;
        if normalize {
            h_a += w * ev.local_norm(x)?.re;
        }
    }
    Ok(if normalize { loss / h_a } else { loss })
}

/// Monte Carlo loss: real part of the mean local energy over `samples_pi`.
pub fn estimate_loss(
    rbm: &RbmState,
    sys: &QuantumLinearSystem,
    samples_pi: &[usize],
    samples_rho: &[usize],
    normalize: bool,
) -> Result<f64> {
    let (pc, pw) = histogram(samples_pi);
    let (rc, rw) = histogram(samples_rho);
    estimate_loss_weighted(rbm, sys, (&pc, &pw), (&rc, &rw), normalize)
}

fn dense_guard(sys: &QuantumLinearSystem) -> Result<()> {
    if sys.n_qubits > DENSE_QUBIT_LIMIT {
        return Err(Error::Infeasible(format!(
            "dense loss needs n <= {DENSE_QUBIT_LIMIT} qubits (got {})",
            sys.n_qubits
        )));
    }
    Ok(())
}

fn dense_a_psi(sys: &QuantumLinearSystem, psi: &[C64]) -> Result<(Vec<C64>, f64)> {
    dense_guard(sys)?;
    if psi.len() != sys.dim() {
        return Err(Error::invalid("state vector length differs from system dimension"));
    }
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if !(norm2 > 0.0) {
        return Err(Error::invalid("zero state vector"));
    }
    Ok((sys.a.matvec_complex(psi), norm2))
}

/// `<psi|A^dag (I - |b><b|) A|psi> / <psi|psi>`.
pub fn exact_global_loss_state(psi: &[C64], sys: &QuantumLinearSystem) -> Result<f64> {
    let (ap, norm2) = dense_a_psi(sys, psi)?;
    let ap2: f64 = ap.iter().map(|z| z.norm_sqr()).sum();
    let overlap: C64 = ap.iter().zip(&sys.b).map(|(z, b)| z * *b).sum();
    Ok(((ap2 - overlap.norm_sqr()) / norm2).max(0.0))
}

pub fn exact_global_loss(rbm: &RbmState, sys: &QuantumLinearSystem) -> Result<f64> {
    check_dims(rbm, sys)?;
    dense_guard(sys)?;
    exact_global_loss_state(&rbm.statevector(), sys)
}

/// Rayleigh quotient of `A^dag U (I - 1/n sum_j |0_j><0_j|) U^dag A`, with
/// `U` the Householder reflection mapping `|0>` to `|b>`.
pub fn exact_local_loss(psi: &[C64], sys: &QuantumLinearSystem) -> Result<f64> {
    let (mut v, norm2) = dense_a_psi(sys, psi)?;
    let b = &sys.b;
    let mut u = b.iter().map(|x| -x).collect::<Vec<_>>();
    u[0] += 1.0;
    let uu: f64 = u.iter().map(|x| x * x).sum();
    if uu > 1e-30 {
        let proj: C64 = u.iter().zip(&v).map(|(a, z)| z * *a).sum::<C64>() * (2.0 / uu);
        for (z, a) in v.iter_mut().zip(&u) {
            *z -= proj * *a;
        }
    }
    let n = sys.n_qubits;
    let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let mut zero_weight = 0.0;
    for j in 0..n {
        zero_weight += v
            .iter()
            .enumerate()
            .filter(|(x, _)| x >> j & 1 == 0)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>();
    }
    Ok(((total - zero_weight / n as f64) / norm2).max(0.0))
}
