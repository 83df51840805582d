use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::rbm::RbmState;
use super::sampler::histogram;
use crate::error::{Error, Result};

type C64 = Complex64;

/// Force vector and S matrix of stochastic reconfiguration.
#[derive(Clone, Debug)]
pub struct SrMoments {
    /// `F_k = <l conj(O_k)> - <l><conj(O_k)>`.
    pub force: DVector<C64>,
    /// `S_kk' = <conj(O_k) O_k'> - <conj(O_k)><O_k'>`.
    pub s: DMatrix<C64>,
}

/// Moments over weighted configurations; `weights` must sum to one.
pub fn sr_moments(rbm: &RbmState, configs: &[usize], weights: &[f64], energies: &[C64]) -> SrMoments {
    let p = rbm.n_params();
    let nu = configs.len();
    let mut o = DMatrix::<C64>::zeros(nu, p);
    let mut row = vec![C64::default(); p];
    for (u, &x) in configs.iter().enumerate() {
        rbm.log_derivatives(x, &mut row);
        for k in 0..p {
            o[(u, k)] = row[k];
        }
    }
    let mut mean_o = vec![C64::default(); p];
    for (u, &w) in weights.iter().enumerate() {
        for k in 0..p {
            mean_o[k] += o[(u, k)] * w;
        }
    }
    let mean_l: C64 = energies.iter().zip(weights).map(|(l, w)| l * *w).sum();
    let mut force = DVector::<C64>::zeros(p);
    for (u, &w) in weights.iter().enumerate() {
        let sw = w.sqrt();
        let dl = (energies[u] - mean_l) * w;
        for k in 0..p {
            let centered = o[(u, k)] - mean_o[k];
            force[k] += centered.conj() * dl;
            o[(u, k)] = centered * sw;
        }
    }
    let s = o.adjoint() * &o;
    SrMoments { force, s }
}

/// `theta - eta (S + lambda diag(S) + 1e-8 I)^-1 F`. The flag is set when the
/// linear solve failed and a plain gradient step `theta - eta F` was taken.
pub fn sr_step(rbm: &RbmState, m: &SrMoments, eta: f64, lambda: f64) -> (RbmState, bool) {
    let p = m.force.len();
    let mut reg = m.s.clone();
    for k in 0..p {
        let d = m.s[(k, k)].re;
        reg[(k, k)] += C64::new(lambda * d + 1e-8, 0.0);
    }
    let (delta, fallback) = match reg.cholesky().map(|c| c.solve(&m.force)) {
        Some(d) if d.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => (d, false),
        _ => (m.force.clone(), true),
    };
    let mut params = rbm.params();
    for (t, d) in params.iter_mut().zip(delta.iter()) {
        *t -= d * eta;
    }
    let mut next = rbm.clone();
    next.set_params(&params);
    (next, fallback)
}

/// One SR update from raw samples and their local energies.
pub fn sr_update(
    rbm: &RbmState,
    samples: &[usize],
    energies: &[C64],
    eta: f64,
    lambda: f64,
) -> Result<(RbmState, bool)> {
    if samples.is_empty() || samples.len() != energies.len() {
        return Err(Error::invalid("samples and local energies must align and be nonempty"));
    }
    // Repeated configurations have equal energies, so grouping is exact.
    let (configs, weights) = histogram(samples);
    let mut energy_of = std::collections::HashMap::new();
    for (x, l) in samples.iter().zip(energies) {
        energy_of.entry(*x).or_insert(*l);
    }
    let grouped: Vec<C64> = configs.iter().map(|x| energy_of[x]).collect();
    let m = sr_moments(rbm, &configs, &weights, &grouped);
    Ok(sr_step(rbm, &m, eta, lambda))
}
