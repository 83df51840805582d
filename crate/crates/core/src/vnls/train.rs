use std::borrow::Cow;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::loss::{exact_global_loss_state, reference_for, Evaluator, Prepared};
use super::rbm::RbmState;
use super::sampler::{histogram, sample_pi, sample_rho, stream_rng};
use super::sr::{sr_moments, sr_step};
use super::VnlsConfig;
use crate::error::{Error, Result};
use crate::linsys::{condition_number, direct_solve, QuantumLinearSystem};
use crate::smoothing::savitzky_golay;

type C64 = Complex64;

const DENSE_REFERENCE_LIMIT: usize = 1 << 12;

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainingReport {
    pub n_qubits: usize,
    pub iterations: usize,
    /// Estimated loss before each parameter update.
    pub losses: Vec<f64>,
    /// `|<psi|x*>|^2 / (<psi|psi> |x*|^2)` against the reference solution.
    pub fidelity: Option<f64>,
    /// Dense loss of the final state.
    pub exact_loss: Option<f64>,
    pub condition_number: Option<f64>,
    /// `kappa sqrt(L) / ||A||` with the final estimated loss and `||A|| = 1`.
    pub bound: Option<f64>,
    pub sr_fallbacks: usize,
    pub wall_clock_seconds: f64,
    /// Why training stopped early, if it did.
    pub aborted: Option<String>,
}

impl TrainingReport {
    /// Losses smoothed with a window of 51 and cubic order.
    pub fn smoothed_losses(&self) -> Vec<f64> {
        savitzky_golay(&self.losses, 51, 3)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

pub fn fidelity(psi: &[C64], x: &[f64]) -> f64 {
    let overlap: C64 = psi.iter().zip(x).map(|(p, v)| p.conj() * *v).sum();
    let np: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let nx: f64 = x.iter().map(|v| v * v).sum();
    if np == 0.0 || nx == 0.0 {
        return 0.0;
    }
    (overlap.norm_sqr() / (np * nx)).clamp(0.0, 1.0)
}

fn rho_seed(seed: u64, iteration: usize) -> u64 {
    seed ^ (iteration as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Trains with the direct solution of `system` as the fidelity reference
/// (skipped above 4096 unknowns).
pub fn train(system: &QuantumLinearSystem, config: &VnlsConfig) -> Result<(RbmState, TrainingReport)> {
    let reference = if system.dim() <= DENSE_REFERENCE_LIMIT {
        direct_solve(&system.a, &system.b).ok()
    } else {
        None
    };
    train_with_reference(system, config, reference.as_deref())
}

/// Sample, evaluate local energies, take an SR step; repeat.
///
/// A non-finite loss or parameter vector stops training; the last finite
/// parameters are returned and the reason is stored in the report.
pub fn train_with_reference(
    system: &QuantumLinearSystem,
    config: &VnlsConfig,
    reference: Option<&[f64]>,
) -> Result<(RbmState, TrainingReport)> {
    config.validate()?;
    if let Some(r) = reference {
        if r.len() != system.dim() {
            return Err(Error::invalid("reference solution has the wrong length"));
        }
    }
    let start = Instant::now();
    let n = system.n_qubits;
    let mut init_rng = stream_rng(config.seed, u64::MAX - 1);
    let mut rbm = RbmState::random(n, config.hidden_units(n), config.init_std, &mut init_rng);
    let prep = Prepared::new(system);
    let mc = config.mc_params();
    let mut report = TrainingReport {
        n_qubits: n,
        ..Default::default()
    };

    for t in 0..config.iterations {
        match iterate(&rbm, &prep, config, &mc, t) {
            Ok((loss, next, fallback)) if loss.is_finite() && next.is_finite() => {
                report.losses.push(loss);
                report.sr_fallbacks += usize::from(fallback);
                rbm = next;
            }
            Ok((loss, _, _)) => {
                report.aborted = Some(format!("non-finite loss or parameters at iteration {t} (loss {loss})"));
                break;
            }
            Err(e) if e.is_numerical() => {
                report.aborted = Some(format!("iteration {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    report.iterations = report.losses.len();

    if n <= 16 {
        let psi = rbm.statevector();
        report.fidelity = reference.map(|x| fidelity(&psi, x));
        report.exact_loss = exact_global_loss_state(&psi, system).ok();
    }
    if system.dim() <= DENSE_REFERENCE_LIMIT {
        report.condition_number = condition_number(&system.a).ok();
    }
    if let (Some(k), Some(l)) = (report.condition_number, report.final_loss()) {
        report.bound = Some(k * l.max(0.0).sqrt());
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((rbm, report))
}

fn iterate(
    rbm: &RbmState,
    prep: &Prepared<'_>,
    config: &VnlsConfig,
    mc: &super::McParams,
    t: usize,
) -> Result<(f64, RbmState, bool)> {
    let samples = sample_pi(rbm, config.samples, mc, t as u64);
    let rho = sample_rho(&prep.sys.b, config.samples, rho_seed(config.seed, t))?;
    let (configs, weights) = histogram(&samples);
    let (rc, rw) = histogram(&rho);
    let reference = reference_for(rbm, &configs);
    let mut ev = Evaluator::with_prepared(rbm, Cow::Borrowed(prep), reference);
    let inner = ev.inner(&rc, &rw)?;
    let chunk = configs.len().div_ceil(rayon::current_num_threads()).max(32);
    let per_config = |f: &(dyn Fn(&mut Evaluator<'_>, usize) -> Result<C64> + Sync)| -> Result<Vec<C64>> {
        let parts = configs
            .par_chunks(chunk)
            .map(|xs| {
                let mut ev = Evaluator::with_prepared(rbm, Cow::Borrowed(prep), reference);
                xs.iter().map(|&x| f(&mut ev, x)).collect::<Result<Vec<C64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.concat())
    };
    let mut energies = per_config(&|ev, x| ev.local_energy(x, inner))?;
    let mut loss: f64 = energies.iter().zip(&weights).map(|(l, w)| l.re * w).sum();
    if config.normalize_loss {
        let norms = per_config(&|ev, x| ev.local_norm(x))?;
        let h_a: f64 = norms.iter().zip(&weights).map(|(v, w)| v.re * w).sum();
        loss /= h_a;
        energies.iter_mut().for_each(|l| *l /= h_a);
    }
    let moments = sr_moments(rbm, &configs, &weights, &energies);
    let (next, fallback) = sr_step(rbm, &moments, config.learning_rate, config.sr_regularization);
    Ok((loss, next, fallback))
}
