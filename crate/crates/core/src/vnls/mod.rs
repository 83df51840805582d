//! Variational neural linear solver.
//!
//! A complex RBM `psi` is trained so that `A psi` is parallel to `b`, by
//! minimizing a Monte Carlo estimate of
//! `<psi|A^dag (I - |b><b|) A|psi> / <psi|psi>` with stochastic
//! reconfiguration. Dense evaluators of the same objective (and of its local
//! variant) are provided for small systems as reference values.

mod ising;
mod loss;
mod rbm;
mod sampler;
mod solver;
mod spin;
mod sr;
mod train;

pub use ising::generate_ising_system;
pub use loss::{
    estimate_loss, estimate_loss_weighted, exact_global_loss, exact_global_loss_state,
    exact_local_loss, inner_estimate, local_energy, Evaluator,
};
pub use rbm::{log_2cosh, RbmState};
pub use sampler::{sample_pi, sample_rho, McParams};
pub use solver::VnlsSolver;
pub use spin::SpinConfiguration;
pub use sr::{sr_moments, sr_step, sr_update, SrMoments};
pub use train::{fidelity, train, train_with_reference, TrainingReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VnlsConfig {
    pub iterations: usize,
    pub samples: usize,
    pub learning_rate: f64,
    /// Diagonal shift of the S matrix, relative to its diagonal.
    pub sr_regularization: f64,
    /// Metropolis sweeps discarded per chain before sampling.
    pub burn_in: usize,
    /// Sweeps between recorded samples.
    pub thinning: usize,
    pub chains: usize,
    pub seed: u64,
    pub fidelity_target: f64,
    /// Hidden units per visible unit.
    pub hidden_density: f64,
    pub init_std: f64,
    /// Divide the loss by the estimated `<A^dag A>`.
    pub normalize_loss: bool,
}

impl Default for VnlsConfig {
    fn default() -> Self {
        Self {
            iterations: 2500,
            samples: 1024,
            learning_rate: 0.05,
            sr_regularization: 1e-3,
            burn_in: 100,
            thinning: 1,
            chains: 8,
            seed: 0,
            fidelity_target: 0.95,
            hidden_density: 2.0,
            init_std: 0.01,
            normalize_loss: false,
        }
    }
}

impl VnlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 64 {
            return Err(Error::config("vnls.samples", "must be at least 64"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("vnls.learning_rate", "must be positive"));
        }
        if !(self.sr_regularization >= 0.0) {
            return Err(Error::config("vnls.sr_regularization", "must be >= 0"));
        }
        if self.chains == 0 {
            return Err(Error::config("vnls.chains", "must be positive"));
        }
        if self.thinning == 0 {
            return Err(Error::config("vnls.thinning", "must be positive"));
        }
        if !(self.hidden_density > 0.0) {
            return Err(Error::config("vnls.hidden_density", "must be positive"));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::config("vnls.init_std", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.fidelity_target) {
            return Err(Error::config("vnls.fidelity_target", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn mc_params(&self) -> McParams {
        McParams {
            burn_in: self.burn_in,
            thinning: self.thinning,
            chains: self.chains,
            seed: self.seed,
        }
    }

    pub fn hidden_units(&self, n_visible: usize) -> usize {
        ((self.hidden_density * n_visible as f64).round() as usize).max(1)
    }
}
