use super::train::{train_with_reference, TrainingReport};
use super::VnlsConfig;
use crate::error::Result;
use crate::lcp::{residual_inf, InnerReport, LinearSolver, SolveContext};
use crate::linsys::{direct_solve, from_quantum_solution_complex, to_quantum_form, SparseMatrix};

/// Newton-system solver backed by VNLS training.
///
/// Each system is padded and normalized, an RBM is trained on it, and the
/// unit state vector is rescaled to the least-squares solution of the
/// original system.
#[derive(Clone, Debug, Default)]
pub struct VnlsSolver {
    pub config: VnlsConfig,
    /// Compare against a direct solve and record the fidelity.
    pub track_fidelity: bool,
    pub last_report: Option<TrainingReport>,
}

impl VnlsSolver {
    pub fn new(config: VnlsConfig) -> Self {
        Self {
            config,
            track_fidelity: true,
            last_report: None,
        }
    }
}

impl LinearSolver for VnlsSolver {
    fn solve(
        &mut self,
        a: &SparseMatrix,
        rhs: &[f64],
        ctx: SolveContext,
    ) -> Result<(Vec<f64>, InnerReport)> {
        if rhs.iter().all(|v| *v == 0.0) {
            return Ok((
                vec![0.0; rhs.len()],
                InnerReport {
                    solver: "vnls".into(),
                    dimension: rhs.len(),
                    ..Default::default()
                },
            ));
        }
        let qs = to_quantum_form(a, rhs)?;
        let reference = if self.track_fidelity {
            direct_solve(&qs.a, &qs.b).ok()
        } else {
            None
        };
        let config = VnlsConfig {
            seed: self.config.seed ^ (ctx.newton_iteration as u64).wrapping_mul(0x2545_f491_4f6c_dd1d),
            ..self.config.clone()
        };
        let (rbm, report) = train_with_reference(&qs, &config, reference.as_deref())?;
        let psi = rbm.statevector();
        let x = from_quantum_solution_complex(&qs, &psi)?;
        let residual = residual_inf(a, &x, rhs);
        let inner = InnerReport {
            solver: "vnls".into(),
            dimension: rhs.len(),
            iterations: report.iterations,
            residual,
            fidelity: report.fidelity,
            regularized: false,
        };
        self.last_report = Some(report);
        Ok((x, inner))
    }
}
