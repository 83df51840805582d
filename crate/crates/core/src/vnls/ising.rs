use crate::error::{Error, Result};
use crate::linsys::{QuantumLinearSystem, SparseMatrix};

const MAX_QUBITS: usize = 12;

/// Ising-type test system with condition number `kappa`.
///
/// `A0 = sum_j X_j + J sum_j Z_j Z_{j+1}` on an open chain is shifted and
/// scaled to `A = (A0 + eta I) / zeta` so that its spectrum is
/// `[1 / kappa, 1]`: with `lambda_min`, `lambda_max` the extreme eigenvalues
/// of `A0`, `eta = (lambda_max - kappa lambda_min) / (kappa - 1)` and
/// `zeta = lambda_max + eta`. The right-hand side is the uniform state.
pub fn generate_ising_system(n: usize, kappa: f64, coupling: f64) -> Result<QuantumLinearSystem> {
    if n < 2 {
        return Err(Error::invalid("the Ising system needs at least 2 qubits"));
    }
    if n > MAX_QUBITS {
        return Err(Error::Infeasible(format!(
            "Ising system limited to {MAX_QUBITS} qubits"
        )));
    }
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must exceed 1 (got {kappa})")));
    }
    let dim = 1usize << n;
    let mut triplets = Vec::with_capacity(dim * (n + 1));
    for x in 0..dim {
        let mut diag = 0.0;
        for j in 0..n - 1 {
            let zj = if x >> j & 1 == 0 { 1.0 } else { -1.0 };
            let zk = if x >> (j + 1) & 1 == 0 { 1.0 } else { -1.0 };
            diag += coupling * zj * zk;
        }
        triplets.push((x, x, diag));
        for j in 0..n {
            triplets.push((x, x ^ (1 << j), 1.0));
        }
    }
    let a0 = SparseMatrix::from_triplets(dim, dim, triplets)?;
    let eig = a0.to_dense().symmetric_eigenvalues();
    let lmin = eig.min();
    let lmax = eig.max();
    if !(lmax > lmin) {
        return Err(Error::invalid("degenerate Ising spectrum"));
    }
    let eta = (lmax - kappa * lmin) / (kappa - 1.0);
    let zeta = lmax + eta;
    let a = a0.add_diagonal(eta).scale(1.0 / zeta);
    let b = vec![1.0 / (dim as f64).sqrt(); dim];
    Ok(QuantumLinearSystem {
        a,
        b,
        n_qubits: n,
        scale: 1.0,
        original_dim: dim,
        rhs_norm: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(sys: &QuantumLinearSystem) -> DMatrix<f64> {
        sys.a.to_dense()
    }

    #[test]
    fn measured_condition_number_matches_target() {
        for (n, kappa) in [(2, 5.0), (5, 10.0), (6, 10.0), (4, 100.0)] {
            let sys = generate_ising_system(n, kappa, 0.1).unwrap();
            let sv = dense(&sys).singular_values();
            let measured = sv.max() / sv.min();
            assert!((measured / kappa - 1.0).abs() < 0.01, "n={n}: {measured}");
            assert!((sv.max() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn structure() {
        let n = 5;
        let sys = generate_ising_system(n, 10.0, 0.1).unwrap();
        let d = dense(&sys);
        assert!((&d - d.transpose()).abs().max() == 0.0);
        for i in 0..sys.dim() {
            assert!(sys.a.row(i).0.len() <= n + 2);
        }
        let norm: f64 = sys.b.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-14);
        assert!(sys.b.iter().all(|v| (v - sys.b[0]).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(generate_ising_system(5, 1.0, 0.1).is_err());
        assert!(generate_ising_system(1, 10.0, 0.1).is_err());
    }
}
