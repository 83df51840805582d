//! Mixed LCP assembly and the minimum-map Newton solver.
//!
//! The unknown is `y = (gamma_normal, beta, lambda)` for the frictional
//! problem and just `gamma_normal` for the frictionless one. Every Newton
//! iteration hands a linear system `Q_AA dy_A = rhs` to an injected
//! [`LinearSolver`].

use serde::Serialize;

use crate::contact::ContactSet;
use crate::error::{Error, Result};
use crate::linsys::{direct_solve, norm_inf, SparseMatrix};
use crate::state::MassMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub n_contacts: usize,
    pub cone_directions: usize,
    pub frictional: bool,
}

impl BlockLayout {
    pub fn size(&self) -> usize {
        if self.frictional {
            (self.cone_directions + 2) * self.n_contacts
        } else {
            self.n_contacts
        }
    }

    /// Index range of the normal impulses in `y`.
    pub fn normal(&self) -> std::ops::Range<usize> {
        0..self.n_contacts
    }

    /// Index range of the friction-direction impulses (empty when frictionless).
    pub fn tangent(&self) -> std::ops::Range<usize> {
        if self.frictional {
            self.n_contacts..(self.cone_directions + 1) * self.n_contacts
        } else {
            self.n_contacts..self.n_contacts
        }
    }

    /// Index range of the cone slack variables (empty when frictionless).
    pub fn slack(&self) -> std::ops::Range<usize> {
        if self.frictional {
            (self.cone_directions + 1) * self.n_contacts..self.size()
        } else {
            self.n_contacts..self.n_contacts
        }
    }
}

#[derive(Clone, Debug)]
pub struct LcpProblem {
    pub q: SparseMatrix,
    pub r: Vec<f64>,
    pub layout: BlockLayout,
}

impl LcpProblem {
    pub fn size(&self) -> usize {
        self.r.len()
    }
}

/// Builds `Q` and `r` for the contact set.
///
/// Returns `None` when there are no contacts; the caller skips the solve.
pub fn assemble_lcp(
    contacts: &ContactSet,
    mass: &MassMatrix,
    v_known: &[f64],
    friction: f64,
    frictionless: bool,
) -> Result<Option<LcpProblem>> {
    if contacts.is_empty() {
        return Ok(None);
    }
    if v_known.len() != mass.dim() || contacts.d_normal.nrows() != mass.dim() {
        return Err(Error::invalid("velocity, mass and contact dimensions disagree"));
    }
    let nc = contacts.len();
    let s = contacts.cone_directions;
    let inv_mass = mass.inverse_diag();

    let layout = BlockLayout {
        n_contacts: nc,
        cone_directions: s,
        frictional: !frictionless,
    };

    // W = [D_normal D_tangent] (or just D_normal), Q_top = W^T M^-1 W.
    let w = if frictionless {
        contacts.d_normal.clone()
    } else {
        let mut triplets: Vec<_> = contacts.d_normal.iter().collect();
        triplets.extend(contacts.d_tangent.iter().map(|(i, j, v)| (i, j + nc, v)));
        SparseMatrix::from_triplets(mass.dim(), (s + 1) * nc, triplets)?
    };
    let wt = w.transpose();
    let scaled_w = {
        let triplets = w.iter().map(|(i, j, v)| (i, j, v * inv_mass[i])).collect();
        SparseMatrix::from_triplets(w.nrows(), w.ncols(), triplets)?
    };
    let gram = wt.mul(&scaled_w)?;
    let r_top = w.matvec_transpose(v_known);

    if frictionless {
        return Ok(Some(LcpProblem {
            q: gram,
            r: r_top,
            layout,
        }));
    }

    let m = layout.size();
    let slack0 = (s + 1) * nc;
    let mut triplets: Vec<_> = gram.iter().collect();
    for k in 0..nc {
        for l in 0..s {
            let beta = nc + k * s + l;
            // E block: beta rows, lambda columns.
            triplets.push((beta, slack0 + k, 1.0));
            // -E^T block: lambda rows, beta columns.
            triplets.push((slack0 + k, beta, -1.0));
        }
        // mu I block: lambda rows, gamma columns.
        triplets.push((slack0 + k, k, friction));
    }
    let q = SparseMatrix::from_triplets(m, m, triplets)?;
    let mut r = r_top;
    r.resize(m, 0.0);
    Ok(Some(LcpProblem { q, r, layout }))
}

/// `phi_i = min(y_i, (Q y + r)_i)`.
pub fn minimum_map(y: &[f64], q: &SparseMatrix, r: &[f64]) -> Vec<f64> {
    let z = q.matvec(y);
    y.iter()
        .zip(z.iter().zip(r))
        .map(|(&yi, (&zi, &ri))| yi.min(zi + ri))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    /// Indices with `z_i < y_i`.
    pub active: Vec<usize>,
    /// The rest (ties included).
    pub inactive: Vec<usize>,
}

pub fn partition_indices(y: &[f64], z: &[f64]) -> Partition {
    let mut p = Partition::default();
    for (i, (yi, zi)) in y.iter().zip(z).enumerate() {
        if zi < yi {
            p.active.push(i);
        } else {
            p.inactive.push(i);
        }
    }
    p
}

/// Diagnostics from one inner linear solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InnerReport {
    pub solver: String,
    pub dimension: usize,
    pub iterations: usize,
    /// `||A x - rhs||_inf` of the returned solution.
    pub residual: f64,
    pub fidelity: Option<f64>,
    pub regularized: bool,
}

/// Context passed along with each inner system.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveContext {
    pub newton_iteration: usize,
}

/// Solver for the Newton systems `Q_AA dy_A = rhs`.
pub trait LinearSolver {
    fn solve(
        &mut self,
        a: &SparseMatrix,
        rhs: &[f64],
        ctx: SolveContext,
    ) -> Result<(Vec<f64>, InnerReport)>;
}

/// Dense LU with partial pivoting.
#[derive(Clone, Copy, Debug, Default)]
pub struct DirectSolver;

impl LinearSolver for DirectSolver {
    fn solve(
        &mut self,
        a: &SparseMatrix,
        rhs: &[f64],
        _ctx: SolveContext,
    ) -> Result<(Vec<f64>, InnerReport)> {
        let x = direct_solve(a, rhs)?;
        let residual = residual_inf(a, &x, rhs);
        Ok((
            x,
            InnerReport {
                solver: "direct".into(),
                dimension: a.nrows(),
                iterations: 1,
                residual,
                fidelity: None,
                regularized: false,
            },
        ))
    }
}

impl<S: LinearSolver + ?Sized> LinearSolver for &mut S {
    fn solve(
        &mut self,
        a: &SparseMatrix,
        rhs: &[f64],
        ctx: SolveContext,
    ) -> Result<(Vec<f64>, InnerReport)> {
        (**self).solve(a, rhs, ctx)
    }
}

pub(crate) fn residual_inf(a: &SparseMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = a.matvec(x);
    ax.iter()
        .zip(rhs)
        .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonIterationReport {
    pub active: usize,
    pub residual_before: f64,
    pub residual_after: f64,
    pub step_scale: f64,
    pub inner: Option<InnerReport>,
}

/// One Newton increment from `y`.
///
/// The `B` rows are solved exactly, `dy_B = -phi_B`, and the `A` rows solve
/// `Q_AA dy_A = Q_AB phi_B - phi_A`. A singular `Q_AA` gets a Tikhonov shift
/// of `1e-10 ||Q_AA||_inf` and one retry; if that is still singular the
/// minimum-norm least-squares increment is used.
pub fn newton_step<S: LinearSolver + ?Sized>(
    q: &SparseMatrix,
    r: &[f64],
    y: &[f64],
    solver: &mut S,
    iteration: usize,
) -> Result<(Vec<f64>, Option<InnerReport>)> {
    increment(q, r, y, solver, iteration, false)
}

fn increment<S: LinearSolver + ?Sized>(
    q: &SparseMatrix,
    r: &[f64],
    y: &[f64],
    solver: &mut S,
    iteration: usize,
    minimum_norm: bool,
) -> Result<(Vec<f64>, Option<InnerReport>)> {
    let z: Vec<f64> = q.matvec(y).iter().zip(r).map(|(a, b)| a + b).collect();
    let phi: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a.min(*b)).collect();
    let part = partition_indices(y, &z);
    let mut dy: Vec<f64> = phi.iter().map(|p| -p).collect();
    if part.active.is_empty() {
        return Ok((dy, None));
    }

    let q_aa = q.submatrix(&part.active, &part.active);
    let phi_b: Vec<f64> = part.inactive.iter().map(|&i| phi[i]).collect();
    let coupling = q.submatrix(&part.active, &part.inactive).matvec(&phi_b);
    let rhs: Vec<f64> = part
        .active
        .iter()
        .zip(coupling)
        .map(|(&i, c)| c - phi[i])
        .collect();

    let ctx = SolveContext {
        newton_iteration: iteration,
    };
    let first = if minimum_norm {
        Err(Error::SingularMatrix {
            column: 0,
            pivot: 0.0,
            scale: 0.0,
        })
    } else {
        solver.solve(&q_aa, &rhs, ctx)
    };
    let (dy_a, report) = match first {
        Ok(ok) => ok,
        Err(Error::SingularMatrix { .. }) => {
            let shift = 1e-10 * q_aa.norm_inf();
            let shifted = q_aa.add_diagonal(shift);
            let retry = if minimum_norm {
                Err(Error::SingularMatrix {
                    column: 0,
                    pivot: 0.0,
                    scale: 0.0,
                })
            } else {
                solver.solve(&shifted, &rhs, ctx)
            };
            let (x, mut rep) = match retry {
                Ok(ok) => ok,
                Err(Error::SingularMatrix { .. }) => minimum_norm_solve(&q_aa, &rhs),
                Err(e) => {
                    return Err(Error::InnerSolve {
                        iteration,
                        source: Box::new(e),
                    })
                }
            };
            rep.regularized = true;
            (x, rep)
        }
        Err(e) => {
            return Err(Error::InnerSolve {
                iteration,
                source: Box::new(e),
            })
        }
    };
    for (&i, v) in part.active.iter().zip(dy_a) {
        dy[i] = v;
    }
    Ok((dy, Some(report)))
}

/// Least-squares solution of smallest norm, for blocks that stay singular
/// after the shift (the frictional `Q` is not positive semidefinite).
fn minimum_norm_solve(a: &SparseMatrix, rhs: &[f64]) -> (Vec<f64>, InnerReport) {
    let dense = a.to_dense();
    let svd = dense.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let b = nalgebra::DVector::from_column_slice(rhs);
    let x: Vec<f64> = svd
        .solve(&b, cutoff)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; rhs.len()]);
    let residual = residual_inf(a, &x, rhs);
    (
        x,
        InnerReport {
            solver: "minimum-norm".into(),
            dimension: rhs.len(),
            iterations: 1,
            residual,
            fidelity: None,
            regularized: true,
        },
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct LcpSolution {
    pub y: Vec<f64>,
    /// `||phi(y)||_inf`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reports: Vec<NewtonIterationReport>,
}

/// Worst violations of the three LCP conditions at `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    pub min_y: f64,
    pub min_z: f64,
    pub complementarity: f64,
}

impl Certificate {
    pub fn compute(q: &SparseMatrix, r: &[f64], y: &[f64]) -> Self {
        let z: Vec<f64> = q.matvec(y).iter().zip(r).map(|(a, b)| a + b).collect();
        Self {
            min_y: y.iter().copied().fold(f64::INFINITY, f64::min),
            min_z: z.iter().copied().fold(f64::INFINITY, f64::min),
            complementarity: y.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().abs(),
        }
    }

    /// `min y >= -tol`, `min z >= -tol`, `|y^T z| <= tol (1 + ||Q||_inf ||y|| + ||r||)`.
    pub fn holds(&self, q: &SparseMatrix, r: &[f64], y: &[f64], tol: f64) -> bool {
        let scale = 1.0 + q.norm_inf() * norm_inf(y) + norm_inf(r);
        self.min_y >= -tol && self.min_z >= -tol && self.complementarity <= tol * scale
    }
}

const MAX_HALVINGS: usize = 10;

/// Full step, halved up to [`MAX_HALVINGS`] times while the residual does
/// not drop below `residual`; returns the best candidate and its scale.
fn line_search(q: &SparseMatrix, r: &[f64], y: &[f64], dy: &[f64], residual: f64) -> (Vec<f64>, f64, f64) {
    let trial = |scale: f64| -> (Vec<f64>, f64) {
        let cand: Vec<f64> = y.iter().zip(dy).map(|(a, d)| a + scale * d).collect();
        let res = norm_inf(&minimum_map(&cand, q, r));
        (cand, res)
    };
    let (mut next, mut next_res) = trial(1.0);
    let mut step_scale = 1.0;
    if next_res > residual {
        let mut scale = 1.0;
        for _ in 0..MAX_HALVINGS {
            scale *= 0.5;
            let (cand, res) = trial(scale);
            if res < next_res {
                next = cand;
                next_res = res;
                step_scale = scale;
            }
            if res < residual {
                break;
            }
        }
    }
    (next, next_res, step_scale)
}

/// Minimum-map Newton iteration from `y0` until `||phi||_inf <= tol`.
///
/// If a full step increases the residual, the step is halved up to ten
/// times and the best candidate is taken. On non-convergence the best
/// iterate seen is returned with `converged = false`.
pub fn solve_lcp<S: LinearSolver + ?Sized>(
    q: &SparseMatrix,
    r: &[f64],
    y0: &[f64],
    tol: f64,
    max_iter: usize,
    solver: &mut S,
) -> Result<LcpSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("LCP tolerance must be positive"));
    }
    if !q.is_square() || q.nrows() != r.len() || y0.len() != r.len() {
        return Err(Error::invalid("LCP dimensions disagree"));
    }
    let mut y = y0.to_vec();
    let mut residual = norm_inf(&minimum_map(&y, q, r));
    let mut best = (y.clone(), residual);
    let mut reports = Vec::new();
    let mut iterations = 0;
    while residual > tol && iterations < max_iter {
        let (dy, mut inner) = newton_step(q, r, &y, solver, iterations)?;
        let (mut next, mut next_res, mut step_scale) = line_search(q, r, &y, &dy, residual);
        // A shifted solve of a singular block can return a huge increment
        // that no step length rescues; fall back to the minimum-norm one.
        if next_res >= residual && inner.as_ref().is_some_and(|rep| rep.regularized) {
            let (dy_mn, inner_mn) = increment(q, r, &y, solver, iterations, true)?;
            let (cand, res, scale) = line_search(q, r, &y, &dy_mn, residual);
            if res < next_res {
                (next, next_res, step_scale, inner) = (cand, res, scale, inner_mn);
            }
        }
        reports.push(NewtonIterationReport {
            active: inner.as_ref().map_or(0, |rep| rep.dimension),
            residual_before: residual,
            residual_after: next_res,
            step_scale,
            inner,
        });
        y = next;
        residual = next_res;
        iterations += 1;
        if residual < best.1 {
            best = (y.clone(), residual);
        }
    }
    let converged = residual <= tol;
    let (y, residual) = if converged { (y, residual) } else { best };
    Ok(LcpSolution {
        y,
        residual,
        iterations,
        converged,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{assemble_direction_matrices, build_tangent_frame, linearize_cone, Contact, Pairing, Vec3};
    use crate::state::build_mass_matrix;

    fn head_on_set(s: usize) -> ContactSet {
        let nu = Vec3::x();
        let (t1, t2) = build_tangent_frame(&nu).unwrap();
        let c = Contact {
            pairing: Pairing::Bodies { i: 0, j: 1 },
            normal: nu,
            tangents: [t1, t2],
            directions: linearize_cone(&t1, &t2, s).unwrap(),
            gap: 0.0,
        };
        assemble_direction_matrices(vec![c], 2, s).unwrap()
    }

    fn scalar(v: f64) -> SparseMatrix {
        SparseMatrix::from_triplets(1, 1, vec![(0, 0, v)]).unwrap()
    }

    #[test]
    fn head_on_frictionless_assembly() {
        let set = head_on_set(8);
        let mass = build_mass_matrix(&[1.0, 1.0]).unwrap();
        let v = [1.0, 0.0, 0.0, -1.0, 0.0, 0.0];
        let p = assemble_lcp(&set, &mass, &v, 0.0, true).unwrap().unwrap();
        assert_eq!(p.q.to_dense()[(0, 0)], 2.0);
        assert_eq!(p.r, vec![-2.0]);
        assert_eq!(p.size(), 1);
    }

    #[test]
    fn frictional_assembly_block_structure() {
        let set = head_on_set(4);
        let mass = build_mass_matrix(&[1.0, 2.0]).unwrap();
        let v = [0.5, 0.2, -0.1, -1.0, 0.3, 0.0];
        let mu = 0.4;
        let p = assemble_lcp(&set, &mass, &v, mu, false).unwrap().unwrap();
        assert_eq!(p.size(), 6);
        let q = p.q.to_dense();
        // mu on (slack row, gamma column); 1-based (6, 1).
        assert_eq!(q[(5, 0)], mu);
        for l in 1..5 {
            assert_eq!(q[(5, l)], -1.0);
            assert_eq!(q[(l, 5)], 1.0);
        }
        assert_eq!(q[(5, 5)], 0.0);
        assert_eq!(q[(0, 5)], 0.0);
        // The upper-left Gram block is symmetric PSD.
        let g = q.view((0, 0), (5, 5)).into_owned();
        assert!((&g - g.transpose()).abs().max() < 1e-15);
        let eig = g.symmetric_eigenvalues();
        assert!(eig.iter().all(|e| *e > -1e-12));
        assert_eq!(&p.r[5..], &[0.0]);
        assert_eq!(p.r[0], -1.5);
        assert_eq!(p.layout.tangent(), 1..5);
        assert_eq!(p.layout.slack(), 5..6);
    }

    #[test]
    fn empty_contacts_signal_no_problem() {
        let set = assemble_direction_matrices(Vec::new(), 2, 8).unwrap();
        let mass = build_mass_matrix(&[1.0, 1.0]).unwrap();
        assert!(assemble_lcp(&set, &mass, &[0.0; 6], 0.0, true)
            .unwrap()
            .is_none());
    }

    #[test]
    fn minimum_map_examples() {
        let id = SparseMatrix::identity(2);
        assert_eq!(minimum_map(&[1.0, -2.0], &id, &[0.0, 0.0]), vec![1.0, -2.0]);
        assert_eq!(minimum_map(&[1.0], &scalar(2.0), &[-2.0]), vec![0.0]);
    }

    #[test]
    fn partition_examples() {
        let p = partition_indices(&[1.0, 1.0], &[0.0, 2.0]);
        assert_eq!(p.active, vec![0]);
        assert_eq!(p.inactive, vec![1]);
        let ties = partition_indices(&[0.5, 0.5], &[0.5, 0.5]);
        assert!(ties.active.is_empty());
        let start = partition_indices(&[0.0, 0.0, 0.0], &[-1.0, -0.5, -3.0]);
        assert_eq!(start.active, vec![0, 1, 2]);
    }

    #[test]
    fn newton_step_examples() {
        let q = scalar(2.0);
        let (dy, rep) = newton_step(&q, &[-2.0], &[0.0], &mut DirectSolver, 0).unwrap();
        assert_eq!(dy, vec![1.0]);
        assert_eq!(rep.unwrap().dimension, 1);

        // At the solution the increment vanishes.
        let (dy, _) = newton_step(&q, &[-2.0], &[1.0], &mut DirectSolver, 0).unwrap();
        assert_eq!(dy, vec![0.0]);

        // Empty active set: dy = -phi, no inner solve.
        let q2 = SparseMatrix::identity(2);
        let (dy, rep) = newton_step(&q2, &[1.0, 3.0], &[0.5, -0.25], &mut DirectSolver, 0).unwrap();
        assert!(rep.is_none());
        assert_eq!(dy, vec![-0.5, 0.25]);
    }

    #[test]
    fn singular_block_is_regularized() {
        // Rank-one PSD block, both rows active from y = 0.
        let q = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        let (_, rep) = newton_step(&q, &[-1.0, -1.0], &[0.0, 0.0], &mut DirectSolver, 0).unwrap();
        assert!(rep.unwrap().regularized);
    }

    #[test]
    fn solve_head_on() {
        let sol = solve_lcp(&scalar(2.0), &[-2.0], &[0.0], 1e-8, 100, &mut DirectSolver).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.y, vec![1.0]);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn separating_contacts_need_no_impulse() {
        let q = SparseMatrix::from_dense(&nalgebra::dmatrix![2.0, 1.0; 1.0, 2.0]);
        let sol = solve_lcp(&q, &[0.5, 1.0], &[0.0, 0.0], 1e-8, 100, &mut DirectSolver).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.y, vec![0.0, 0.0]);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn certificate_at_solution() {
        let q = scalar(2.0);
        let c = Certificate::compute(&q, &[-2.0], &[1.0]);
        assert!(c.holds(&q, &[-2.0], &[1.0], 0.0));
        let bad = Certificate::compute(&q, &[-2.0], &[0.5]);
        assert!(!bad.holds(&q, &[-2.0], &[0.5], 1e-8));
    }

    struct FailingSolver;
    impl LinearSolver for FailingSolver {
        fn solve(&mut self, _: &SparseMatrix, _: &[f64], _: SolveContext) -> Result<(Vec<f64>, InnerReport)> {
            Err(Error::DegenerateSolution)
        }
    }

    #[test]
    fn inner_failure_carries_iteration() {
        let err = solve_lcp(&scalar(2.0), &[-2.0], &[0.0], 1e-8, 100, &mut FailingSolver).unwrap_err();
        assert!(matches!(err, Error::InnerSolve { iteration: 0, .. }));
    }
}
