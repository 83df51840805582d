//! Sparse matrices, the classical direct solver, and the padded, normalized
//! "quantum form" of a linear system consumed by the VNLS and the Pauli
//! analyzer.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and no explicit
/// zeros are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|(i, j, _)| *i >= nrows || *j >= ncols) {
            return Err(Error::invalid(format!(
                "entry ({i}, {j}) outside {nrows}x{ncols} matrix"
            )));
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        let mut iter = triplets.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                rows.push(i);
                col_indices.push(j);
                values.push(v);
            }
        }
        for &i in &rows {
            row_offsets[i + 1] += 1;
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), triplets).expect("indices in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            a[(i, j)] = v;
        }
        a
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn matvec_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| x[j] * v).sum()
            })
            .collect()
    }

    /// `A^T x` without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec dimension mismatch");
        let mut out = vec![0.0; self.ncols];
        for (i, j, v) in self.iter() {
            out[j] += v * x[i];
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, triplets).expect("indices in range")
    }

    pub fn scale(&self, factor: f64) -> Self {
        // Rebuilt through triplets so entries that underflow to zero are dropped.
        let triplets = self.iter().map(|(i, j, v)| (i, j, v * factor)).collect();
        Self::from_triplets(self.nrows, self.ncols, triplets).expect("in range")
    }

    /// Sparse product `self * other`.
    pub fn mul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched = Vec::new();
        let mut seen = vec![false; other.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&j, &b) in ocols.iter().zip(ovals) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                triplets.push((i, j, acc[j]));
                acc[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, triplets)
    }

    /// Sub-matrix with the given row and column index lists (in that order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseMatrix {
        let mut position = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            position[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_i, &i) in rows.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &val) in c.iter().zip(v) {
                if position[j] != usize::MAX {
                    triplets.push((new_i, position[j], val));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), triplets).expect("in range")
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// `self + shift * I`.
    pub fn add_diagonal(&self, shift: f64) -> SparseMatrix {
        let n = self.nrows.min(self.ncols);
        let mut triplets: Vec<_> = self.iter().collect();
        triplets.extend((0..n).map(|i| (i, i, shift)));
        Self::from_triplets(self.nrows, self.ncols, triplets).expect("in range")
    }
}

/// Solves `A x = rhs` by dense LU with partial pivoting.
///
/// The matrix is split into the connected components of its sparsity graph
/// first, and each block is factored on its own; Newton systems from
/// separated contact clusters decouple this way.
pub fn direct_solve(a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "direct_solve needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if rhs.len() != a.nrows() {
        return Err(Error::invalid(format!(
            "rhs has length {} but matrix has {} rows",
            rhs.len(),
            a.nrows()
        )));
    }
    let n = a.nrows();
    let mut x = vec![0.0; n];
    for block in connected_components(a) {
        let sub = a.submatrix(&block, &block).to_dense();
        let b: Vec<f64> = block.iter().map(|&i| rhs[i]).collect();
        let xb = dense_lu_solve(&sub, &b).map_err(|e| match e {
            Error::SingularMatrix {
                column,
                pivot,
                scale,
            } => Error::SingularMatrix {
                column: block[column],
                pivot,
                scale,
            },
            other => other,
        })?;
        for (&i, v) in block.iter().zip(xb) {
            x[i] = v;
        }
    }
    Ok(x)
}

fn dense_lu_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::SingularMatrix {
            column: 0,
            pivot: 0.0,
            scale,
        });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let threshold = 1e-13 * scale * (n as f64).max(1.0);
    for k in 0..n {
        if !(u[(k, k)].abs() > threshold) {
            return Err(Error::SingularMatrix {
                column: k,
                pivot: u[(k, k)],
                scale,
            });
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(b);
    let mut x = lu.solve(&rhs).ok_or(Error::SingularMatrix {
        column: 0,
        pivot: 0.0,
        scale,
    })?;
    // One step of iterative refinement.
    let r = &rhs - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(x.iter().copied().collect())
}

/// Groups indices of a square matrix into connected components of the
/// symmetrized sparsity graph, each sorted ascending.
fn connected_components(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, j, _) in a.iter() {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Estimates `||A||_2` with 100 power iterations on `A^T A` from a fixed seed.
pub fn spectral_norm_estimate(a: &SparseMatrix) -> f64 {
    const ITERATIONS: usize = 100;
    if a.nnz() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..a.ncols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut estimate = 0.0;
    for _ in 0..ITERATIONS {
        let av = a.matvec(&v);
        estimate = norm2(&av);
        let mut w = a.matvec_transpose(&av);
        if norm2(&w) == 0.0 {
            break;
        }
        normalize(&mut w);
        v = w;
    }
    estimate.max(norm2(&a.matvec(&v)))
}

/// Ratio of extreme singular values via dense SVD.
pub fn condition_number(a: &SparseMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid("condition number needs a square matrix"));
    }
    if a.nrows() > 1 << 12 {
        return Err(Error::Infeasible(format!(
            "dense SVD of a {0}x{0} matrix",
            a.nrows()
        )));
    }
    let (smin, smax) = singular_value_range(&a.to_dense());
    if smax == 0.0 || smin < 1e-14 * smax {
        return Err(Error::NumericallySingular {
            ratio: if smax == 0.0 { 0.0 } else { smin / smax },
        });
    }
    Ok(smax / smin)
}

pub(crate) fn singular_value_range(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = a.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (smin, smax)
}

/// A linear system padded to `2^n` and normalized so that `||A||_2 = 1`
/// and `||b||_2 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumLinearSystem {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub n_qubits: usize,
    /// Divisor applied to the padded matrix.
    pub scale: f64,
    pub original_dim: usize,
    /// 2-norm of the original right-hand side.
    pub rhs_norm: f64,
}

impl QuantumLinearSystem {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// The unpadded matrix in its original units.
    pub fn original_matrix(&self) -> SparseMatrix {
        let idx: Vec<usize> = (0..self.original_dim).collect();
        self.a.submatrix(&idx, &idx).scale(self.scale)
    }

    pub fn original_rhs(&self) -> Vec<f64> {
        self.b[..self.original_dim]
            .iter()
            .map(|v| v * self.rhs_norm)
            .collect()
    }
}

/// Pads `A x = rhs` to the next power of two (unit diagonal, zero rhs in the
/// padding) and normalizes matrix and right-hand side.
pub fn to_quantum_form(a: &SparseMatrix, rhs: &[f64]) -> Result<QuantumLinearSystem> {
    if !a.is_square() || rhs.len() != a.nrows() {
        return Err(Error::invalid("to_quantum_form needs a square system"));
    }
    let m = a.nrows();
    if m == 0 {
        return Err(Error::invalid("empty system"));
    }
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Err(Error::invalid("right-hand side is zero"));
    }
    let n_qubits = qubits_for(m);
    let dim = 1usize << n_qubits;
    let mut triplets: Vec<_> = a.iter().collect();
    triplets.extend((m..dim).map(|i| (i, i, 1.0)));
    let padded = SparseMatrix::from_triplets(dim, dim, triplets)?;
    let scale = spectral_norm_estimate(&padded);
    let mut b = vec![0.0; dim];
    for (dst, src) in b.iter_mut().zip(rhs) {
        *dst = src / rhs_norm;
    }
    Ok(QuantumLinearSystem {
        a: padded.scale(1.0 / scale),
        b,
        n_qubits,
        scale,
        original_dim: m,
        rhs_norm,
    })
}

/// Number of qubits needed to hold dimension `m` (at least one).
pub fn qubits_for(m: usize) -> usize {
    let mut n = 1;
    while (1usize << n) < m {
        n += 1;
    }
    n
}

/// Maps a unit-norm solution direction of the quantum-form system back to
/// the original system, choosing the scale that minimizes `||A x - b||`.
pub fn from_quantum_solution(qs: &QuantumLinearSystem, x_unit: &[f64]) -> Result<Vec<f64>> {
    let x: Vec<Complex64> = x_unit.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    from_quantum_solution_complex(qs, &x)
}

/// Complex variant: the global phase is fixed by the least-squares scale
/// and the real part is taken afterwards.
pub fn from_quantum_solution_complex(
    qs: &QuantumLinearSystem,
    x_unit: &[Complex64],
) -> Result<Vec<f64>> {
    if x_unit.len() != qs.dim() {
        return Err(Error::invalid(format!(
            "solution has length {} but system dimension is {}",
            x_unit.len(),
            qs.dim()
        )));
    }
    let norm = x_unit.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "solution direction must have unit norm (got {norm})"
        )));
    }
    let ax = qs.a.matvec_complex(x_unit);
    let ax_norm2: f64 = ax.iter().map(|z| z.norm_sqr()).sum();
    let overlap: Complex64 = ax.iter().zip(&qs.b).map(|(z, b)| z.conj() * *b).sum();
    if ax_norm2 == 0.0 || overlap.norm() <= 1e-14 * ax_norm2.sqrt() {
        return Err(Error::DegenerateSolution);
    }
    let alpha = overlap / ax_norm2;
    let factor = qs.rhs_norm / qs.scale;
    Ok(x_unit[..qs.original_dim]
        .iter()
        .map(|z| (alpha * z).re * factor)
        .collect())
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
