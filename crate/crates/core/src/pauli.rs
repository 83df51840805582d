//! Pauli-string expansions of real matrices.
//!
//! A string over `n` qubits is encoded as a base-4 integer whose digit `q`
//! (weight `4^q`) is the letter on qubit `q`: `I = 0`, `X = 1`, `Y = 2`,
//! `Z = 3`. Qubit `q` is bit `q` of a row or column index, so the printed
//! label lists qubit `n - 1` first, matching the Kronecker product order.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linsys::{QuantumLinearSystem, SparseMatrix};

type C64 = Complex64;

pub const MAX_DECOMPOSE_QUBITS: usize = 12;
pub const MAX_RECONSTRUCT_QUBITS: usize = 10;
/// Coefficients below this magnitude are treated as structural zeros.
pub const STORAGE_THRESHOLD: f64 = 1e-15;

const LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];

#[derive(Clone, Debug, PartialEq)]
pub struct PauliExpansion {
    pub n_qubits: usize,
    pub terms: BTreeMap<u64, C64>,
}

impl PauliExpansion {
    pub fn empty(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, code: u64) -> C64 {
        self.terms.get(&code).copied().unwrap_or_default()
    }

    pub fn label(&self, code: u64) -> String {
        code_label(code, self.n_qubits)
    }
}

pub fn code_label(code: u64, n: usize) -> String {
    (0..n)
        .rev()
        .map(|q| LETTERS[(code >> (2 * q) & 3) as usize])
        .collect()
}

pub fn parse_label(label: &str) -> Result<u64> {
    let n = label.chars().count();
    label.chars().enumerate().try_fold(0u64, |acc, (k, ch)| {
        let digit = LETTERS
            .iter()
            .position(|l| *l == ch.to_ascii_uppercase())
            .ok_or_else(|| Error::invalid(format!("bad Pauli letter `{ch}`")))?;
        Ok(acc | (digit as u64) << (2 * (n - 1 - k)))
    })
}

/// `1/2 (4^n + 2^n)`: the number of strings with an even count of `Y`.
pub fn max_real_symmetric_terms(n: usize) -> u64 {
    ((1u64 << (2 * n)) + (1u64 << n)) / 2
}

fn qubits_of_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::invalid(format!(
            "matrix dimension {dim} is not a power of two; pad it first"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Coefficients `c_P = Tr(P A) / 2^n` of every string.
///
/// Each qubit level replaces the 2x2 blocks `(m00, m01, m10, m11)` of that
/// qubit by `(I, X, Y, Z) = ((m00 + m11)/2, (m01 + m10)/2, i(m01 - m10)/2,
/// (m00 - m11)/2)` in place, for `O(n 4^n)` work overall.
pub fn decompose_dense(a: &DMatrix<f64>) -> Result<PauliExpansion> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("Pauli decomposition needs a square matrix"));
    }
    let dim = a.nrows();
    let n = qubits_of_dim(dim)?;
    if n > MAX_DECOMPOSE_QUBITS {
        return Err(Error::Infeasible(format!(
            "Pauli decomposition limited to {MAX_DECOMPOSE_QUBITS} qubits"
        )));
    }
    // Row-major working copy, entry (r, c) at r * dim + c.
    let mut m: Vec<C64> = (0..dim * dim)
        .map(|k| C64::new(a[(k / dim, k % dim)], 0.0))
        .collect();
    let half_i = C64::new(0.0, 0.5);
    for q in 0..n {
        let bit = 1usize << q;
        for r in (0..dim).filter(|r| r & bit == 0) {
            for c in (0..dim).filter(|c| c & bit == 0) {
                let i00 = r * dim + c;
                let i01 = r * dim + (c | bit);
                let i10 = (r | bit) * dim + c;
                let i11 = (r | bit) * dim + (c | bit);
                let (m00, m01, m10, m11) = (m[i00], m[i01], m[i10], m[i11]);
                m[i00] = (m00 + m11) * 0.5;
                m[i01] = (m01 + m10) * 0.5;
                m[i10] = (m01 - m10) * half_i;
                m[i11] = (m00 - m11) * 0.5;
            }
        }
    }
    let mut terms = BTreeMap::new();
    for r in 0..dim {
        for c in 0..dim {
            let v = m[r * dim + c];
            if v.norm() >= STORAGE_THRESHOLD {
                let code = (0..n).fold(0u64, |acc, q| {
                    let digit = 2 * (r >> q & 1) + (c >> q & 1);
                    acc | (digit as u64) << (2 * q)
                });
                terms.insert(code, v);
            }
        }
    }
    Ok(PauliExpansion { n_qubits: n, terms })
}

pub fn decompose(a: &SparseMatrix) -> Result<PauliExpansion> {
    if !a.is_square() {
        return Err(Error::invalid("Pauli decomposition needs a square matrix"));
    }
    let n = qubits_of_dim(a.nrows())?;
    if n > MAX_DECOMPOSE_QUBITS {
        return Err(Error::Infeasible(format!(
            "Pauli decomposition limited to {MAX_DECOMPOSE_QUBITS} qubits"
        )));
    }
    decompose_dense(&a.to_dense())
}

/// Row and column of the single nonzero of string `code` in row `r`, with its value.
fn string_entry(code: u64, n: usize, r: usize) -> (usize, C64) {
    let mut c = r;
    let mut value = C64::new(1.0, 0.0);
    for q in 0..n {
        let rq = r >> q & 1;
        match code >> (2 * q) & 3 {
            1 => c ^= 1 << q,
            2 => {
                c ^= 1 << q;
                // Y = [[0, -i], [i, 0]]
                value *= if rq == 0 { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) };
            }
            3 => {
                if rq == 1 {
                    value = -value;
                }
            }
            _ => {}
        }
    }
    (c, value)
}

/// `sum_P c_P P` as a dense matrix.
pub fn reconstruct(expansion: &PauliExpansion) -> Result<DMatrix<C64>> {
    let n = expansion.n_qubits;
    if n > MAX_RECONSTRUCT_QUBITS {
        return Err(Error::Infeasible(format!(
            "reconstruction limited to {MAX_RECONSTRUCT_QUBITS} qubits"
        )));
    }
    let dim = 1usize << n;
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for (&code, &coef) in &expansion.terms {
        for r in 0..dim {
            let (c, v) = string_entry(code, n, r);
            out[(r, c)] += coef * v;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationStats {
    pub tolerance: f64,
    pub retained: usize,
    pub dropped: usize,
    pub dropped_abs_sum: f64,
    /// Upper bound on `||A - A_tau||_2`.
    pub error_bound: f64,
}

/// Drops every term with `|c| < tolerance`.
pub fn truncate(expansion: &PauliExpansion, tolerance: f64) -> Result<(PauliExpansion, TruncationStats)> {
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("truncation tolerance must be >= 0"));
    }
    let mut kept = PauliExpansion::empty(expansion.n_qubits);
    let mut dropped = 0;
    let mut dropped_abs_sum = 0.0;
    for (&code, &c) in &expansion.terms {
        if c.norm() < tolerance {
            dropped += 1;
            dropped_abs_sum += c.norm();
        } else {
            kept.terms.insert(code, c);
        }
    }
    let stats = TruncationStats {
        tolerance,
        retained: kept.len(),
        dropped,
        dropped_abs_sum,
        error_bound: dropped_abs_sum,
    };
    Ok((kept, stats))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountRow {
    pub n_qubits: usize,
    pub tolerance: f64,
    pub count_min: f64,
    pub q25: f64,
    pub mean: f64,
    pub q75: f64,
    pub count_max: f64,
    pub systems: usize,
    pub theoretical_max: u64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Term-count statistics per qubit count and tolerance.
pub fn count_report(systems: &[QuantumLinearSystem], tolerances: &[f64]) -> Result<Vec<CountRow>> {
    let mut counts: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for sys in systems {
        let full = decompose(&sys.a)?;
        let per_tau = tolerances
            .iter()
            .map(|&t| truncate(&full, t).map(|(e, _)| e.len() as f64))
            .collect::<Result<Vec<_>>>()?;
        counts.entry(sys.n_qubits).or_default().push(per_tau);
    }
    let mut rows = Vec::new();
    for (n, per_system) in counts {
        for (k, &tolerance) in tolerances.iter().enumerate() {
            let mut v: Vec<f64> = per_system.iter().map(|c| c[k]).collect();
            v.sort_by(f64::total_cmp);
            rows.push(CountRow {
                n_qubits: n,
                tolerance,
                count_min: v[0],
                q25: quantile(&v, 0.25),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                q75: quantile(&v, 0.75),
                count_max: v[v.len() - 1],
                systems: v.len(),
                theoretical_max: max_real_symmetric_terms(n),
            });
        }
    }
    Ok(rows)
}

pub fn write_count_report<W: Write>(rows: &[CountRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "n,tau,count_min,q25,mean,q75,count_max,systems,theoretical_max")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{},{},{},{},{},{},{}",
            r.n_qubits, r.tolerance, r.count_min, r.q25, r.mean, r.q75, r.count_max, r.systems, r.theoretical_max
        )?;
    }
    Ok(())
}

/// One line per term: label and the real and imaginary parts.
pub fn write_expansion<W: Write>(expansion: &PauliExpansion, mut out: W) -> std::io::Result<()> {
    writeln!(out, "string,re,im")?;
    for (&code, c) in &expansion.terms {
        writeln!(out, "{},{:e},{:e}", expansion.label(code), c.re, c.im)?;
    }
    Ok(())
}
