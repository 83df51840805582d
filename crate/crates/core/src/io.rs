//! File formats: Matrix Market coordinate matrices, one-value-per-line
//! vectors, and checkpoint bundles (`A.mtx`, `b.txt`, `meta.json`).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{QuantumLinearSystem, SparseMatrix};

pub const MATRIX_FILE: &str = "A.mtx";
pub const RHS_FILE: &str = "b.txt";
pub const META_FILE: &str = "meta.json";

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn write_matrix_market<W: Write>(a: &SparseMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.iter() {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn save_matrix_market(a: &SparseMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_matrix_market(a, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads a real `coordinate` file, `general` or `symmetric`.
pub fn load_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header?.to_ascii_lowercase();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(parse_err(path, 1, "expected a MatrixMarket coordinate header"));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(path, 1, format!("unsupported field `{}`", fields[3])));
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (k, line) in lines {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(parse_err(path, lineno, "expected `rows cols nnz`"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| parse_err(path, lineno, e.to_string()));
                size = Some((p(parts[0])?, p(parts[1])?, p(parts[2])?));
            }
            Some((rows, cols, _)) => {
                if parts.len() != 3 {
                    return Err(parse_err(path, lineno, "expected `row col value`"));
                }
                let idx = |s: &str, max: usize| -> Result<usize> {
                    let v = s.parse::<usize>().map_err(|e| parse_err(path, lineno, e.to_string()))?;
                    if v == 0 || v > max {
                        return Err(parse_err(path, lineno, format!("index {v} out of range")));
                    }
                    Ok(v - 1)
                };
                let i = idx(parts[0], rows)?;
                let j = idx(parts[1], cols)?;
                let v: f64 = parts[2]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| parse_err(path, lineno, e.to_string()))?;
                triplets.push((i, j, v));
                if symmetric && i != j {
                    triplets.push((j, i, v));
                }
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(path, 2, "missing size line"))?;
    let stored = if symmetric {
        triplets.iter().filter(|(i, j, _)| i >= j).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(path, 2, format!("declared {nnz} entries, found {stored}")));
    }
    SparseMatrix::from_triplets(rows, cols, triplets)
}

pub fn write_vector<W: Write>(v: &[f64], mut out: W) -> std::io::Result<()> {
    for x in v {
        writeln!(out, "{x:e}")?;
    }
    Ok(())
}

pub fn save_vector(v: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_vector(v, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|e: std::num::ParseFloatError| parse_err(path, k + 1, e.to_string()))?,
        );
    }
    Ok(out)
}

/// Metadata stored next to a bundle's matrix and right-hand side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n_qubits: usize,
    pub original_dim: usize,
    /// Divisor applied to the padded matrix.
    pub scale: f64,
    pub rhs_norm: f64,
    #[serde(default)]
    pub step: Option<usize>,
    #[serde(default)]
    pub time: Option<f64>,
    #[serde(default)]
    pub newton_iteration: Option<usize>,
    #[serde(default)]
    pub n_contacts: Option<usize>,
    #[serde(default)]
    pub condition_number: Option<f64>,
}

impl BundleMeta {
    pub fn for_system(qs: &QuantumLinearSystem) -> Self {
        Self {
            n_qubits: qs.n_qubits,
            original_dim: qs.original_dim,
            scale: qs.scale,
            rhs_norm: qs.rhs_norm,
            step: None,
            time: None,
            newton_iteration: None,
            n_contacts: None,
            condition_number: None,
        }
    }
}

pub fn write_bundle(dir: &Path, qs: &QuantumLinearSystem, meta: &BundleMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_matrix_market(&qs.a, &dir.join(MATRIX_FILE))?;
    save_vector(&qs.b, &dir.join(RHS_FILE))?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<(QuantumLinearSystem, BundleMeta)> {
    let file = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingBundleFile {
                dir: dir.to_path_buf(),
                file: name.to_string(),
            })
        }
    };
    let a_path = file(MATRIX_FILE)?;
    let b_path = file(RHS_FILE)?;
    let meta_path = file(META_FILE)?;
    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let a = load_matrix_market(&a_path)?;
    let b = load_vector(&b_path)?;
    let dim = 1usize << meta.n_qubits;
    if a.nrows() != dim || a.ncols() != dim || b.len() != dim {
        return Err(Error::invalid(format!(
            "bundle {} has inconsistent dimensions: A is {}x{}, b has {}, meta says {dim}",
            dir.display(),
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if meta.original_dim == 0 || meta.original_dim > dim {
        return Err(Error::invalid("bundle original_dim out of range"));
    }
    let qs = QuantumLinearSystem {
        a,
        b,
        n_qubits: meta.n_qubits,
        scale: meta.scale,
        original_dim: meta.original_dim,
        rhs_norm: meta.rhs_norm,
    };
    Ok((qs, meta))
}
