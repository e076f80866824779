//! JSON problem files. All indices in files are 1-based.

use nalgebra::DMatrix;
use posmap_core::{BiQuadraticForm, KroneckerMatrix};
use serde::Deserialize;

#[derive(Debug)]
pub enum InputError {
    Malformed(String),
    Failure(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PositivityFile {
    p: usize,
    q: usize,
    form: FormSpec,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum FormSpec {
    /// `pq x pq` symmetric matrix `M` with `B(x, y) = (x (x) y)^T M (x (x) y)`.
    Gram { matrix: Vec<Vec<f64>> },
    /// Nested `p x q x p x q` array `f` with `B = sum f_ijkl x_i y_j x_k y_l`.
    Tensor { values: Vec<Vec<Vec<Vec<f64>>>> },
    /// Coefficients of the monomials `x_i y_j x_k y_l`, `i <= k`, `j <= l`.
    Omega { entries: Vec<OmegaEntry> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OmegaEntry {
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    value: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeparabilityFile {
    p: usize,
    q: usize,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    atoms: Option<Vec<AtomSpec>>,
}

/// One term `(a a^T) (x) (b b^T)`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomSpec {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn parse<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, InputError> {
    serde_json::from_str(text).map_err(|e| InputError::Malformed(e.to_string()))
}

fn malformed<E: std::fmt::Display>(e: E) -> InputError {
    InputError::Malformed(e.to_string())
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<(), InputError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(InputError::Malformed("non-finite number".into()))
    }
}

fn square_matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, InputError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(InputError::Malformed(format!("matrix must be {n}x{n}")));
    }
    check_finite(rows.iter().flatten().copied())?;
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn check_dims(p: usize, q: usize) -> Result<(), InputError> {
    if p < 1 || q < 1 {
        return Err(InputError::Malformed("p and q must be at least 1".into()));
    }
    Ok(())
}

pub fn read_positivity(text: &str) -> Result<BiQuadraticForm, InputError> {
    let file: PositivityFile = parse(text)?;
    let (p, q) = (file.p, file.q);
    check_dims(p, q)?;
    match file.form {
        FormSpec::Gram { matrix } => {
            let m = square_matrix(&matrix, p * q)?;
            BiQuadraticForm::from_gram(p, q, &m).map_err(malformed)
        }
        FormSpec::Tensor { values } => {
            let shape_ok = values.len() == p
                && values
                    .iter()
                    .all(|a| a.len() == q && a.iter().all(|b| b.len() == p && b.iter().all(|c| c.len() == q)));
            if !shape_ok {
                return Err(InputError::Malformed(format!("tensor must have shape {p}x{q}x{p}x{q}")));
            }
            let flat: Vec<f64> = values.into_iter().flatten().flatten().flatten().collect();
            check_finite(flat.iter().copied())?;
            BiQuadraticForm::from_full_tensor(p, q, &flat).map_err(malformed)
        }
        FormSpec::Omega { entries } => {
            check_finite(entries.iter().map(|e| e.value))?;
            let mut tuples = Vec::with_capacity(entries.len());
            for e in entries {
                if [e.i, e.k].iter().any(|&v| v < 1 || v > p) || [e.j, e.l].iter().any(|&v| v < 1 || v > q) {
                    return Err(InputError::Malformed(format!(
                        "index ({}, {}, {}, {}) out of range",
                        e.i, e.j, e.k, e.l
                    )));
                }
                tuples.push(([e.i - 1, e.j - 1, e.k - 1, e.l - 1], e.value));
            }
            BiQuadraticForm::from_omega_entries(p, q, tuples).map_err(malformed)
        }
    }
}

/// Reads a separability problem. `matrix` and `atoms` may both be given;
/// the matrix is then the sum of the two.
pub fn read_separability(text: &str, omega_entries: bool) -> Result<KroneckerMatrix, InputError> {
    let file: SeparabilityFile = parse(text)?;
    let (p, q) = (file.p, file.q);
    check_dims(p, q)?;
    if file.matrix.is_none() && file.atoms.is_none() {
        return Err(InputError::Malformed(
            "either \"matrix\" or \"atoms\" is required".into(),
        ));
    }
    let mut total = DMatrix::zeros(p * q, p * q);
    if let Some(rows) = &file.matrix {
        total += square_matrix(rows, p * q)?;
    }
    for atom in file.atoms.iter().flatten() {
        if atom.a.len() != p || atom.b.len() != q {
            return Err(InputError::Malformed(format!(
                "atoms need a of length {p} and b of length {q}"
            )));
        }
        check_finite(atom.a.iter().chain(&atom.b).copied())?;
        total += KroneckerMatrix::kron_rank1(&atom.a, &atom.b).matrix();
    }
    if omega_entries {
        KroneckerMatrix::from_omega_entries_of(p, q, &total).map_err(malformed)
    } else {
        KroneckerMatrix::new(p, q, total).map_err(malformed)
    }
}
