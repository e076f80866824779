//! Bi-quadratic forms, matrices of the Kronecker subspace, and atomic measures.
//!
//! Both a form `B(x, y)` and a matrix `A` in the Kronecker subspace are
//! determined by their values on the index set
//! `Omega = {(i, j, k, l) : i <= k, j <= l}`, each tuple naming the monomial
//! `x_i y_j x_k y_l`. Indices are 0-based here; the 1-based convention only
//! exists in the input files.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monomials::{Monomial, MonomialBasis};
use crate::poly::Poly;

/// Tolerance for the partial symmetry of the Kronecker subspace.
pub const KRONECKER_SYMMETRY_TOL: f64 = 1e-10;
const GRAM_SYMMETRY_TOL: f64 = 1e-12;

/// The index set `Omega` in a fixed order (`i`, `j`, `k >= i`, `l >= j`).
#[derive(Debug, Clone)]
pub struct Omega {
    p: usize,
    q: usize,
    tuples: Vec<[usize; 4]>,
    position: Vec<usize>,
}

impl Omega {
    pub fn new(p: usize, q: usize) -> Self {
        let mut tuples = Vec::with_capacity(p * (p + 1) * q * (q + 1) / 4);
        let mut position = vec![usize::MAX; p * q * p * q];
        for i in 0..p {
            for j in 0..q {
                for k in i..p {
                    for l in j..q {
                        position[((i * q + j) * p + k) * q + l] = tuples.len();
                        tuples.push([i, j, k, l]);
                    }
                }
            }
        }
        Omega { p, q, tuples, position }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[[usize; 4]] {
        &self.tuples
    }

    /// Position of the monomial `x_i y_j x_k y_l` for arbitrary index order.
    pub fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let (i, k) = if i <= k { (i, k) } else { (k, i) };
        let (j, l) = if j <= l { (j, l) } else { (l, j) };
        self.position[((i * self.q + j) * self.p + k) * self.q + l]
    }

    /// Index of `x_i y_j x_k y_l` as a monomial in `p + q` variables.
    pub fn monomial(&self, t: usize) -> Monomial {
        let [i, j, k, l] = self.tuples[t];
        let mut e = vec![0u8; self.p + self.q];
        e[i] += 1;
        e[k] += 1;
        e[self.p + j] += 1;
        e[self.p + l] += 1;
        Monomial::from_exponents(&e)
    }
}

/// Row/column index of the pair `(i, j)` in a `pq x pq` matrix.
pub fn pi(q: usize, i: usize, j: usize) -> usize {
    i * q + j
}

/// `B(x, y) = sum_{Omega} b_ijkl x_i y_j x_k y_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiQuadraticForm {
    p: usize,
    q: usize,
    coeffs: Vec<f64>,
}

impl BiQuadraticForm {
    pub fn new(p: usize, q: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_dims(p, q)?;
        let n = p * (p + 1) * q * (q + 1) / 4;
        if coeffs.len() != n {
            return Err(Error::Input(format!("expected {n} coefficients, got {}", coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("non-finite coefficient".into()));
        }
        Ok(BiQuadraticForm { p, q, coeffs })
    }

    pub fn zero(p: usize, q: usize) -> Result<Self> {
        check_dims(p, q)?;
        Ok(BiQuadraticForm {
            p,
            q,
            coeffs: vec![0.0; p * (p + 1) * q * (q + 1) / 4],
        })
    }

    /// `(x^T x)(y^T y)`.
    pub fn product_of_norms(p: usize, q: usize) -> Result<Self> {
        Self::from_gram(p, q, &DMatrix::identity(p * q, p * q))
    }

    /// Builds a form from Omega-indexed entries `((i, j, k, l), value)`.
    /// Tuples outside `Omega` are rejected; repeated tuples are summed.
    pub fn from_omega_entries(
        p: usize,
        q: usize,
        entries: impl IntoIterator<Item = ([usize; 4], f64)>,
    ) -> Result<Self> {
        let mut form = Self::zero(p, q)?;
        let omega = Omega::new(p, q);
        for ([i, j, k, l], v) in entries {
            if i > k || j > l || k >= p || l >= q {
                return Err(Error::Input(format!("tuple ({i}, {j}, {k}, {l}) is not in Omega")));
            }
            form.coeffs[omega.index(i, j, k, l)] += v;
        }
        Ok(form)
    }

    /// Form with `B(u, v) = z^T M z`, `z_{pi(i,j)} = u_i v_j`.
    pub fn from_gram(p: usize, q: usize, m: &DMatrix<f64>) -> Result<Self> {
        check_dims(p, q)?;
        let n = p * q;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Input(format!(
                "Gram matrix must be {n}x{n}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for r in 0..n {
            for c in 0..r {
                if (m[(r, c)] - m[(c, r)]).abs() > GRAM_SYMMETRY_TOL {
                    return Err(Error::Input(format!("Gram matrix not symmetric at ({r}, {c})")));
                }
            }
        }
        let omega = Omega::new(p, q);
        let mut coeffs = vec![0.0; omega.len()];
        for a in 0..p {
            for b in 0..q {
                for c in 0..p {
                    for d in 0..q {
                        coeffs[omega.index(a, b, c, d)] += m[(pi(q, a, b), pi(q, c, d))];
                    }
                }
            }
        }
        Self::new(p, q, coeffs)
    }

    /// Form with `B(u, v) = sum f_ijkl u_i v_j u_k v_l` over all index tuples.
    /// `f` is flat with index `((i q + j) p + k) q + l`.
    pub fn from_full_tensor(p: usize, q: usize, f: &[f64]) -> Result<Self> {
        check_dims(p, q)?;
        if f.len() != p * q * p * q {
            return Err(Error::Input(format!(
                "tensor must have {} entries, got {}",
                p * q * p * q,
                f.len()
            )));
        }
        let omega = Omega::new(p, q);
        let mut coeffs = vec![0.0; omega.len()];
        for i in 0..p {
            for j in 0..q {
                for k in 0..p {
                    for l in 0..q {
                        coeffs[omega.index(i, j, k, l)] += f[((i * q + j) * p + k) * q + l];
                    }
                }
            }
        }
        Self::new(p, q, coeffs)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn evaluate(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.p, "x dimension mismatch");
        assert_eq!(v.len(), self.q, "y dimension mismatch");
        Omega::new(self.p, self.q)
            .tuples()
            .iter()
            .zip(&self.coeffs)
            .map(|(&[i, j, k, l], &b)| b * u[i] * v[j] * u[k] * v[l])
            .sum()
    }

    /// A symmetric Gram matrix `M` with `z^T M z = B` (spreads each
    /// coefficient evenly over the entries that produce its monomial).
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let (p, q) = (self.p, self.q);
        let omega = Omega::new(p, q);
        let mut counts = vec![0usize; omega.len()];
        for a in 0..p {
            for b in 0..q {
                for c in 0..p {
                    for d in 0..q {
                        counts[omega.index(a, b, c, d)] += 1;
                    }
                }
            }
        }
        DMatrix::from_fn(p * q, p * q, |r, s| {
            let t = omega.index(r / q, r % q, s / q, s % q);
            self.coeffs[t] / counts[t] as f64
        })
    }

    /// `B` as a polynomial in `p + q` variables.
    pub fn to_poly(&self) -> Poly {
        let omega = Omega::new(self.p, self.q);
        let mut poly = Poly::zero(self.p + self.q);
        for (t, &b) in self.coeffs.iter().enumerate() {
            poly.add_term(omega.monomial(t), b);
        }
        poly
    }

    /// `(B_x - 2B x, B_y - 2B y)`: `p + q` polynomials of degree at most 5.
    pub fn gradient_polynomials(&self) -> Vec<Poly> {
        let n = self.p + self.q;
        let b = self.to_poly();
        let two_b = b.scale(2.0);
        (0..n)
            .map(|v| b.derivative(v).sub(&two_b.mul(&Poly::variable(n, v))))
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        BiQuadraticForm {
            p: self.p,
            q: self.q,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

fn check_dims(p: usize, q: usize) -> Result<()> {
    if p == 0 || q == 0 {
        return Err(Error::Input(format!("dimensions must be positive, got p={p}, q={q}")));
    }
    Ok(())
}

/// A `pq x pq` symmetric matrix in the Kronecker subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerMatrix {
    p: usize,
    q: usize,
    mat: DMatrix<f64>,
}

impl KroneckerMatrix {
    /// Validates symmetry and the partial symmetry
    /// `A[pi(i,j), pi(k,l)] = A[pi(k,j), pi(i,l)]`.
    pub fn new(p: usize, q: usize, mat: DMatrix<f64>) -> Result<Self> {
        check_dims(p, q)?;
        let n = p * q;
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Input(format!(
                "matrix must be {n}x{n}, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("non-finite matrix entry".into()));
        }
        let tol = KRONECKER_SYMMETRY_TOL;
        for i in 0..p {
            for j in 0..q {
                for k in 0..p {
                    for l in 0..q {
                        let a = mat[(pi(q, i, j), pi(q, k, l))];
                        let checks = [
                            mat[(pi(q, k, l), pi(q, i, j))],
                            mat[(pi(q, k, j), pi(q, i, l))],
                            mat[(pi(q, i, l), pi(q, k, j))],
                        ];
                        if checks.iter().any(|&c| (a - c).abs() > tol) {
                            return Err(Error::Input(format!(
                                "matrix is not in the Kronecker subspace: entry \
                                 ({}, {}) breaks the partial symmetry",
                                pi(q, i, j) + 1,
                                pi(q, k, l) + 1
                            )));
                        }
                    }
                }
            }
        }
        Ok(KroneckerMatrix { p, q, mat })
    }

    /// The unique Kronecker-subspace matrix with the given Omega-indexed entries.
    pub fn from_omega(p: usize, q: usize, a: &[f64]) -> Result<Self> {
        check_dims(p, q)?;
        let omega = Omega::new(p, q);
        if a.len() != omega.len() {
            return Err(Error::Input(format!(
                "expected {} entries, got {}",
                omega.len(),
                a.len()
            )));
        }
        let mat = DMatrix::from_fn(p * q, p * q, |r, s| a[omega.index(r / q, r % q, s / q, s % q)]);
        Ok(KroneckerMatrix { p, q, mat })
    }

    /// Reads only the entries `A[pi(i,j), pi(k,l)]` with `(i,j,k,l)` in Omega,
    /// ignoring the rest of the matrix, and returns the Kronecker-subspace
    /// matrix they determine.
    pub fn from_omega_entries_of(p: usize, q: usize, mat: &DMatrix<f64>) -> Result<Self> {
        check_dims(p, q)?;
        if mat.nrows() != p * q || mat.ncols() != p * q {
            return Err(Error::Input("matrix dimension does not match p*q".into()));
        }
        let omega = Omega::new(p, q);
        let a: Vec<f64> = omega
            .tuples()
            .iter()
            .map(|&[i, j, k, l]| mat[(pi(q, i, j), pi(q, k, l))])
            .collect();
        Self::from_omega(p, q, &a)
    }

    /// `(u u^T) (x) (v v^T)`.
    pub fn kron_rank1(u: &[f64], v: &[f64]) -> Self {
        let (p, q) = (u.len(), v.len());
        let mat = DMatrix::from_fn(p * q, p * q, |r, s| u[r / q] * v[r % q] * u[s / q] * v[s % q]);
        KroneckerMatrix { p, q, mat }
    }

    /// `sum_s c_s (u_s u_s^T) (x) (v_s v_s^T)`.
    pub fn from_atoms(measure: &AtomicMeasure) -> Self {
        let (p, q) = (measure.p, measure.q);
        let mut mat = DMatrix::zeros(p * q, p * q);
        for atom in &measure.atoms {
            let z = DVector::from_fn(p * q, |r, _| atom.u[r / q] * atom.v[r % q]);
            mat.ger(atom.weight, &z, &z, 1.0);
        }
        KroneckerMatrix { p, q, mat }
    }

    /// `sum_i (a_i a_i^T) (x) (b_i b_i^T)`.
    pub fn from_factor_pairs(p: usize, q: usize, pairs: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let mut mat = DMatrix::zeros(p * q, p * q);
        for (a, b) in pairs {
            let z = DVector::from_fn(p * q, |r, _| a[r / q] * b[r % q]);
            mat.ger(1.0, &z, &z, 1.0);
        }
        KroneckerMatrix { p, q, mat }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn scaled(&self, s: f64) -> Self {
        KroneckerMatrix {
            p: self.p,
            q: self.q,
            mat: &self.mat * s,
        }
    }

    pub fn add(&self, other: &KroneckerMatrix) -> Result<Self> {
        if (self.p, self.q) != (other.p, other.q) {
            return Err(Error::Structural("Kronecker matrices of different shapes".into()));
        }
        Ok(KroneckerMatrix {
            p: self.p,
            q: self.q,
            mat: &self.mat + &other.mat,
        })
    }

    /// The Omega-indexed vector `a = A|_E` of degree-4 moments.
    pub fn project_to_e(&self) -> Vec<f64> {
        let q = self.q;
        Omega::new(self.p, q)
            .tuples()
            .iter()
            .map(|&[i, j, k, l]| self.mat[(pi(q, i, j), pi(q, k, l))])
            .collect()
    }
}

/// Monomials of the set `E`, aligned with [`KroneckerMatrix::project_to_e`].
pub fn e_monomials(p: usize, q: usize) -> Vec<Monomial> {
    let omega = Omega::new(p, q);
    (0..omega.len()).map(|t| omega.monomial(t)).collect()
}

/// `<A, B> = sum_{Omega} a_ijkl b_ijkl`.
pub fn pairing(form: &BiQuadraticForm, a: &KroneckerMatrix) -> Result<f64> {
    if (form.p, form.q) != (a.p, a.q) {
        return Err(Error::Structural(format!(
            "pairing of a ({}, {}) form with a ({}, {}) matrix",
            form.p, form.q, a.p, a.q
        )));
    }
    Ok(form.coeffs.iter().zip(a.project_to_e()).map(|(b, a)| b * a).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Atom {
    /// The concatenated point `(u, v)`.
    pub fn point(&self) -> Vec<f64> {
        let mut z = self.u.clone();
        z.extend_from_slice(&self.v);
        z
    }
}

/// Weighted sum of Dirac measures at points of the bi-sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub p: usize,
    pub q: usize,
    pub atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(p: usize, q: usize, atoms: Vec<Atom>) -> Result<Self> {
        check_dims(p, q)?;
        for (s, a) in atoms.iter().enumerate() {
            if a.u.len() != p || a.v.len() != q {
                return Err(Error::Input(format!("atom {s} has wrong dimensions")));
            }
            if !(a.weight > 0.0) {
                return Err(Error::Input(format!("atom {s} has non-positive weight {}", a.weight)));
            }
        }
        Ok(AtomicMeasure { p, q, atoms })
    }

    /// Checks that every atom lies in `K`: unit vectors with nonnegative sums.
    pub fn validate_support(&self, tol: f64) -> Result<()> {
        for (s, a) in self.atoms.iter().enumerate() {
            let nu = norm(&a.u);
            let nv = norm(&a.v);
            if (nu - 1.0).abs() > tol || (nv - 1.0).abs() > tol {
                return Err(Error::Input(format!("atom {s} is not on the bi-sphere")));
            }
            if a.u.iter().sum::<f64>() < -tol || a.v.iter().sum::<f64>() < -tol {
                return Err(Error::Input(format!("atom {s} has a negative coordinate sum")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Moment vector `sum_s c_s [(u_s, v_s)]` over `basis`.
    pub fn moments(&self, basis: &MonomialBasis) -> Vec<f64> {
        let mut out = vec![0.0; basis.len()];
        for a in &self.atoms {
            let z = a.point();
            for (o, m) in out.iter_mut().zip(basis.entries()) {
                *o += a.weight * m.eval(&z);
            }
        }
        out
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
