//! Monomials in the joint variables `(x_1..x_p, y_1..y_q)` and the graded
//! lexicographic bases that index every moment vector and matrix.
//!
//! Ordering: total degree first, then descending lexicographic order on the
//! concatenated exponent vector, so `x_1 > x_2 > ... > y_1 > ... > y_q`.
//! A degree-`d` basis therefore starts with the degree-`d'` basis for every
//! `d' <= d`, and truncating a moment vector is a prefix slice.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Exponent vector over `p + q` variables, x-exponents first.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Box<[u8]>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0u8; nvars].into_boxed_slice())
    }

    pub fn from_exponents(exps: &[u8]) -> Self {
        Monomial(exps.to_vec().into_boxed_slice())
    }

    /// Builds the monomial `x^alpha y^beta`.
    pub fn from_parts(alpha: &[u8], beta: &[u8]) -> Self {
        let mut e = Vec::with_capacity(alpha.len() + beta.len());
        e.extend_from_slice(alpha);
        e.extend_from_slice(beta);
        Monomial(e.into_boxed_slice())
    }

    /// The single variable `var` (0-based over the concatenated variables).
    pub fn variable(nvars: usize, var: usize) -> Self {
        let mut e = vec![0u8; nvars];
        e[var] = 1;
        Monomial(e.into_boxed_slice())
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>()
                .into_boxed_slice(),
        )
    }

    /// Evaluates the monomial at the concatenated point `z = (x, y)`.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (&e, &zi) in self.0.iter().zip(z) {
            if e > 0 {
                acc *= zi.powi(e as i32);
            }
        }
        acc
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// `C(n + d, d)` with overflow detection.
pub fn basis_size(nvars: usize, degree: usize) -> Option<usize> {
    let mut acc: u128 = 1;
    for i in 1..=degree as u128 {
        acc = acc.checked_mul(nvars as u128 + i)? / i;
    }
    usize::try_from(acc).ok()
}

/// Ordered list of all monomials of total degree at most `degree`.
#[derive(Clone)]
pub struct MonomialBasis {
    p: usize,
    q: usize,
    degree: usize,
    entries: Vec<Monomial>,
    lookup: HashMap<Monomial, usize>,
}

impl fmt::Debug for MonomialBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonomialBasis")
            .field("p", &self.p)
            .field("q", &self.q)
            .field("degree", &self.degree)
            .field("len", &self.entries.len())
            .finish()
    }
}

// Refuse bases that could not possibly be materialised.
const MAX_BASIS_LEN: usize = 1 << 26;

impl MonomialBasis {
    pub fn new(p: usize, q: usize, degree: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::Input(format!("dimensions must be positive, got p={p}, q={q}")));
        }
        let n = p + q;
        let size = basis_size(n, degree)
            .filter(|&s| s <= MAX_BASIS_LEN)
            .ok_or(Error::Sizing { p, q, degree })?;
        let mut entries = Vec::with_capacity(size);
        let mut scratch = vec![0u8; n];
        for g in 0..=degree {
            push_grade(&mut entries, &mut scratch, 0, g);
        }
        debug_assert_eq!(entries.len(), size);
        let lookup = entries.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Ok(MonomialBasis {
            p,
            q,
            degree,
            entries,
            lookup,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn nvars(&self) -> usize {
        self.p + self.q
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Monomial] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &Monomial {
        &self.entries[i]
    }

    /// Number of leading entries with degree at most `d`.
    pub fn prefix_len(&self, d: usize) -> usize {
        basis_size(self.nvars(), d.min(self.degree)).expect("prefix of a valid basis")
    }

    pub fn index_of(&self, m: &Monomial) -> Result<usize> {
        self.lookup
            .get(m)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("{m:?}")))
    }

    pub fn try_index_of(&self, m: &Monomial) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    /// Index of `x^alpha y^beta`.
    pub fn index_of_parts(&self, alpha: &[u8], beta: &[u8]) -> Result<usize> {
        if alpha.len() != self.p || beta.len() != self.q {
            return Err(Error::Structural(format!(
                "exponent lengths ({}, {}) do not match (p, q) = ({}, {})",
                alpha.len(),
                beta.len(),
                self.p,
                self.q
            )));
        }
        self.index_of(&Monomial::from_parts(alpha, beta))
    }

    /// Evaluates every basis monomial at `z = (x, y)`: the vector `[(x,y)]_d`.
    pub fn evaluate_all(&self, z: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|m| m.eval(z)).collect()
    }
}

fn push_grade(out: &mut Vec<Monomial>, scratch: &mut [u8], pos: usize, remaining: usize) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining as u8;
        out.push(Monomial::from_exponents(scratch));
        scratch[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        scratch[pos] = e as u8;
        push_grade(out, scratch, pos + 1, remaining - e);
    }
    scratch[pos] = 0;
}

/// Positions of pairwise products of a degree-`k` basis inside a degree-`2k` basis.
#[derive(Debug, Clone)]
pub struct ProductTable {
    n: usize,
    idx: Vec<usize>,
}

impl ProductTable {
    pub fn new(small: &MonomialBasis, big: &MonomialBasis) -> Result<Self> {
        if small.p != big.p || small.q != big.q {
            return Err(Error::Structural(format!(
                "product table needs equal (p, q); got ({}, {}) and ({}, {})",
                small.p, small.q, big.p, big.q
            )));
        }
        if big.degree < 2 * small.degree {
            return Err(Error::Structural(format!(
                "big basis degree {} cannot hold products of degree {}",
                big.degree,
                2 * small.degree
            )));
        }
        let n = small.len();
        let mut idx = vec![0usize; n * n];
        for i in 0..n {
            for j in i..n {
                let k = big.index_of(&small.entries[i].mul(&small.entries[j]))?;
                idx[i * n + j] = k;
                idx[j * n + i] = k;
            }
        }
        Ok(ProductTable { n, idx })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.idx[i * self.n + j]
    }
}

/// Convenience wrapper matching [`ProductTable::new`].
pub fn product_index_table(small: &MonomialBasis, big: &MonomialBasis) -> Result<ProductTable> {
    ProductTable::new(small, big)
}
