//! Sparse real polynomials in `(x, y)`, just enough arithmetic for the
//! constraint tuples of the two relaxations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::monomials::{Monomial, MonomialBasis};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn variable(nvars: usize, var: usize) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::variable(nvars, var), 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(m).or_insert(0.0);
        *e += c;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().filter(|(_, &c)| c != 0.0).map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.terms().map(|(m, _)| m.degree()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms().next().is_none()
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(z)).sum()
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m1, c1) in self.terms() {
            for (m2, c2) in other.terms() {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m1, c1) in self.terms() {
            out.add_term(m1.mul(m), c1);
        }
        out
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in self.terms() {
            let e = m.exponents()[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[var] -= 1;
            out.add_term(Monomial::from_exponents(&exps), c * e as f64);
        }
        out
    }

    /// Dense coefficient vector aligned with `basis`.
    pub fn to_dense(&self, basis: &MonomialBasis) -> Result<Vec<f64>> {
        if basis.nvars() != self.nvars {
            return Err(Error::Structural("polynomial and basis variable counts differ".into()));
        }
        let mut v = vec![0.0; basis.len()];
        for (m, c) in self.terms() {
            v[basis.index_of(m)?] += c;
        }
        Ok(v)
    }

    /// `x^T x - 1` over the x-block (`first = 0, len = p`) or the y-block.
    pub fn sphere(nvars: usize, first: usize, len: usize) -> Poly {
        let mut p = Poly::constant(nvars, -1.0);
        for v in first..first + len {
            let mut e = vec![0u8; nvars];
            e[v] = 2;
            p.add_term(Monomial::from_exponents(&e), 1.0);
        }
        p
    }

    /// Sum of the variables `first .. first + len`.
    pub fn ones_sum(nvars: usize, first: usize, len: usize) -> Poly {
        let mut p = Poly::zero(nvars);
        for v in first..first + len {
            p.add_term(Monomial::variable(nvars, v), 1.0);
        }
        p
    }
}
