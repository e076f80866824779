//! Linear operators of the embedded problem and the reduced KKT solve.
//!
//! With `G w = -(linear part of F(w))` and `h = F0`, the solver needs
//! repeated solutions of
//!
//! ```text
//! [ 0  A^T  G^T  ] [ux]   [bx]
//! [ A  0    0    ] [uy] = [by]
//! [ G  0   -W.W  ] [uz]   [bz]
//! ```
//!
//! The third row gives `uz = W^{-1} (G ux - bz) W^{-1}`; substituting leaves
//! `H ux + A^T uy = bx + G^T(W^{-1} bz W^{-1})`, `A ux = by` with
//! `H = G^T (W^{-1} . W^{-1}) G`. With `A^T = [Q1 Q2] [R; 0]`, the component
//! of `ux` along `Q1` is fixed by `A ux = by`, the component along the null
//! space `Q2` comes from a Cholesky factor of `Q2^T H Q2`, and `uy` from the
//! `Q1` rows of the first equation.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::reborrow::{Reborrow, ReborrowMut};
use faer::{Accum, Mat, MatMut, Par};
use nalgebra::DMatrix;

use super::AffineBlock;
use crate::moments::LinearFunctional;

pub(super) struct Operators<'a> {
    pub blocks: &'a [AffineBlock],
    pub eq: &'a [LinearFunctional],
    pub n: usize,
}

impl Operators<'_> {
    pub fn g(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.side(), b.side());
                b.add_linear(x, -1.0, &mut m);
                m
            })
            .collect()
    }

    /// `out += alpha G^T z`.
    pub fn gt_add(&self, z: &[DMatrix<f64>], alpha: f64, out: &mut [f64]) {
        for (b, zj) in self.blocks.iter().zip(z) {
            b.add_adjoint(zj, -alpha, out);
        }
    }

    pub fn a(&self, x: &[f64]) -> Vec<f64> {
        self.eq.iter().map(|r| r.apply(x)).collect()
    }

    /// `out += alpha A^T y`.
    pub fn at_add(&self, y: &[f64], alpha: f64, out: &mut [f64]) {
        for (r, &yi) in self.eq.iter().zip(y) {
            for &(k, c) in &r.terms {
                out[k] += alpha * c * yi;
            }
        }
    }

    /// `sum_j <F_j0, z_j>`.
    pub fn h_dot(&self, z: &[DMatrix<f64>]) -> f64 {
        self.blocks.iter().zip(z).map(|(b, zj)| b.constant().dot(zj)).sum()
    }
}

const REFINEMENT_STEPS: usize = 5;

/// Orthogonal split of the variable space by `A^T = [Q1 Q2] [R; 0]`.
pub(super) struct NullSpace {
    q1: Mat<f64>,
    /// `None` when there are no equalities, standing for the identity.
    q2: Option<Mat<f64>>,
    r: Mat<f64>,
}

impl NullSpace {
    pub fn new(ops: &Operators) -> NullSpace {
        let (n, p) = (ops.n, ops.eq.len());
        if p == 0 {
            return NullSpace {
                q1: Mat::zeros(n, 0),
                q2: None,
                r: Mat::zeros(0, 0),
            };
        }
        let mut at = Mat::<f64>::zeros(n, p);
        for (r, row) in ops.eq.iter().enumerate() {
            for &(k, c) in &row.terms {
                at[(k, r)] += c;
            }
        }
        let qr = at.qr();
        let q = qr.compute_Q();
        let r = qr.thin_R().to_owned();
        NullSpace {
            q1: q.subcols(0, p).to_owned(),
            q2: Some(q.subcols(p, n - p).to_owned()),
            r,
        }
    }
}

pub(super) struct Kkt<'a> {
    ns: &'a NullSpace,
    h: Mat<f64>,
    llt: Cholesky,
    w_inv: Vec<DMatrix<f64>>,
}

/// Pivots below this fraction of the largest diagonal entry are numerically
/// zero; they are replaced by [`HUGE_PIVOT`], which removes the corresponding
/// direction from the solve instead of shifting the whole matrix.
const PIVOT_EPS: f64 = 1e-14;
const HUGE_PIVOT: f64 = 1e64;

const BLOCK: usize = 64;

/// Cholesky factor with dynamic pivot regularization.
struct Cholesky {
    l: Mat<f64>,
}

/// Unblocked factorization of a diagonal block, with the pivot rule.
fn factor_diagonal_block(mut a: MatMut<'_, f64>, eps: f64, huge: f64) -> bool {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !d.is_finite() {
            return false;
        }
        let ljj = if d <= eps { huge.sqrt() } else { d.sqrt() };
        a[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = v / ljj;
        }
    }
    true
}

impl Cholesky {
    fn factor(mut m: Mat<f64>) -> Option<Cholesky> {
        let n = m.nrows();
        let dmax = (0..n).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
        if !dmax.is_finite() {
            return None;
        }
        let (eps, huge) = (PIVOT_EPS * dmax, HUGE_PIVOT * dmax);
        let mut k0 = 0;
        while k0 < n {
            let kb = BLOCK.min(n - k0);
            let (_, _, _, rest) = m.as_mut().split_at_mut(k0, k0);
            let (mut a11, _, mut a21, a22) = rest.split_at_mut(kb, kb);
            if !factor_diagonal_block(a11.rb_mut(), eps, huge) {
                return None;
            }
            if n > k0 + kb {
                solve_lower_triangular_in_place(a11.rb(), a21.rb_mut().transpose_mut(), Par::Seq);
                triangular::matmul(
                    a22,
                    BlockStructure::TriangularLower,
                    Accum::Add,
                    a21.rb(),
                    BlockStructure::Rectangular,
                    a21.rb().transpose(),
                    BlockStructure::Rectangular,
                    -1.0,
                    Par::Seq,
                );
            }
            k0 += kb;
        }
        for j in 0..n {
            for i in 0..j {
                m[(i, j)] = 0.0;
            }
        }
        Some(Cholesky { l: m })
    }

    fn solve(&self, rhs: &Mat<f64>) -> Mat<f64> {
        let mut x = rhs.clone();
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l.transpose(), x.as_mut(), Par::Seq);
        x
    }
}

fn to_col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn from_col(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl<'a> Kkt<'a> {
    /// Factors the reduced system for the per-block scalings `W^{-1}`.
    pub fn factor(ops: &Operators, ns: &'a NullSpace, w_inv: Vec<DMatrix<f64>>) -> Option<Kkt<'a>> {
        let n = ops.n;
        let mut buf = vec![0.0f64; n * n];
        for (blk, v) in ops.blocks.iter().zip(&w_inv) {
            accumulate_hessian(blk, v, n, &mut buf);
        }
        let h = Mat::from_fn(n, n, |i, j| if i >= j { buf[i + j * n] } else { buf[j + i * n] });
        drop(buf);
        let reduced = match &ns.q2 {
            Some(q2) => {
                let k = q2.transpose() * (&h * q2);
                Mat::from_fn(k.nrows(), k.ncols(), |i, j| 0.5 * (k[(i, j)] + k[(j, i)]))
            }
            None => h.clone(),
        };
        let llt = Cholesky::factor(reduced)?;
        Some(Kkt { ns, h, llt, w_inv })
    }

    fn solve_once(
        &self,
        ops: &Operators,
        bx: &[f64],
        by: &[f64],
        bz: &[DMatrix<f64>],
    ) -> (Vec<f64>, Vec<f64>, Vec<DMatrix<f64>>) {
        let ns = self.ns;
        let mut r = bx.to_vec();
        let vbv: Vec<DMatrix<f64>> = bz.iter().zip(&self.w_inv).map(|(b, v)| v * b * v).collect();
        ops.gt_add(&vbv, 1.0, &mut r);
        let r = to_col(&r);
        let mut a = to_col(by);
        solve_lower_triangular_in_place(ns.r.transpose(), a.as_mut(), Par::Seq);
        let x1 = &ns.q1 * &a;
        let ux = match &ns.q2 {
            Some(q2) => {
                let c = q2.transpose() * (&r - &self.h * &x1);
                &x1 + q2 * self.llt.solve(&c)
            }
            None => self.llt.solve(&r),
        };
        let mut uy = ns.q1.transpose() * (&r - &self.h * &ux);
        solve_upper_triangular_in_place(ns.r.as_ref(), uy.as_mut(), Par::Seq);
        let (ux, uy) = (from_col(&ux), from_col(&uy));
        let gux = ops.g(&ux);
        let uz = gux
            .iter()
            .zip(bz)
            .zip(&self.w_inv)
            .map(|((g, b), v)| {
                let t = v * (g - b) * v;
                (&t + t.transpose()) * 0.5
            })
            .collect();
        (ux, uy, uz)
    }

    /// Solves the system with a few steps of iterative refinement on the
    /// reduced equations. The third block row holds by construction of `uz`.
    pub fn solve(
        &self,
        ops: &Operators,
        bx: &[f64],
        by: &[f64],
        bz: &[DMatrix<f64>],
    ) -> (Vec<f64>, Vec<f64>, Vec<DMatrix<f64>>) {
        let (mut ux, mut uy, mut uz) = self.solve_once(ops, bx, by, bz);
        let bnorm = 1.0 + norm2(bx) + norm2(by);
        let zeros: Vec<DMatrix<f64>> = bz.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect();
        let mut last = f64::INFINITY;
        for _ in 0..REFINEMENT_STEPS {
            let mut ex = bx.to_vec();
            ops.at_add(&uy, -1.0, &mut ex);
            ops.gt_add(&uz, -1.0, &mut ex);
            let ey: Vec<f64> = by.iter().zip(ops.a(&ux)).map(|(b, a)| b - a).collect();
            let enorm = norm2(&ex) + norm2(&ey);
            if enorm <= 1e-15 * bnorm || enorm >= 0.5 * last {
                break;
            }
            last = enorm;
            let (dx, dy, dz) = self.solve_once(ops, &ex, &ey, &zeros);
            ux.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            uy.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
            uz.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        }
        (ux, uy, uz)
    }
}

/// Adds `G^T (V . V) G` for one block to the lower triangle of the dense
/// column-major `n x n` buffer `h`.
fn accumulate_hessian(blk: &AffineBlock, v: &DMatrix<f64>, n: usize, h: &mut [f64]) {
    let side = blk.side();
    let vs = v.as_slice();
    let vij = |i: usize, j: usize| vs[i + j * side];
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let entries: Vec<((usize, usize), Vec<(usize, f64)>)> = blk
        .entries()
        .map(|((a, b), terms)| {
            let s = if a == b { s2 } else { 2.0 * s2 };
            ((a, b), terms.iter().map(|&(k, c)| (k, c * s)).collect())
        })
        .collect();
    let mut add = |v1: usize, v2: usize, t: f64| {
        let (r, c) = if v1 >= v2 { (v1, v2) } else { (v2, v1) };
        h[r + c * n] += t;
    };
    for (p1, ((a, b), t1)) in entries.iter().enumerate() {
        let (a, b) = (*a, *b);
        {
            let kval = vij(a, a) * vij(b, b) + vij(a, b) * vij(b, a);
            for (i1, &(v1, c1)) in t1.iter().enumerate() {
                add(v1, v1, c1 * c1 * kval);
                for &(v2, c2) in &t1[i1 + 1..] {
                    add(v1, v2, c1 * c2 * kval);
                }
            }
        }
        for ((c, d), t2) in &entries[p1 + 1..] {
            let (c, d) = (*c, *d);
            let kval = vij(a, c) * vij(b, d) + vij(a, d) * vij(b, c);
            if kval == 0.0 {
                continue;
            }
            for &(v1, c1) in t1 {
                for &(v2, c2) in t2 {
                    let t = c1 * c2 * kval;
                    add(v1, v2, if v1 == v2 { 2.0 * t } else { t });
                }
            }
        }
    }
}
