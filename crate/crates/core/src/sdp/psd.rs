//! Nesterov-Todd scaling of one PSD block.
//!
//! The scaling is kept as a factor `R` with `S = R L R^T` and
//! `Z = R^{-T} L R^{-1}`, where `L = diag(lambda)`. Scaled directions live in
//! the space where both iterates equal `L`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone)]
pub(super) struct NtScaling {
    pub r: DMatrix<f64>,
    pub rinv: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn lower_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(symmetrize(m)).map(|c| c.l())
}

impl NtScaling {
    /// NT scaling of a strictly feasible pair.
    pub fn from_pair(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Self> {
        let l1 = lower_factor(s)?;
        let l2 = lower_factor(z)?;
        let svd = (l2.transpose() * &l1).svd(true, true);
        let u = svd.u?;
        let vt = svd.v_t?;
        let sig = svd.singular_values;
        if sig.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return None;
        }
        let isq = sig.map(|x| 1.0 / x.sqrt());
        let mut r = l1 * vt.transpose();
        for (j, mut col) in r.column_iter_mut().enumerate() {
            col *= isq[j];
        }
        let mut rinv = u.transpose() * l2.transpose();
        for (i, mut row) in rinv.row_iter_mut().enumerate() {
            row *= isq[i];
        }
        Some(NtScaling { r, rinv, lambda: sig })
    }

    /// Moves to `lambda + alpha * ds` and `lambda + alpha * dz` (scaled
    /// directions) and refactors. Returns `false` if the new point is not
    /// strictly interior.
    pub fn update(&mut self, ds: &DMatrix<f64>, dz: &DMatrix<f64>, alpha: f64) -> bool {
        let lam = DMatrix::from_diagonal(&self.lambda);
        let s = &lam + ds * alpha;
        let z = &lam + dz * alpha;
        let Some(t) = NtScaling::from_pair(&s, &z) else {
            return false;
        };
        self.r = &self.r * t.r;
        self.rinv = t.rinv * &self.rinv;
        self.lambda = t.lambda;
        true
    }

    #[cfg(test)]
    pub fn s(&self) -> DMatrix<f64> {
        let mut rl = self.r.clone();
        for (j, mut col) in rl.column_iter_mut().enumerate() {
            col *= self.lambda[j];
        }
        symmetrize(&(rl * self.r.transpose()))
    }

    #[cfg(test)]
    pub fn z(&self) -> DMatrix<f64> {
        let mut lr = self.rinv.clone();
        for (i, mut row) in lr.row_iter_mut().enumerate() {
            row *= self.lambda[i];
        }
        symmetrize(&(self.rinv.transpose() * lr))
    }

    /// `W^{-1} = R^{-T} R^{-1}`.
    pub fn w_inv(&self) -> DMatrix<f64> {
        symmetrize(&(self.rinv.transpose() * &self.rinv))
    }

    /// `R^T dz R`.
    pub fn scale_z(&self, dz: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(self.r.transpose() * dz * &self.r))
    }

    /// `R^{-1} ds R^{-T}`.
    pub fn scale_s(&self, ds: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.rinv * ds * self.rinv.transpose()))
    }

    /// `R d R^T`.
    pub fn unscale_s(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.r * d * self.r.transpose()))
    }

    /// Solves `lambda o u = d` for symmetric `u`, with `a o b = (ab + ba)/2`.
    pub fn lambda_solve(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let l = &self.lambda;
        DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| 2.0 * d[(i, j)] / (l[i] + l[j]))
    }

    pub fn lambda_sq_sum(&self) -> f64 {
        self.lambda.iter().map(|l| l * l).sum()
    }
}

/// `(a b + b a) / 2`.
pub(super) fn jordan(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ab = a * b;
    (&ab + ab.transpose()) * 0.5
}

/// Largest `alpha` with `diag(lambda) + alpha d` PSD (infinite if any).
pub(super) fn max_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let isq: Vec<f64> = lambda.iter().map(|l| 1.0 / l.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (d[(i, j)] + d[(j, i)]) * isq[i] * isq[j]);
    let emin = if n == 1 {
        m[(0, 0)]
    } else {
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    if emin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / emin
    }
}
