//! Truncated multi-sequences (tms), moment and localizing matrices,
//! truncated-ideal equality rows, and flatness tests.

use std::collections::HashSet;
use std::sync::Arc;

use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::AtomicMeasure;
use crate::monomials::{MonomialBasis, ProductTable};
use crate::poly::Poly;

/// A vector of moments indexed by a monomial basis.
#[derive(Debug, Clone)]
pub struct Tms {
    basis: Arc<MonomialBasis>,
    values: Vec<f64>,
}

impl Tms {
    pub fn new(basis: Arc<MonomialBasis>, values: Vec<f64>) -> Result<Self> {
        if basis.len() != values.len() {
            return Err(Error::Structural(format!(
                "tms has {} values for a basis of {} monomials",
                values.len(),
                basis.len()
            )));
        }
        Ok(Tms { basis, values })
    }

    /// `sum_s c_s [(u_s, v_s)]_degree`.
    pub fn from_atoms(measure: &AtomicMeasure, degree: usize) -> Result<Self> {
        let basis = Arc::new(MonomialBasis::new(measure.p, measure.q, degree)?);
        let values = measure.moments(&basis);
        Ok(Tms { basis, values })
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn shared_basis(&self) -> Arc<MonomialBasis> {
        Arc::clone(&self.basis)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    /// `w|_degree`, a prefix slice thanks to the graded ordering.
    pub fn truncate(&self, degree: usize) -> Result<Tms> {
        if degree > self.degree() {
            return Err(Error::Structural(format!(
                "cannot truncate a degree-{} tms to degree {degree}",
                self.degree()
            )));
        }
        if degree == self.degree() {
            return Ok(self.clone());
        }
        let basis = Arc::new(MonomialBasis::new(self.basis.p(), self.basis.q(), degree)?);
        let values = self.values[..basis.len()].to_vec();
        Ok(Tms { basis, values })
    }

    /// `<f, w>`.
    pub fn apply(&self, f: &Poly) -> Result<f64> {
        let mut acc = 0.0;
        for (m, c) in f.terms() {
            acc += c * self.values[self.basis.index_of(m)?];
        }
        Ok(acc)
    }
}

/// Linear map `w -> L_theta^{(t)}(w)` in sparse form: for every upper
/// triangular position, the list of `(index into the big basis, coefficient)`.
#[derive(Debug, Clone)]
pub struct LocalizingMap {
    side: usize,
    positions: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    terms: Vec<(usize, f64)>,
}

impl LocalizingMap {
    /// Localizing map of `theta` at order `t`: rows indexed by monomials `a`
    /// with `deg(theta) + 2 deg(a) <= 2t`.
    pub fn new(big: &MonomialBasis, theta: &Poly, t: usize) -> Result<Self> {
        if 2 * t > big.degree() {
            return Err(Error::Structural(format!(
                "order {t} needs a degree-{} tms, have degree {}",
                2 * t,
                big.degree()
            )));
        }
        let dtheta = theta.degree();
        if dtheta > 2 * t {
            return Err(Error::Structural(format!(
                "localizing polynomial of degree {dtheta} exceeds order {t}"
            )));
        }
        let row_degree = (2 * t - dtheta) / 2;
        let rows = MonomialBasis::new(big.p(), big.q(), row_degree)?;
        let n = rows.len();
        let theta_terms: Vec<_> = theta.terms().map(|(m, c)| (m.clone(), c)).collect();
        let mut positions = Vec::with_capacity(n * (n + 1) / 2);
        let mut offsets = vec![0];
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i..n {
                let base = rows.entry(i).mul(rows.entry(j));
                for (m, c) in &theta_terms {
                    terms.push((big.index_of(&base.mul(m))?, *c));
                }
                positions.push((i, j));
                offsets.push(terms.len());
            }
        }
        Ok(LocalizingMap {
            side: n,
            positions,
            offsets,
            terms,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Upper triangular positions with their linear terms.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &[(usize, f64)])> {
        self.positions
            .iter()
            .enumerate()
            .map(move |(k, &pos)| (pos, &self.terms[self.offsets[k]..self.offsets[k + 1]]))
    }

    pub fn evaluate(&self, values: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.side, self.side);
        for ((i, j), terms) in self.entries() {
            let v: f64 = terms.iter().map(|&(idx, c)| c * values[idx]).sum();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }
}

/// `M_t(w)`, side `C(p + q + t, t)`.
pub fn moment_matrix(w: &Tms, t: usize) -> Result<DMatrix<f64>> {
    if 2 * t > w.degree() {
        return Err(Error::Structural(format!(
            "moment matrix of order {t} needs degree {}, tms has degree {}",
            2 * t,
            w.degree()
        )));
    }
    let small = MonomialBasis::new(w.basis.p(), w.basis.q(), t)?;
    let table = ProductTable::new(&small, &w.basis)?;
    let n = small.len();
    Ok(DMatrix::from_fn(n, n, |i, j| w.values[table.get(i, j)]))
}

/// `L_theta^{(t)}(w)`.
pub fn localizing_matrix(w: &Tms, theta: &Poly, t: usize) -> Result<DMatrix<f64>> {
    Ok(LocalizingMap::new(&w.basis, theta, t)?.evaluate(&w.values))
}

/// A sparse linear functional on tms values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    pub terms: Vec<(usize, f64)>,
}

impl LinearFunctional {
    /// Merges repeated indices, drops zeros, and sorts by index.
    pub fn new(mut terms: Vec<(usize, f64)>) -> Self {
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (i, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        LinearFunctional { terms: merged }
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * values[i]).sum()
    }

    pub fn unit(index: usize) -> Self {
        LinearFunctional {
            terms: vec![(index, 1.0)],
        }
    }
}

/// Rows `<h m, w> = 0` for every monomial `m` with `deg(h m) <= basis.degree()`.
pub fn ideal_equality_rows(h: &Poly, basis: &MonomialBasis) -> Result<Vec<LinearFunctional>> {
    let dh = h.degree();
    if dh > basis.degree() {
        return Err(Error::Structural(format!(
            "ideal generator of degree {dh} exceeds tms degree {}",
            basis.degree()
        )));
    }
    let count = basis.prefix_len(basis.degree() - dh);
    basis.entries()[..count]
        .iter()
        .map(|m| {
            let terms = h
                .terms()
                .map(|(hm, c)| Ok((basis.index_of(&hm.mul(m))?, c)))
                .collect::<Result<Vec<_>>>()?;
            Ok(LinearFunctional::new(terms))
        })
        .collect()
}

/// Equality system after deduplication and elimination of dependent rows.
#[derive(Debug, Clone)]
pub struct ReducedEqualities {
    pub rows: Vec<LinearFunctional>,
    pub rhs: Vec<f64>,
    pub duplicates_removed: usize,
    pub dependent_removed: usize,
}

const PIVOT_TOL: f64 = 1e-10;

/// Removes duplicate functionals, then keeps a linearly independent subset
/// chosen by column-pivoted QR of the transposed system. Dropped rows must be
/// consistent with the kept ones; otherwise the system has no solution.
pub fn reduce_equalities(rows: Vec<LinearFunctional>, rhs: Vec<f64>, ncols: usize) -> Result<ReducedEqualities> {
    assert_eq!(rows.len(), rhs.len());
    let total = rows.len();
    let mut seen = HashSet::new();
    let mut uniq_rows = Vec::new();
    let mut uniq_rhs = Vec::new();
    for (row, b) in rows.into_iter().zip(rhs) {
        let Some(&(_, lead)) = row.terms.first() else {
            if b.abs() > PIVOT_TOL {
                return Err(Error::Structural("inconsistent equality: 0 = nonzero".into()));
            }
            continue;
        };
        let key: Vec<(usize, u64)> = row.terms.iter().map(|&(i, c)| (i, (c / lead).to_bits())).collect();
        let key = (key, (b / lead).to_bits());
        if seen.insert(key) {
            uniq_rows.push(row);
            uniq_rhs.push(b);
        }
    }
    let duplicates_removed = total - uniq_rows.len();
    let m = uniq_rows.len();
    if m == 0 {
        return Ok(ReducedEqualities {
            rows: vec![],
            rhs: vec![],
            duplicates_removed,
            dependent_removed: 0,
        });
    }

    // Columns of `at` are the rows; pivoted QR ranks them.
    let mut at = Mat::<f64>::zeros(ncols, m);
    for (r, row) in uniq_rows.iter().enumerate() {
        let norm = row.terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt();
        for &(i, c) in &row.terms {
            at[(i, r)] = c / norm;
        }
    }
    let qr = at.col_piv_qr();
    let r_factor = qr.R();
    let perm = qr.P();
    let (fwd, _) = perm.arrays();
    let diag_max = r_factor[(0, 0)].abs();
    let rank = (0..m.min(ncols))
        .take_while(|&i| r_factor[(i, i)].abs() > PIVOT_TOL * diag_max.max(1.0))
        .count();
    let mut keep: Vec<usize> = fwd[..rank].to_vec();
    keep.sort_unstable();

    if rank < m {
        check_consistency(&uniq_rows, &uniq_rhs, &keep, ncols)?;
    }
    let rows: Vec<_> = keep.iter().map(|&r| uniq_rows[r].clone()).collect();
    let rhs: Vec<_> = keep.iter().map(|&r| uniq_rhs[r]).collect();
    Ok(ReducedEqualities {
        rows,
        rhs,
        duplicates_removed,
        dependent_removed: m - rank,
    })
}

fn check_consistency(rows: &[LinearFunctional], rhs: &[f64], keep: &[usize], ncols: usize) -> Result<()> {
    // Minimum-norm solution of the kept rows, then check every row.
    let k = keep.len();
    let mut a = Mat::<f64>::zeros(k, ncols);
    for (r, &idx) in keep.iter().enumerate() {
        for &(i, c) in &rows[idx].terms {
            a[(r, i)] = c;
        }
    }
    let gram = &a * a.transpose();
    let llt = gram
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Numerical("equality Gram matrix not positive definite".into()))?;
    let b = Mat::<f64>::from_fn(k, 1, |r, _| rhs[keep[r]]);
    use faer::linalg::solvers::Solve;
    let lam = llt.solve(&b);
    let x = a.transpose() * &lam;
    let xs: Vec<f64> = (0..ncols).map(|i| x[(i, 0)]).collect();
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (row, &b) in rows.iter().zip(rhs) {
        if (row.apply(&xs) - b).abs() > 1e-8 * scale {
            return Err(Error::Structural("inconsistent equality constraints".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlatnessMode {
    /// `rank M_{t-1} = rank M_t`.
    Inner,
    /// `rank M_t = rank M_{t+1}`.
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessTolerances {
    /// Absolute singular value threshold.
    pub rank_tol: f64,
    /// Relative guard: singular values must also exceed `rel_rank_tol * sigma_max`.
    pub rel_rank_tol: f64,
    pub psd_tol: f64,
    pub eq_tol: f64,
}

impl Default for FlatnessTolerances {
    fn default() -> Self {
        FlatnessTolerances {
            rank_tol: 1e-6,
            rel_rank_tol: 1e-9,
            psd_tol: 1e-7,
            eq_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub t: usize,
    pub mode: FlatnessMode,
    pub rank_low: usize,
    pub rank_high: usize,
    /// Whether the absolute and relative rank rules gave the same ranks.
    pub rank_rules_agree: bool,
    /// Ranks at the first clear spectral gap, when there is one.
    pub gap_rank_low: Option<usize>,
    pub gap_rank_high: Option<usize>,
    pub equality_residual: f64,
    pub localizing_min_eig: f64,
    pub moment_min_eig: f64,
    pub is_flat: bool,
}

impl FlatnessReport {
    /// Flatness with ranks read at the first clear spectral gap, all other
    /// conditions unchanged.
    pub fn is_gap_flat(&self, tol: &FlatnessTolerances) -> bool {
        matches!((self.gap_rank_low, self.gap_rank_high), (Some(a), Some(b)) if a == b)
            && self.equality_residual <= tol.eq_tol
            && self.localizing_min_eig >= -tol.psd_tol
            && self.moment_min_eig >= -tol.psd_tol
    }
}

/// Singular values of a symmetric matrix, descending.
pub fn symmetric_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Ranks under the absolute and the relative counting rules. The relative
/// threshold never drops below the absolute one, so the two rules only differ
/// on badly scaled matrices, where `rel_tol * sigma_max` exceeds `abs_tol`.
pub fn numeric_ranks(sv: &[f64], abs_tol: f64, rel_tol: f64) -> (usize, usize) {
    let smax = sv.first().copied().unwrap_or(0.0);
    let abs = sv.iter().filter(|&&s| s > abs_tol).count();
    let rel_cut = (rel_tol * smax).max(abs_tol);
    let rel = sv.iter().filter(|&&s| s > rel_cut).count();
    (abs, rel)
}

/// How numerical ranks were counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    /// Singular values above the absolute threshold, cross-checked by the
    /// relative guard.
    Absolute,
    /// Position of the first clear gap in the spectrum.
    SpectralGap,
}

/// Smallest ratio between consecutive singular values that counts as a gap.
pub const GAP_MIN_RATIO: f64 = 1e3;

/// Rank at the first gap of a descending spectrum whose ratio reaches
/// [`GAP_MIN_RATIO`], with the largest discarded singular value. Later gaps
/// separate noise from exact zeros and are ignored. `None` when there is no
/// such gap.
pub fn gap_rank(sv: &[f64]) -> Option<(usize, f64)> {
    let smax = sv.first().copied()?;
    if smax <= 0.0 {
        return None;
    }
    let floor = 1e-14 * smax;
    for i in 0..sv.len() {
        if sv[i] <= floor {
            break;
        }
        let next = sv.get(i + 1).copied().unwrap_or(0.0);
        if sv[i] / next.max(floor) >= GAP_MIN_RATIO {
            return Some((i + 1, next));
        }
    }
    None
}

/// Tests flatness of `w` at order `t`, truncating `w` to the outer order first.
pub fn flatness_check(
    w: &Tms,
    t: usize,
    h: &[Poly],
    g: &[Poly],
    mode: FlatnessMode,
    tol: &FlatnessTolerances,
) -> Result<FlatnessReport> {
    let (low, high) = match mode {
        FlatnessMode::Inner => {
            if t == 0 {
                return Err(Error::Structural("inner flatness needs t >= 1".into()));
            }
            (t - 1, t)
        }
        FlatnessMode::Outer => (t, t + 1),
    };
    let omega = w.truncate(2 * high)?;
    let m_high = moment_matrix(&omega, high)?;
    let n_low = omega.basis().prefix_len(low);
    let m_low = m_high.view((0, 0), (n_low, n_low)).into_owned();

    let sv_high = symmetric_singular_values(&m_high);
    let sv_low = symmetric_singular_values(&m_low);
    let (abs_high, rel_high) = numeric_ranks(&sv_high, tol.rank_tol, tol.rel_rank_tol);
    let (abs_low, rel_low) = numeric_ranks(&sv_low, tol.rank_tol, tol.rel_rank_tol);
    let rank_rules_agree = abs_high == rel_high && abs_low == rel_low;

    let mut equality_residual: f64 = 0.0;
    for hi in h {
        if hi.degree() > 2 * high {
            continue;
        }
        for row in ideal_equality_rows(hi, omega.basis())? {
            equality_residual = equality_residual.max(row.apply(omega.values()).abs());
        }
    }
    let mut localizing_min_eig = f64::INFINITY;
    for gj in g {
        if gj.degree() > 2 * high {
            continue;
        }
        localizing_min_eig = localizing_min_eig.min(min_eigenvalue(&localizing_matrix(&omega, gj, high)?));
    }
    if g.is_empty() {
        localizing_min_eig = 0.0;
    }
    let moment_min_eig = if sv_high.is_empty() {
        0.0
    } else {
        min_eigenvalue(&m_high)
    };

    let is_flat = rank_rules_agree
        && abs_low == abs_high
        && equality_residual <= tol.eq_tol
        && localizing_min_eig >= -tol.psd_tol
        && moment_min_eig >= -tol.psd_tol;
    Ok(FlatnessReport {
        t,
        mode,
        rank_low: abs_low,
        rank_high: abs_high,
        rank_rules_agree,
        gap_rank_low: gap_rank(&sv_low).map(|g| g.0),
        gap_rank_high: gap_rank(&sv_high).map(|g| g.0),
        equality_residual,
        localizing_min_eig,
        moment_min_eig,
        is_flat,
    })
}
