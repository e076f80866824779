//! Atom extraction from a flat moment matrix by the multiplication-matrix
//! method: a column basis of `M_t(w)` gives one shift operator per
//! variable, a random combination of them is brought to real Schur form, and
//! the Schur vectors read off every atom's coordinates.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forms::{norm, Atom, AtomicMeasure};
use crate::moments::{gap_rank, moment_matrix, symmetric_singular_values, Tms};
use crate::monomials::{Monomial, MonomialBasis};

/// Eigenvalues of the shift combination closer than this count as clustered.
const CLUSTER_TOL: f64 = 1e-8;
const SCHUR_RETRIES: usize = 3;
/// Largest tolerated distance of a raw extracted point from the bi-sphere.
const SPHERE_TOL: f64 = 1e-6;
const RECONSTRUCTION_TOL: f64 = 1e-5;
const NEGATIVE_WEIGHT_TOL: f64 = 1e-6;
/// Widening factor of the gap extraction tolerances.
const GAP_SLACK: f64 = 10.0;
const MIN_WEIGHT: f64 = 1e-8;

/// Extracts `rank M_t(w)` atoms from `w`, which must be flat at order `t`
/// (`rank M_{t-1}(w) = rank M_t(w)`). Atoms are sign-normalised so that
/// `1^T u >= 0` and `1^T v >= 0`; the weight fit uses the moments before the
/// flip.
pub fn extract_atoms(w: &Tms, t: usize, rank_tol: f64, seed: u64) -> Result<AtomicMeasure> {
    extract_with(w, t, rank_tol, SPHERE_TOL, RECONSTRUCTION_TOL, seed)
}

/// Extraction for moment vectors whose numerically zero singular values sit
/// above the absolute threshold, as happens when the relaxation lacks strict
/// complementarity. The rank is read at the first clear gap of the spectrum
/// of `M_t(w)`, and the sphere and reconstruction tests are widened in
/// proportion to the ratio of the largest discarded to the smallest kept
/// singular value, which bounds the perturbation of the kept eigenspace.
/// Neither test is tighter than `min_tol`, which callers that refine and
/// verify the atoms afterwards may raise. Returns the measure and the ratio.
pub fn extract_atoms_at_gap(w: &Tms, t: usize, min_tol: f64, seed: u64) -> Result<(AtomicMeasure, f64)> {
    let sv = symmetric_singular_values(&moment_matrix(w, t)?);
    let (r, noise) =
        gap_rank(&sv).ok_or_else(|| Error::ExtractionFailed("moment matrix spectrum has no gap".into()))?;
    let cut = (sv[r - 1] * noise.max(f64::MIN_POSITIVE)).sqrt();
    let ratio = noise / sv[r - 1];
    let slack = (GAP_SLACK * ratio).max(min_tol);
    let measure = extract_with(w, t, cut, SPHERE_TOL.max(slack), RECONSTRUCTION_TOL.max(slack), seed)?;
    Ok((measure, ratio))
}

fn extract_with(
    w: &Tms,
    t: usize,
    rank_tol: f64,
    sphere_tol: f64,
    reconstruction_tol: f64,
    seed: u64,
) -> Result<AtomicMeasure> {
    let basis = w.basis();
    let (p, q) = (basis.p(), basis.q());
    if t == 0 {
        return Err(Error::Structural("extraction needs order t >= 1".into()));
    }
    let m = moment_matrix(w, t)?;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > rank_tol)
        .collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let r = order.len();
    if r == 0 {
        return AtomicMeasure::new(p, q, Vec::new());
    }
    let n_t = basis.prefix_len(t);
    let mut v = DMatrix::zeros(n_t, r);
    for (c, &i) in order.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        v.set_column(c, &(eig.eigenvectors.column(i) * s));
    }

    let n_low = basis.prefix_len(t - 1);
    let pivots = pivot_rows(&v, n_low, r)?;
    let vb = DMatrix::from_fn(r, r, |i, j| v[(pivots[i], j)]);
    let vb_inv = vb
        .try_inverse()
        .ok_or_else(|| Error::ExtractionFailed("pivot block is singular".into()))?;
    let u = &v * vb_inv;

    let nvars = p + q;
    let mut shifts = Vec::with_capacity(nvars);
    for var in 0..nvars {
        let xv = Monomial::variable(nvars, var);
        let mut nmat = DMatrix::zeros(r, r);
        for (j, &row) in pivots.iter().enumerate() {
            let idx = basis.index_of(&basis.entry(row).mul(&xv))?;
            nmat.set_row(j, &u.row(idx));
        }
        shifts.push(nmat);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = None;
    for _ in 0..=SCHUR_RETRIES {
        let coef: Vec<f64> = (0..nvars).map(|_| StandardNormal.sample(&mut rng)).collect();
        let cn = norm(&coef);
        let mut comb = DMatrix::zeros(r, r);
        for (nm, c) in shifts.iter().zip(&coef) {
            comb += nm * (c / cn);
        }
        if let Some(qmat) = separated_schur_vectors(comb) {
            let pts: Vec<Vec<f64>> = (0..r)
                .map(|s| {
                    let qs = qmat.column(s);
                    shifts.iter().map(|nm| qs.dot(&(nm * qs))).collect()
                })
                .collect();
            points = Some(pts);
            break;
        }
    }
    let points =
        points.ok_or_else(|| Error::ExtractionFailed("shift operators have no separated real spectrum".into()))?;

    let mut atoms = Vec::with_capacity(r);
    for z in points {
        let (x, y) = z.split_at(p);
        let (nx, ny) = (norm(x), norm(y));
        if (nx * nx - 1.0).abs() > sphere_tol || (ny * ny - 1.0).abs() > sphere_tol {
            return Err(Error::ExtractionFailed(format!(
                "extracted point is off the bi-sphere (|x|^2 - 1 = {:.3e}, |y|^2 - 1 = {:.3e})",
                nx * nx - 1.0,
                ny * ny - 1.0
            )));
        }
        atoms.push(Atom {
            weight: 0.0,
            u: x.iter().map(|a| a / nx).collect(),
            v: y.iter().map(|b| b / ny).collect(),
        });
    }

    let target = w.truncate(2 * t)?;
    let atoms = fit_weights(target.basis(), target.values(), atoms, reconstruction_tol)?;
    let atoms = atoms
        .into_iter()
        .map(|mut a| {
            if a.u.iter().sum::<f64>() < 0.0 {
                a.u.iter_mut().for_each(|x| *x = -*x);
            }
            if a.v.iter().sum::<f64>() < 0.0 {
                a.v.iter_mut().for_each(|x| *x = -*x);
            }
            a
        })
        .collect();
    AtomicMeasure::new(p, q, atoms)
}

/// Greedy column-pivoted Gram-Schmidt on the rows `0..n_low` of `v`,
/// returning `r` row indices whose rows are linearly independent.
fn pivot_rows(v: &DMatrix<f64>, n_low: usize, r: usize) -> Result<Vec<usize>> {
    let mut rows: Vec<DVector<f64>> = (0..n_low).map(|i| v.row(i).transpose()).collect();
    let scale = rows.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut chosen = Vec::with_capacity(r);
    for _ in 0..r {
        let (best, bn) = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, x)| (i, x.norm()))
            .fold((usize::MAX, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best == usize::MAX || bn <= 1e-10 * scale.max(1e-300) {
            return Err(Error::ExtractionFailed(format!(
                "lower-order moment matrix has rank below {r}; not flat"
            )));
        }
        let dir = &rows[best] / bn;
        for x in rows.iter_mut() {
            let c = x.dot(&dir);
            x.axpy(-c, &dir, 1.0);
        }
        chosen.push(best);
    }
    Ok(chosen)
}

/// Orthogonal Schur vectors of `m` if its real Schur form is triangular
/// with pairwise separated eigenvalues.
fn separated_schur_vectors(m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let scale = m.norm().max(1.0);
    let (qmat, tmat) = Schur::try_new(m, f64::EPSILON, 0)?.unpack();
    for i in 0..n.saturating_sub(1) {
        if tmat[(i + 1, i)].abs() > 1e-10 * scale {
            return None;
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| tmat[(i, i)]).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if d.windows(2).any(|w| w[1] - w[0] < CLUSTER_TOL) {
        return None;
    }
    Some(qmat)
}

/// Least-squares weights of `atoms` against `target`, dropping atoms with
/// slightly negative weights and refitting once.
fn fit_weights(basis: &MonomialBasis, target: &[f64], atoms: Vec<Atom>, tol: f64) -> Result<Vec<Atom>> {
    let mut atoms = atoms;
    for _ in 0..2 {
        let phi = DMatrix::from_fn(basis.len(), atoms.len(), |i, s| basis.entry(i).eval(&atoms[s].point()));
        let b = DVector::from_column_slice(target);
        let c = phi
            .clone()
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Numerical(format!("weight fit failed: {e}")))?;
        if let Some(s) = (0..c.len()).find(|&s| c[s] < -NEGATIVE_WEIGHT_TOL) {
            return Err(Error::ExtractionFailed(format!(
                "atom {s} has negative weight {:.3e}",
                c[s]
            )));
        }
        if c.iter().any(|&x| x < MIN_WEIGHT) {
            atoms = atoms
                .into_iter()
                .zip(c.iter())
                .filter(|(_, &x)| x >= MIN_WEIGHT)
                .map(|(a, _)| a)
                .collect();
            continue;
        }
        let resid = (&phi * &c - &b).amax();
        let scale = b.amax().max(1.0);
        if resid > tol * scale {
            return Err(Error::ExtractionFailed(format!("reconstruction residual {resid:.3e}")));
        }
        return Ok(atoms
            .into_iter()
            .zip(c.iter())
            .map(|(a, &x)| Atom { weight: x, ..a })
            .collect());
    }
    Err(Error::ExtractionFailed(
        "weights stayed non-positive after refit".into(),
    ))
}
