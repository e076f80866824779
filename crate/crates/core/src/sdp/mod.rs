//! Dense semidefinite programming.
//!
//! Problems are stated in the form that moment relaxations naturally take:
//!
//! ```text
//! minimize    c^T w
//! subject to  E w = f
//!             F_j(w) = F_j0 + sum_v w_v F_jv  in cone_j      (j = 1..)
//! ```
//!
//! where each cone is either a PSD cone of side `n` or a nonnegative orthant
//! (diagonal blocks). The solver in [`solve`] runs a homogeneous self-dual
//! embedding with Nesterov-Todd scaling and Mehrotra predictor-corrector
//! steps, so infeasible instances end with a Farkas ray instead of a
//! diverging iterate.
//!
//! A problem in primal standard form (`min <C, X>` s.t. `<A_i, X> = b_i`,
//! `X` PSD) is converted by [`SdpProblem::from_primal_standard`], which makes
//! the entries of `X` the free variables.

mod kkt;
mod psd;
mod solver;

use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{min_eigenvalue, LinearFunctional, LocalizingMap};

pub use solver::solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeBlock {
    Psd(usize),
    NonNeg(usize),
}

impl ConeBlock {
    pub fn side(&self) -> usize {
        match *self {
            ConeBlock::Psd(n) | ConeBlock::NonNeg(n) => n,
        }
    }
}

/// Affine symmetric-matrix-valued map `w -> F0 + sum_v w_v F_v`, stored by
/// upper-triangular position.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    cone: ConeBlock,
    constant: DMatrix<f64>,
    positions: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    terms: Vec<(usize, f64)>,
}

impl AffineBlock {
    /// Builds a block from `(row, col, var, coef)` quadruples; `(row, col)` and
    /// `(col, row)` name the same symmetric entry.
    pub fn new(
        cone: ConeBlock,
        constant: DMatrix<f64>,
        quads: impl IntoIterator<Item = (usize, usize, usize, f64)>,
    ) -> Result<Self> {
        let n = cone.side();
        if constant.nrows() != n || constant.ncols() != n {
            return Err(Error::Structural("constant term has the wrong size".into()));
        }
        let mut quads: Vec<_> = quads
            .into_iter()
            .map(|(r, c, v, coef)| if r <= c { (r, c, v, coef) } else { (c, r, v, coef) })
            .collect();
        if quads.iter().any(|&(_, c, _, _)| c >= n) {
            return Err(Error::Structural("block entry outside the block".into()));
        }
        if let ConeBlock::NonNeg(_) = cone {
            let off = |(r, c): (usize, usize)| r != c;
            if quads.iter().any(|&(r, c, _, _)| off((r, c)))
                || (0..n).any(|r| (0..n).any(|c| r != c && constant[(r, c)] != 0.0))
            {
                return Err(Error::Structural("nonnegative block must be diagonal".into()));
            }
        }
        quads.sort_by_key(|a| (a.0, a.1, a.2));
        let mut positions = Vec::new();
        let mut offsets = vec![0];
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (r, c, v, coef) in quads {
            if positions.last() != Some(&(r, c)) {
                if !positions.is_empty() {
                    offsets.push(terms.len());
                }
                positions.push((r, c));
            }
            let start = *offsets.last().unwrap();
            match terms[start..].iter_mut().find(|t| t.0 == v) {
                Some(t) => t.1 += coef,
                None => terms.push((v, coef)),
            }
        }
        if !positions.is_empty() {
            offsets.push(terms.len());
        }
        Ok(AffineBlock {
            cone,
            constant,
            positions,
            offsets,
            terms,
        })
    }

    /// Block `sign * L(w)` for a localizing map whose variables are tms entries.
    pub fn from_localizing(map: &LocalizingMap) -> Self {
        let n = map.side();
        let quads = map
            .entries()
            .flat_map(|((i, j), terms)| terms.iter().map(move |&(v, c)| (i, j, v, c)));
        AffineBlock::new(ConeBlock::Psd(n), DMatrix::zeros(n, n), quads.collect::<Vec<_>>())
            .expect("localizing map is well formed")
    }

    pub fn cone(&self) -> ConeBlock {
        self.cone
    }

    pub fn side(&self) -> usize {
        self.cone.side()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = ((usize, usize), &[(usize, f64)])> {
        self.positions
            .iter()
            .enumerate()
            .map(move |(k, &pos)| (pos, &self.terms[self.offsets[k]..self.offsets[k + 1]]))
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }

    /// `F0 + sum_v w_v F_v`.
    pub fn evaluate(&self, w: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        self.add_linear(w, 1.0, &mut m);
        m
    }

    /// `out += alpha * sum_v w_v F_v`.
    pub(crate) fn add_linear(&self, w: &[f64], alpha: f64, out: &mut DMatrix<f64>) {
        for ((i, j), terms) in self.entries() {
            let v: f64 = alpha * terms.iter().map(|&(k, c)| c * w[k]).sum::<f64>();
            out[(i, j)] += v;
            if i != j {
                out[(j, i)] += v;
            }
        }
    }

    /// `out_v += alpha * <F_v, Z>`.
    pub(crate) fn add_adjoint(&self, z: &DMatrix<f64>, alpha: f64, out: &mut [f64]) {
        for ((i, j), terms) in self.entries() {
            let zij = if i == j { z[(i, j)] } else { z[(i, j)] + z[(j, i)] };
            for &(k, c) in terms {
                out[k] += alpha * c * zij;
            }
        }
    }
}

/// Semidefinite program in the affine (moment) form described in the module docs.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    n_vars: usize,
    objective: Vec<f64>,
    equalities: Vec<LinearFunctional>,
    eq_rhs: Vec<f64>,
    blocks: Vec<AffineBlock>,
}

impl SdpProblem {
    pub fn new(
        objective: Vec<f64>,
        equalities: Vec<LinearFunctional>,
        eq_rhs: Vec<f64>,
        blocks: Vec<AffineBlock>,
    ) -> Result<Self> {
        let n_vars = objective.len();
        if equalities.len() != eq_rhs.len() {
            return Err(Error::Structural(
                "equality rows and right-hand sides differ in count".into(),
            ));
        }
        if equalities
            .iter()
            .flat_map(|r| r.terms.iter())
            .any(|&(i, _)| i >= n_vars)
            || blocks.iter().filter_map(AffineBlock::max_var).any(|v| v >= n_vars)
        {
            return Err(Error::Structural("constraint refers to an unknown variable".into()));
        }
        Ok(SdpProblem {
            n_vars,
            objective,
            equalities,
            eq_rhs,
            blocks,
        })
    }

    /// `min <C, X>` s.t. `<A_i, X> = b_i`, `X = diag(X_1, ..)` in the cones.
    /// Every upper-triangular entry of every block becomes a free variable.
    pub fn from_primal_standard(
        cones: &[ConeBlock],
        cost: &[DMatrix<f64>],
        constraints: &[(Vec<DMatrix<f64>>, f64)],
    ) -> Result<Self> {
        if cost.len() != cones.len() || constraints.iter().any(|(a, _)| a.len() != cones.len()) {
            return Err(Error::Structural("per-block data does not match the cone list".into()));
        }
        let mut var_of = Vec::new();
        let mut n_vars = 0;
        for cone in cones {
            let n = cone.side();
            let mut map = DMatrix::from_element(n, n, usize::MAX);
            for i in 0..n {
                let cols: Vec<usize> = match cone {
                    ConeBlock::Psd(_) => (i..n).collect(),
                    ConeBlock::NonNeg(_) => vec![i],
                };
                for j in cols {
                    map[(i, j)] = n_vars;
                    map[(j, i)] = n_vars;
                    n_vars += 1;
                }
            }
            var_of.push(map);
        }
        // <M, X> as a linear functional in the entry variables.
        let functional = |mats: &[DMatrix<f64>]| -> Result<Vec<(usize, f64)>> {
            let mut terms = Vec::new();
            for ((m, cone), map) in mats.iter().zip(cones).zip(&var_of) {
                let n = cone.side();
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::Structural("data matrix has the wrong size".into()));
                }
                for i in 0..n {
                    for j in i..n {
                        let v = if i == j { m[(i, i)] } else { m[(i, j)] + m[(j, i)] };
                        if v != 0.0 {
                            if map[(i, j)] == usize::MAX {
                                return Err(Error::Structural("off-diagonal data on a nonnegative block".into()));
                            }
                            terms.push((map[(i, j)], v));
                        }
                    }
                }
            }
            Ok(terms)
        };
        let mut objective = vec![0.0; n_vars];
        for (k, c) in functional(cost)? {
            objective[k] += c;
        }
        let mut equalities = Vec::new();
        let mut eq_rhs = Vec::new();
        for (a, b) in constraints {
            equalities.push(LinearFunctional::new(functional(a)?));
            eq_rhs.push(*b);
        }
        let mut blocks = Vec::new();
        for (cone, map) in cones.iter().zip(&var_of) {
            let n = cone.side();
            let mut quads = Vec::new();
            for i in 0..n {
                for j in i..n {
                    if map[(i, j)] != usize::MAX {
                        quads.push((i, j, map[(i, j)], 1.0));
                    }
                }
            }
            blocks.push(AffineBlock::new(*cone, DMatrix::zeros(n, n), quads)?);
        }
        SdpProblem::new(objective, equalities, eq_rhs, blocks)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn equalities(&self) -> &[LinearFunctional] {
        &self.equalities
    }

    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }

    pub fn blocks(&self) -> &[AffineBlock] {
        &self.blocks
    }

    /// Copy with every equality row and its right-hand side multiplied by `scale[i]`.
    pub fn with_rescaled_equalities(&self, scale: &[f64]) -> Self {
        let mut out = self.clone();
        for ((row, b), &s) in out.equalities.iter_mut().zip(out.eq_rhs.iter_mut()).zip(scale) {
            for t in &mut row.terms {
                t.1 *= s;
            }
            *b *= s;
        }
        out
    }

    /// Plain-text sparse triplet dump.
    ///
    /// ```text
    /// # posmap-sdp v1
    /// vars <n> equalities <m> blocks <k>
    /// block <j> psd|nonneg <side>            (one line per block)
    /// c <var> <value>                         objective entries
    /// e <row> <var> <value>                   equality coefficients
    /// b <row> <value>                         equality right-hand sides
    /// f <block> <var> <row> <col> <value>     coefficient of w_var at (row, col), row <= col
    /// f0 <block> <row> <col> <value>          constant term, row <= col
    /// ```
    ///
    /// Indices are 0-based; values use 17 significant digits.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# posmap-sdp v1")?;
        writeln!(
            out,
            "vars {} equalities {} blocks {}",
            self.n_vars,
            self.equalities.len(),
            self.blocks.len()
        )?;
        for (j, b) in self.blocks.iter().enumerate() {
            let kind = match b.cone {
                ConeBlock::Psd(_) => "psd",
                ConeBlock::NonNeg(_) => "nonneg",
            };
            writeln!(out, "block {j} {kind} {}", b.side())?;
        }
        for (v, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                writeln!(out, "c {v} {c:.16e}")?;
            }
        }
        for (r, row) in self.equalities.iter().enumerate() {
            for &(v, c) in &row.terms {
                writeln!(out, "e {r} {v} {c:.16e}")?;
            }
            writeln!(out, "b {r} {:.16e}", self.eq_rhs[r])?;
        }
        for (j, b) in self.blocks.iter().enumerate() {
            for ((r, c), terms) in b.entries() {
                for &(v, coef) in terms {
                    writeln!(out, "f {j} {v} {r} {c} {coef:.16e}")?;
                }
            }
            let n = b.side();
            for r in 0..n {
                for c in r..n {
                    let v = b.constant[(r, c)];
                    if v != 0.0 {
                        writeln!(out, "f0 {j} {r} {c} {v:.16e}")?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Evaluates `<f, y> + sum_j <F_j0, Z_j>` and the residual vector
    /// `sum_j <F_jv, Z_j> - (E^T y)_v` of a candidate infeasibility ray.
    fn ray_terms(&self, y: &[f64], z: &[DMatrix<f64>]) -> (f64, Vec<f64>) {
        let mut resid = vec![0.0; self.n_vars];
        for (b, zj) in self.blocks.iter().zip(z) {
            b.add_adjoint(zj, 1.0, &mut resid);
        }
        for (row, &yi) in self.equalities.iter().zip(y) {
            for &(v, c) in &row.terms {
                resid[v] -= c * yi;
            }
        }
        let obj = self.eq_rhs.iter().zip(y).map(|(b, y)| b * y).sum::<f64>()
            + self.blocks.iter().zip(z).map(|(b, zj)| b.constant.dot(zj)).sum::<f64>();
        (obj, resid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub verbose: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Inaccurate,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Relative primal infeasibility of `w`.
    pub primal: f64,
    /// Relative dual infeasibility of `(y, Z)`.
    pub dual: f64,
    /// Complementarity gap `<S, Z>`.
    pub gap: f64,
}

/// Dual improving ray proving that no `w` satisfies the constraints:
/// `Z_j` PSD, `sum_j <F_jv, Z_j> = (E^T y)_v` for every variable, and
/// `f^T y + sum_j <F_j0, Z_j> < 0`. Normalised to unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasRay {
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub min_eig: f64,
    pub objective: f64,
    pub residual: f64,
    pub passes: bool,
}

/// Tolerances of the certificate test.
pub const RAY_MIN_EIG_TOL: f64 = 1e-7;
pub const RAY_OBJECTIVE_TOL: f64 = 1e-8;
pub const RAY_RESIDUAL_TOL: f64 = 1e-6;

impl FarkasRay {
    pub fn norm(&self) -> f64 {
        (self.y.iter().map(|v| v * v).sum::<f64>() + self.z.iter().map(|z| z.norm_squared()).sum::<f64>()).sqrt()
    }

    /// Checks the ray against `prob`: blockwise `min eig(Z_j) >= -1e-7`,
    /// `objective < -1e-8`, and `|residual| <= 1e-6`, all after normalising
    /// the ray to unit norm.
    pub fn verify(&self, prob: &SdpProblem) -> CertificateCheck {
        let nrm = self.norm();
        if !(nrm > 0.0) || self.z.len() != prob.blocks.len() || self.y.len() != prob.equalities.len() {
            return CertificateCheck {
                min_eig: f64::NAN,
                objective: f64::NAN,
                residual: f64::NAN,
                passes: false,
            };
        }
        let y: Vec<f64> = self.y.iter().map(|v| v / nrm).collect();
        let z: Vec<DMatrix<f64>> = self.z.iter().map(|m| m / nrm).collect();
        let min_eig = z.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
        let (objective, resid) = prob.ray_terms(&y, &z);
        let residual = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        let passes = min_eig >= -RAY_MIN_EIG_TOL && objective < -RAY_OBJECTIVE_TOL && residual <= RAY_RESIDUAL_TOL;
        CertificateCheck {
            min_eig,
            objective,
            residual,
            passes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpOutcome {
    pub status: SdpStatus,
    /// Primal variables `w` (already divided by the embedding's `tau`).
    pub x: Vec<f64>,
    /// Multipliers of the equality rows.
    pub y: Vec<f64>,
    /// Primal slack matrices `F_j(w)`.
    pub s: Vec<DMatrix<f64>>,
    /// Dual matrices `Z_j`.
    pub z: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub tau: f64,
    pub kappa: f64,
    pub certificate: Option<FarkasRay>,
}
