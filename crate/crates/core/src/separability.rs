//! Separability of a matrix in the Kronecker subspace.
//!
//! `A` is separable iff its entries `a = A|_E` admit a representing measure
//! supported on `K = {|x| = |y| = 1, 1^T x >= 0, 1^T y >= 0}`. Moment
//! relaxations with a random SOS objective either become infeasible, which
//! proves `A` is not separable (a Farkas ray is attached), or produce a flat
//! moment vector whose atoms give an explicit decomposition
//! `A = sum_i (a_i a_i^T) (x) (b_i b_i^T)`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{extract_atoms, extract_atoms_at_gap};
use crate::forms::{pi, KroneckerMatrix, Omega};
use crate::moments::{
    flatness_check, FlatnessMode, FlatnessReport, FlatnessTolerances, LinearFunctional, RankRule, Tms,
};
use crate::monomials::MonomialBasis;
use crate::poly::Poly;
use crate::positivity::Timings;
use crate::relaxation::{self, orthant_polys, sphere_polys, MomentRelaxation, RelaxationSpec};
use crate::sdp::{solve, CertificateCheck, SdpOptions, SdpProblem, SdpStatus};

pub const MIN_ORDER: usize = 3;

/// `R = [x,y]_3^T Q [x,y]_3` with `Q = G^T G / |G^T G|_F`.
#[derive(Debug, Clone)]
pub struct SosObjective {
    pub gram: DMatrix<f64>,
    pub basis: MonomialBasis,
    pub poly: Poly,
}

pub fn random_sos_objective(p: usize, q: usize, seed: u64) -> Result<SosObjective> {
    let basis = MonomialBasis::new(p, q, 3)?;
    let n = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let mut gram = g.transpose() * &g;
    let fro = gram.norm();
    gram /= fro;
    let mut poly = Poly::zero(p + q);
    for i in 0..n {
        for j in 0..n {
            poly.add_term(basis.entry(i).mul(basis.entry(j)), gram[(i, j)]);
        }
    }
    Ok(SosObjective { gram, basis, poly })
}

fn build_internal(a: &KroneckerMatrix, objective: &Poly, k: usize) -> Result<MomentRelaxation> {
    if k < MIN_ORDER {
        return Err(Error::Order { k, min: MIN_ORDER });
    }
    let (p, q) = (a.p(), a.q());
    let basis = MonomialBasis::new(p, q, 4)?;
    let omega = Omega::new(p, q);
    let fixed = a
        .project_to_e()
        .into_iter()
        .enumerate()
        .map(|(t, v)| Ok((LinearFunctional::unit(basis.index_of(&omega.monomial(t))?), v)))
        .collect::<Result<Vec<_>>>()?;
    relaxation::build(RelaxationSpec {
        p,
        q,
        k,
        objective,
        fixed,
        h: &sphere_polys(p, q),
        g: &orthant_polys(p, q),
    })
}

/// The order-`k` relaxation: `w|_E = a`, sphere ideal rows, `M_k(w)` and the
/// two localizing blocks PSD, objective `<R, w>`.
pub fn build_relaxation(a: &KroneckerMatrix, objective: &SosObjective, k: usize) -> Result<SdpProblem> {
    Ok(build_internal(a, &objective.poly, k)?.problem)
}

/// `|A - sum_i (a_i a_i^T) (x) (b_i b_i^T)|_F / (1 + |A|_F)`.
pub fn verify_decomposition(a: &KroneckerMatrix, terms: &[SeparableTerm]) -> f64 {
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = terms.iter().map(|t| (t.a.clone(), t.b.clone())).collect();
    let sum = KroneckerMatrix::from_factor_pairs(a.p(), a.q(), &pairs);
    (a.matrix() - sum.matrix()).norm() / (1.0 + a.matrix().norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityOptions {
    pub k_max: usize,
    pub seed: u64,
    pub tolerances: FlatnessTolerances,
    pub sdp: SdpOptions,
}

impl Default for SeparabilityOptions {
    fn default() -> Self {
        SeparabilityOptions {
            k_max: 6,
            seed: 0,
            tolerances: FlatnessTolerances::default(),
            sdp: SdpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparabilityStatus {
    Separable,
    NotSeparable,
    Inconclusive,
}

/// One term `(a a^T) (x) (b b^T)` of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableTerm {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Farkas ray of the relaxation, with its certificate test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayReport {
    pub y: Vec<f64>,
    pub z: Vec<Vec<Vec<f64>>>,
    pub check: CertificateCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub k: usize,
    pub sdp_status: SdpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub flatness: Vec<FlatnessReport>,
}

/// Largest accepted relative reconstruction residual.
pub const RECONSTRUCTION_TOL: f64 = 1e-6;

/// Floor of the sphere and moment-fit tests when atoms are read at a
/// spectral gap. The atoms are polished and the decomposition is checked
/// against `RECONSTRUCTION_TOL` afterwards, so the extraction tests only
/// need to reject wrong ranks.
const GAP_EXTRACTION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub status: SeparabilityStatus,
    pub atoms: Vec<SeparableTerm>,
    pub reconstruction_residual: Option<f64>,
    pub infeasibility_ray: Option<RayReport>,
    pub order_used: Option<usize>,
    pub flat_t: Option<usize>,
    pub moment_rank: Option<usize>,
    /// Rank rule under which the atoms were extracted.
    pub rank_rule: Option<RankRule>,
    pub seed: u64,
    pub orders: Vec<OrderRecord>,
    pub diagnostics: Vec<String>,
    pub timings: Timings,
}

pub fn check_separability(a: &KroneckerMatrix, opts: &SeparabilityOptions) -> Result<SeparabilityReport> {
    let start = Instant::now();
    if opts.k_max < MIN_ORDER {
        return Err(Error::Order {
            k: opts.k_max,
            min: MIN_ORDER,
        });
    }
    let (p, q) = (a.p(), a.q());
    let objective = random_sos_objective(p, q, opts.seed)?;
    let h = sphere_polys(p, q);
    let g = orthant_polys(p, q);
    let mut report = SeparabilityReport {
        status: SeparabilityStatus::Inconclusive,
        atoms: Vec::new(),
        reconstruction_residual: None,
        infeasibility_ray: None,
        order_used: None,
        flat_t: None,
        moment_rank: None,
        rank_rule: None,
        seed: opts.seed,
        orders: Vec::new(),
        diagnostics: Vec::new(),
        timings: Timings::default(),
    };
    let mut timings = Timings::default();
    'orders: for k in MIN_ORDER..=opts.k_max {
        let t0 = Instant::now();
        let rel = match build_internal(a, &objective.poly, k) {
            Ok(r) => r,
            // Inconsistent fixed entries cannot come from any measure.
            Err(Error::Structural(msg)) if msg.contains("inconsistent") => {
                report.diagnostics.push(format!("k={k}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        timings.build_seconds += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let out = solve(&rel.problem, &opts.sdp);
        timings.solve_seconds += t0.elapsed().as_secs_f64();
        let mut record = OrderRecord {
            k,
            sdp_status: out.status,
            iterations: out.iterations,
            objective: out.primal_objective,
            flatness: Vec::new(),
        };
        match out.status {
            SdpStatus::PrimalInfeasible => {
                if let Some(ray) = &out.certificate {
                    let check = ray.verify(&rel.problem);
                    if check.passes {
                        report.status = SeparabilityStatus::NotSeparable;
                        report.order_used = Some(k);
                        report.infeasibility_ray = Some(RayReport {
                            y: ray.y.clone(),
                            z: ray.z.iter().map(matrix_rows).collect(),
                            check,
                        });
                        report.orders.push(record);
                        break 'orders;
                    }
                }
                report
                    .diagnostics
                    .push(format!("k={k}: infeasibility ray failed the certificate test"));
                report.orders.push(record);
                continue;
            }
            SdpStatus::Optimal | SdpStatus::Inaccurate => {}
            other => {
                report.diagnostics.push(format!("k={k}: solver returned {other:?}"));
                report.orders.push(record);
                continue;
            }
        }
        let w = Tms::new(rel.basis.clone(), out.x.clone())?;
        for t in 2..=k {
            let flat = flatness_check(&w, t, &h, &g, FlatnessMode::Inner, &opts.tolerances)?;
            let mut attempts = Vec::new();
            if flat.is_flat {
                attempts.push(RankRule::Absolute);
            }
            if flat.is_gap_flat(&opts.tolerances) {
                attempts.push(RankRule::SpectralGap);
            }
            record.flatness.push(flat.clone());
            for rule in attempts {
                let t0 = Instant::now();
                let extracted = match rule {
                    RankRule::Absolute => {
                        extract_atoms(&w, t, opts.tolerances.rank_tol, opts.seed).map(|m| (m, flat.rank_high))
                    }
                    RankRule::SpectralGap => extract_atoms_at_gap(&w, t, GAP_EXTRACTION_TOL, opts.seed)
                        .map(|(m, _)| (m, flat.gap_rank_high.unwrap_or(0))),
                };
                timings.extraction_seconds += t0.elapsed().as_secs_f64();
                let (measure, rank) = match extracted {
                    Ok(m) => m,
                    Err(e) => {
                        report.diagnostics.push(format!("k={k}, t={t}, {rule:?} rank: {e}"));
                        continue;
                    }
                };
                let terms: Vec<SeparableTerm> = measure
                    .atoms
                    .iter()
                    .map(|at| {
                        let s = at.weight.powf(0.25);
                        SeparableTerm {
                            a: at.u.iter().map(|x| s * x).collect(),
                            b: at.v.iter().map(|x| s * x).collect(),
                        }
                    })
                    .collect();
                let terms = polish_terms(a, terms);
                let residual = verify_decomposition(a, &terms);
                if residual > RECONSTRUCTION_TOL {
                    report.diagnostics.push(format!(
                        "k={k}, t={t}, {rule:?} rank: reconstruction residual {residual:.3e}"
                    ));
                    continue;
                }
                report.status = SeparabilityStatus::Separable;
                report.atoms = terms;
                report.reconstruction_residual = Some(residual);
                report.order_used = Some(k);
                report.flat_t = Some(t);
                report.moment_rank = Some(rank);
                report.rank_rule = Some(rule);
                report.orders.push(record);
                break 'orders;
            }
        }
        if out.status == SdpStatus::Inaccurate {
            report
                .diagnostics
                .push(format!("k={k}: solver finished with reduced accuracy"));
        }
        report.orders.push(record);
    }
    timings.total_seconds = start.elapsed().as_secs_f64();
    report.timings = timings;
    Ok(report)
}

const POLISH_STEPS: usize = 30;

/// Damped Gauss-Newton refinement of `sum_i (a_i a_i^T) (x) (b_i b_i^T)`
/// against the Omega entries of `A`. Steps are minimum-norm solutions of the
/// damped normal equations `(J J^T + lambda I) u = r`, `step = J^T u`, and
/// are kept only when they lower the residual.
pub fn polish_terms(a: &KroneckerMatrix, terms: Vec<SeparableTerm>) -> Vec<SeparableTerm> {
    let (p, q) = (a.p(), a.q());
    let omega = Omega::new(p, q);
    let tuples = omega.tuples();
    let target: Vec<f64> = tuples
        .iter()
        .map(|&[i, j, k, l]| a.matrix()[(pi(q, i, j), pi(q, k, l))])
        .collect();
    let width = p + q;
    let pack = |ts: &[SeparableTerm]| -> Vec<f64> { ts.iter().flat_map(|t| t.a.iter().chain(&t.b).copied()).collect() };
    let residual = |theta: &[f64]| -> Vec<f64> {
        tuples
            .iter()
            .zip(&target)
            .map(|(&[i, j, k, l], &t)| {
                let model: f64 = theta.chunks(width).map(|c| c[i] * c[k] * c[p + j] * c[p + l]).sum();
                t - model
            })
            .collect()
    };
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut theta = pack(&terms);
    if theta.is_empty() {
        return terms;
    }
    let mut r = residual(&theta);
    let mut cost = sq(&r);
    let mut lambda = 1e-6 * (1.0 + sq(&target));
    for _ in 0..POLISH_STEPS {
        if cost <= 1e-30 * (1.0 + sq(&target)) {
            break;
        }
        let m = tuples.len();
        let jac = DMatrix::from_fn(m, theta.len(), |row, col| {
            let [i, j, k, l] = tuples[row];
            let c = &theta[(col / width) * width..(col / width + 1) * width];
            let v = col % width;
            let mut d = 0.0;
            if v == i {
                d += c[k] * c[p + j] * c[p + l];
            }
            if v == k {
                d += c[i] * c[p + j] * c[p + l];
            }
            if v == p + j {
                d += c[i] * c[k] * c[p + l];
            }
            if v == p + l {
                d += c[i] * c[k] * c[p + j];
            }
            d
        });
        let rv = nalgebra::DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..8 {
            let mut normal = &jac * jac.transpose();
            for d in 0..m {
                normal[(d, d)] += lambda;
            }
            let Some(chol) = normal.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = jac.transpose() * chol.solve(&rv);
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let tr = residual(&trial);
            let tc = sq(&tr);
            if tc < cost {
                theta = trial;
                r = tr;
                cost = tc;
                lambda = (lambda * 0.1).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    theta
        .chunks(width)
        .map(|c| SeparableTerm {
            a: c[..p].to_vec(),
            b: c[p..].to_vec(),
        })
        .collect()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sos_objective_is_deterministic_and_normalised() {
        let a = random_sos_objective(2, 3, 11).unwrap();
        let b = random_sos_objective(2, 3, 11).unwrap();
        assert_eq!(a.gram.nrows(), 56);
        assert_eq!(a.gram, b.gram);
        assert!((a.gram.norm() - 1.0).abs() < 1e-12);
        assert!(a.poly.eval(&[0.3, -1.0, 2.0, 0.1, -0.7]) >= 0.0);
    }

    #[test]
    fn fixed_entries_count() {
        let a = KroneckerMatrix::kron_rank1(&[1.0, 0.0], &[0.0, 1.0]);
        let obj = random_sos_objective(2, 2, 0).unwrap();
        assert!(build_relaxation(&a, &obj, 2).is_err());
        let prob = build_relaxation(&a, &obj, 3).unwrap();
        assert_eq!(prob.blocks().len(), 3);
        assert_eq!(prob.blocks()[0].side(), 35);
    }

    #[test]
    fn exact_decomposition_has_zero_residual() {
        let u = [0.6, 0.8];
        let v = [1.0, 0.0, 0.0];
        let a = KroneckerMatrix::kron_rank1(&u, &v).scaled(2.0);
        let s = 2f64.powf(0.25);
        let term = SeparableTerm {
            a: u.iter().map(|x| x * s).collect(),
            b: v.iter().map(|x| x * s).collect(),
        };
        assert!(verify_decomposition(&a, &[term]) < 1e-12);
        assert!(verify_decomposition(&a, &[]) > 0.1);
    }
}
