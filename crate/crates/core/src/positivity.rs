//! Positivity of a linear map through the minimum of its bi-quadratic form
//! over the bi-sphere.
//!
//! The problem `min B(x, y)` s.t. `|x| = |y| = 1` is augmented with the KKT
//! equations `B_x - 2 B x = 0`, `B_y - 2 B y = 0` and the sign-fixing
//! inequalities `1^T x >= 0`, `1^T y >= 0`, then relaxed by moment
//! relaxations of increasing order `k`. A flat optimal moment vector
//! certifies `b_min` and yields the global minimizers.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{extract_atoms, extract_atoms_at_gap};
use crate::forms::BiQuadraticForm;
use crate::moments::{
    flatness_check, FlatnessMode, FlatnessReport, FlatnessTolerances, LinearFunctional, RankRule, Tms,
};
use crate::poly::Poly;
use crate::relaxation::{self, orthant_polys, sphere_polys, MomentRelaxation, RelaxationSpec};
use crate::sdp::{solve, SdpOptions, SdpProblem, SdpStatus};

/// Smallest admissible relaxation order: `2k` must reach the degree-5 KKT rows.
pub const MIN_ORDER: usize = 3;

/// Objective and constraint tuples of the KKT-augmented problem.
#[derive(Debug, Clone)]
pub struct KktProblem {
    pub objective: Poly,
    /// `(x^T x - 1, y^T y - 1, B_x - 2Bx, B_y - 2By)`.
    pub h: Vec<Poly>,
    /// `(1^T x, 1^T y)`.
    pub g: Vec<Poly>,
}

pub fn build_kkt_problem(form: &BiQuadraticForm) -> KktProblem {
    let (p, q) = (form.p(), form.q());
    let mut h = sphere_polys(p, q);
    h.extend(form.gradient_polynomials());
    KktProblem {
        objective: form.to_poly(),
        h,
        g: orthant_polys(p, q),
    }
}

fn build_internal(form: &BiQuadraticForm, kkt: &KktProblem, k: usize) -> Result<MomentRelaxation> {
    if k < MIN_ORDER {
        return Err(Error::Order { k, min: MIN_ORDER });
    }
    relaxation::build(RelaxationSpec {
        p: form.p(),
        q: form.q(),
        k,
        objective: &kkt.objective,
        fixed: vec![(LinearFunctional::unit(0), 1.0)],
        h: &kkt.h,
        g: &kkt.g,
    })
}

/// The order-`k` relaxation: `<1, w> = 1`, truncated-ideal rows of `h`,
/// `M_k(w)` and `L_g^{(k)}(w)` PSD, objective `<B, w>`.
pub fn build_relaxation(form: &BiQuadraticForm, k: usize) -> Result<SdpProblem> {
    Ok(build_internal(form, &build_kkt_problem(form), k)?.problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityOptions {
    pub k_max: usize,
    pub positivity_tol: f64,
    pub seed: u64,
    pub tolerances: FlatnessTolerances,
    pub sdp: SdpOptions,
}

impl Default for PositivityOptions {
    fn default() -> Self {
        PositivityOptions {
            k_max: 6,
            positivity_tol: 1e-6,
            seed: 0,
            tolerances: FlatnessTolerances::default(),
            sdp: SdpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositivityStatus {
    Positive,
    NotPositive,
    Inconclusive,
}

/// Result of one relaxation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub k: usize,
    /// Optimal value of the moment relaxation.
    pub primal: f64,
    /// Dual objective reported by the solver.
    pub dual: f64,
    pub sdp_status: SdpStatus,
    pub iterations: usize,
    pub flatness: Vec<FlatnessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub extraction_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub status: PositivityStatus,
    /// Certified minimum; a lower bound when `minimizers` is empty.
    pub b_min: Option<f64>,
    /// Set when `|b_min| <= positivity_tol`.
    pub boundary: bool,
    pub bound_sequence: Vec<BoundRecord>,
    pub minimizers: Vec<Minimizer>,
    pub order_used: Option<usize>,
    pub flat_t: Option<usize>,
    pub moment_rank: Option<usize>,
    /// Rank rule under which the minimizers were extracted.
    pub rank_rule: Option<RankRule>,
    pub diagnostics: Vec<String>,
    pub timings: Timings,
}

/// Largest tolerated gap between `B(u, v)` at an extracted minimizer and `b_min`.
const MINIMIZER_VALUE_TOL: f64 = 1e-5;

/// Runs the relaxation hierarchy for `k = 3..=k_max`, stopping at the first
/// order whose solution is flat (`rank M_t = rank M_{t+1}` for some
/// `t in 2..k`) and whose minimizers extract cleanly and attain the bound.
/// When the absolute rank rule fails to give clean atoms, ranks read at the
/// first clear spectral gap are tried; the attained-bound test guards both.
/// An order that is not flat but whose bound is already nonnegative certifies
/// positivity with `b_min` set to that bound and no minimizers.
pub fn check_positivity(form: &BiQuadraticForm, opts: &PositivityOptions) -> Result<PositivityReport> {
    let start = Instant::now();
    let kkt = build_kkt_problem(form);
    let mut report = PositivityReport {
        status: PositivityStatus::Inconclusive,
        b_min: None,
        boundary: false,
        bound_sequence: Vec::new(),
        minimizers: Vec::new(),
        order_used: None,
        flat_t: None,
        moment_rank: None,
        rank_rule: None,
        diagnostics: Vec::new(),
        timings: Timings::default(),
    };
    let mut timings = Timings::default();
    if opts.k_max < MIN_ORDER {
        return Err(Error::Order {
            k: opts.k_max,
            min: MIN_ORDER,
        });
    }
    'orders: for k in MIN_ORDER..=opts.k_max {
        let t0 = Instant::now();
        let rel = build_internal(form, &kkt, k)?;
        timings.build_seconds += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let out = solve(&rel.problem, &opts.sdp);
        timings.solve_seconds += t0.elapsed().as_secs_f64();
        let mut record = BoundRecord {
            k,
            primal: out.primal_objective,
            dual: out.dual_objective,
            sdp_status: out.status,
            iterations: out.iterations,
            flatness: Vec::new(),
        };
        if !matches!(out.status, SdpStatus::Optimal | SdpStatus::Inaccurate) {
            report
                .diagnostics
                .push(format!("k={k}: solver returned {:?}", out.status));
            report.bound_sequence.push(record);
            continue;
        }
        let w = Tms::new(rel.basis.clone(), out.x.clone())?;
        let b_min = out.primal_objective;
        for t in 2..k {
            let flat = flatness_check(&w, t, &kkt.h, &kkt.g, FlatnessMode::Outer, &opts.tolerances)?;
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
                        extract_atoms(&w, t + 1, opts.tolerances.rank_tol, opts.seed).map(|m| (m, flat.rank_high))
                    }
                    RankRule::SpectralGap => extract_atoms_at_gap(&w, t + 1, 0.0, opts.seed)
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
                let minimizers: Vec<Minimizer> = measure
                    .atoms
                    .iter()
                    .map(|a| Minimizer {
                        u: a.u.clone(),
                        v: a.v.clone(),
                        value: form.evaluate(&a.u, &a.v),
                        weight: a.weight,
                    })
                    .collect();
                let worst = minimizers.iter().map(|m| (m.value - b_min).abs()).fold(0.0, f64::max);
                if minimizers.is_empty() || worst > MINIMIZER_VALUE_TOL * b_min.abs().max(1.0) {
                    report.diagnostics.push(format!(
                        "k={k}, t={t}, {rule:?} rank: extracted points miss the bound by {worst:.3e}"
                    ));
                    continue;
                }
                report.status = if b_min >= -opts.positivity_tol {
                    PositivityStatus::Positive
                } else {
                    PositivityStatus::NotPositive
                };
                report.boundary = b_min.abs() <= opts.positivity_tol;
                report.b_min = Some(b_min);
                report.minimizers = minimizers;
                report.order_used = Some(k);
                report.flat_t = Some(t);
                report.moment_rank = Some(rank);
                report.rank_rule = Some(rule);
                report.bound_sequence.push(record);
                break 'orders;
            }
        }
        if out.status == SdpStatus::Inaccurate {
            report
                .diagnostics
                .push(format!("k={k}: solver finished with reduced accuracy"));
        }
        // Without flatness the relaxation value is still a lower bound on
        // b_min, so a nonnegative bound settles positivity on its own.
        let lower = out.primal_objective.min(out.dual_objective);
        if out.status == SdpStatus::Optimal && lower >= -opts.positivity_tol {
            report.status = PositivityStatus::Positive;
            report.boundary = lower.abs() <= opts.positivity_tol;
            report.b_min = Some(lower);
            report.order_used = Some(k);
            report
                .diagnostics
                .push(format!("k={k}: not flat; positivity certified by the relaxation bound"));
            report.bound_sequence.push(record);
            break;
        }
        report.bound_sequence.push(record);
    }
    timings.total_seconds = start.elapsed().as_secs_f64();
    report.timings = timings;
    Ok(report)
}
