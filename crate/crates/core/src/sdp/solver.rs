//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! The embedding works with `(x, y, z, s, tau, kappa)` and the residuals
//!
//! ```text
//! rx = A^T y + G^T z + c tau
//! ry = A x - b tau
//! rz = G x + s - h tau
//! rt = kappa + c^T x + b^T y + h^T z
//! ```
//!
//! which all vanish on the solution set of the embedding. `tau > 0` in the
//! limit gives an optimal pair, `kappa > 0` an infeasibility ray.

use nalgebra::DMatrix;

use super::kkt::{Kkt, NullSpace, Operators};
use super::psd::{jordan, max_step, NtScaling};
use super::{AffineBlock, ConeBlock, FarkasRay, Residuals, SdpOptions, SdpOutcome, SdpProblem, SdpStatus};
use crate::moments::min_eigenvalue;

const STEP: f64 = 0.99;
const MIN_STEP: f64 = 1e-12;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_blocks(m: &[DMatrix<f64>]) -> f64 {
    m.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Splits nonnegative blocks into `1 x 1` PSD blocks. Returns the internal
/// blocks and, per original block, the internal indices it maps to.
fn expand(prob: &SdpProblem) -> (Vec<AffineBlock>, Vec<Vec<usize>>) {
    let mut out = Vec::new();
    let mut groups = Vec::new();
    for b in &prob.blocks {
        match b.cone() {
            ConeBlock::Psd(_) => {
                groups.push(vec![out.len()]);
                out.push(b.clone());
            }
            ConeBlock::NonNeg(m) => {
                let mut quads: Vec<Vec<(usize, usize, usize, f64)>> = vec![Vec::new(); m];
                for ((i, _), terms) in b.entries() {
                    quads[i].extend(terms.iter().map(|&(v, c)| (0, 0, v, c)));
                }
                let mut g = Vec::new();
                for (i, q) in quads.into_iter().enumerate() {
                    g.push(out.len());
                    let c = DMatrix::from_element(1, 1, b.constant()[(i, i)]);
                    out.push(AffineBlock::new(ConeBlock::Psd(1), c, q).expect("diagonal entry"));
                }
                groups.push(g);
            }
        }
    }
    (out, groups)
}

fn collapse(prob: &SdpProblem, groups: &[Vec<usize>], mats: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    prob.blocks
        .iter()
        .zip(groups)
        .map(|(b, g)| match b.cone() {
            ConeBlock::Psd(_) => mats[g[0]].clone(),
            ConeBlock::NonNeg(m) => DMatrix::from_fn(m, m, |i, j| if i == j { mats[g[i]][(0, 0)] } else { 0.0 }),
        })
        .collect()
}

/// Moves a symmetric matrix into the interior of the PSD cone the way the
/// standard initialisation does: shift by `1 + t` when its smallest
/// eigenvalue `-t` is not safely positive.
fn shift_into_cone(m: &mut [DMatrix<f64>]) {
    let t = m.iter().map(|b| -min_eigenvalue(b)).fold(f64::NEG_INFINITY, f64::max);
    let nrm = norm_blocks(m);
    if t >= -1e-8 * nrm.max(1.0) {
        for b in m.iter_mut() {
            let n = b.nrows();
            for i in 0..n {
                b[(i, i)] += 1.0 + t;
            }
        }
    }
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Slacks and dual matrices, updated additively so that the residuals
    /// follow the linear equations exactly.
    s: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    scal: Vec<NtScaling>,
    tau: f64,
    kappa: f64,
}

pub fn solve(prob: &SdpProblem, opts: &SdpOptions) -> SdpOutcome {
    let (blocks, groups) = expand(prob);
    let ops = Operators {
        blocks: &blocks,
        eq: &prob.equalities,
        n: prob.n_vars,
    };
    let null_space = NullSpace::new(&ops);
    let n = prob.n_vars;
    let p = prob.equalities.len();
    let c = &prob.objective;
    let b = &prob.eq_rhs;
    let hmat: Vec<DMatrix<f64>> = blocks.iter().map(|bl| bl.constant().clone()).collect();
    let deg: usize = blocks.iter().map(|bl| bl.side()).sum();
    let resx0 = norm2(c).max(1.0);
    let resy0 = norm2(b).max(1.0);
    let resz0 = norm_blocks(&hmat).max(1.0);

    let fail = |iterations| SdpOutcome {
        status: SdpStatus::Inaccurate,
        x: vec![0.0; n],
        y: vec![0.0; p],
        s: collapse(prob, &groups, &hmat),
        z: collapse(prob, &groups, &hmat),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        residuals: Residuals {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
        },
        iterations,
        tau: 0.0,
        kappa: 0.0,
        certificate: None,
    };

    // Initial point from two least-squares problems with identity scaling.
    let ident: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|bl| DMatrix::identity(bl.side(), bl.side()))
        .collect();
    let Some(kkt0) = Kkt::factor(&ops, &null_space, ident) else {
        return fail(0);
    };
    let zeros_b: Vec<DMatrix<f64>> = blocks.iter().map(|bl| DMatrix::zeros(bl.side(), bl.side())).collect();
    let (x0, _, u) = kkt0.solve(&ops, &vec![0.0; n], b, &hmat);
    let mut s0: Vec<DMatrix<f64>> = u.into_iter().map(|m| -m).collect();
    let negc: Vec<f64> = c.iter().map(|v| -v).collect();
    let (_, y0, mut z0) = kkt0.solve(&ops, &negc, &vec![0.0; p], &zeros_b);
    shift_into_cone(&mut s0);
    shift_into_cone(&mut z0);
    let scal: Option<Vec<NtScaling>> = s0.iter().zip(&z0).map(|(s, z)| NtScaling::from_pair(s, z)).collect();
    let Some(scal) = scal else {
        return fail(0);
    };
    let mut it = Iterate {
        x: x0,
        y: y0,
        s: s0,
        z: z0,
        scal,
        tau: 1.0,
        kappa: 1.0,
    };

    let mut status = SdpStatus::IterationLimit;
    let mut iterations = 0;
    let mut certificate = None;
    let mut last_res = Residuals::default();
    let mut pcost = f64::NAN;
    let mut dcost = f64::NAN;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let (s, z) = (&it.s, &it.z);
        let (tau, kappa) = (it.tau, it.kappa);

        // Residuals.
        let mut aty_gtz = vec![0.0; n];
        ops.at_add(&it.y, 1.0, &mut aty_gtz);
        ops.gt_add(z, 1.0, &mut aty_gtz);
        let rx: Vec<f64> = aty_gtz.iter().zip(c).map(|(a, ci)| a + ci * tau).collect();
        let ax = ops.a(&it.x);
        let ry: Vec<f64> = ax.iter().zip(b).map(|(a, bi)| a - bi * tau).collect();
        let gx = ops.g(&it.x);
        let gx_s: Vec<DMatrix<f64>> = gx.iter().zip(s).map(|(g, sj)| g + sj).collect();
        let rz: Vec<DMatrix<f64>> = gx_s.iter().zip(&hmat).map(|(g, h)| g - h * tau).collect();
        let cx = dot(c, &it.x);
        let by = dot(b, &it.y);
        let hz = ops.h_dot(z);
        let rt = kappa + cx + by + hz;
        let sz: f64 = it.scal.iter().map(NtScaling::lambda_sq_sum).sum();
        let mu = (sz + tau * kappa) / (deg as f64 + 1.0);

        pcost = cx / tau;
        dcost = -(by + hz) / tau;
        let pres = (norm2(&ry) / resy0).max(norm_blocks(&rz) / resz0) / tau;
        let dres = norm2(&rx) / resx0 / tau;
        let gap = sz / (tau * tau);
        last_res = Residuals {
            primal: pres,
            dual: dres,
            gap,
        };
        let pinfres = if by + hz < 0.0 {
            norm2(&aty_gtz) / resx0 / -(by + hz)
        } else {
            f64::INFINITY
        };
        let dinfres = if cx < 0.0 {
            (norm2(&ax) / resy0).max(norm_blocks(&gx_s) / resz0) / -cx
        } else {
            f64::INFINITY
        };
        if opts.verbose {
            eprintln!(
                "{iter:3} pcost {pcost:+.6e} dcost {dcost:+.6e} gap {gap:.1e} pres {pres:.1e} dres {dres:.1e} k/t {:.1e}",
                kappa / tau
            );
        }

        if pres <= opts.tol && dres <= opts.tol && gap <= opts.tol * (1.0 + pcost.abs()) {
            status = SdpStatus::Optimal;
            break;
        }
        if pinfres <= opts.tol {
            let ray = make_ray(prob, &groups, &it.y, z);
            if ray.verify(prob).passes {
                status = SdpStatus::PrimalInfeasible;
                certificate = Some(ray);
                break;
            }
        }
        if dinfres <= opts.tol {
            status = SdpStatus::DualInfeasible;
            break;
        }
        if iter == opts.max_iter {
            break;
        }

        let winv: Vec<DMatrix<f64>> = it.scal.iter().map(NtScaling::w_inv).collect();
        let Some(kkt) = Kkt::factor(&ops, &null_space, winv) else {
            status = SdpStatus::Inaccurate;
            break;
        };
        let (x1, y1, z1) = kkt.solve(&ops, &negc, b, &hmat);
        let denom = dot(c, &x1) + dot(b, &y1) + ops.h_dot(&z1) - kappa / tau;

        let mut sigma = 0.0;
        let mut aff: Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, f64, f64)> = None;
        let mut step = None;
        for pass in 0..2 {
            let phi = 1.0 - sigma;
            let ds_rhs: Vec<DMatrix<f64>> = it
                .scal
                .iter()
                .enumerate()
                .map(|(j, sc)| {
                    let m = sc.lambda.len();
                    let mut d = DMatrix::from_fn(m, m, |a, bb| {
                        if a == bb {
                            -sc.lambda[a] * sc.lambda[a] + sigma * mu
                        } else {
                            0.0
                        }
                    });
                    if let Some((dsa, dza, _, _)) = &aff {
                        d -= jordan(&dsa[j], &dza[j]);
                    }
                    d
                })
                .collect();
            let mut dk_rhs = -tau * kappa + sigma * mu;
            if let Some((_, _, dta, dka)) = &aff {
                dk_rhs -= dta * dka;
            }
            let lsolved: Vec<DMatrix<f64>> = it.scal.iter().zip(&ds_rhs).map(|(sc, d)| sc.lambda_solve(d)).collect();
            let bx: Vec<f64> = rx.iter().map(|v| -phi * v).collect();
            let byv: Vec<f64> = ry.iter().map(|v| -phi * v).collect();
            let bz: Vec<DMatrix<f64>> = rz
                .iter()
                .zip(it.scal.iter().zip(&lsolved))
                .map(|(r, (sc, l))| -(r * phi) - sc.unscale_s(l))
                .collect();
            let dt_rhs = -phi * rt - dk_rhs / tau;
            let (x2, y2, z2) = kkt.solve(&ops, &bx, &byv, &bz);
            let dtau = (dt_rhs - dot(c, &x2) - dot(b, &y2) - ops.h_dot(&z2)) / denom;
            let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b1)| a + dtau * b1).collect();
            let dy: Vec<f64> = y2.iter().zip(&y1).map(|(a, b1)| a + dtau * b1).collect();
            let dz: Vec<DMatrix<f64>> = z2.iter().zip(&z1).map(|(a, b1)| a + b1 * dtau).collect();
            let dkappa = (dk_rhs - kappa * dtau) / tau;
            let dzt: Vec<DMatrix<f64>> = it.scal.iter().zip(&dz).map(|(sc, d)| sc.scale_z(d)).collect();
            // The linear equation for ds keeps the residual of `rz` exact
            // even when the reduced system is badly conditioned.
            let gdx = ops.g(&dx);
            let ds: Vec<DMatrix<f64>> = rz
                .iter()
                .zip(&gdx)
                .zip(&hmat)
                .map(|((r, g), h)| h * dtau - r * phi - g)
                .collect();
            let dst: Vec<DMatrix<f64>> = it.scal.iter().zip(&ds).map(|(sc, d)| sc.scale_s(d)).collect();

            let mut amax = f64::INFINITY;
            for ((sc, ds), dz) in it.scal.iter().zip(&dst).zip(&dzt) {
                amax = amax.min(max_step(&sc.lambda, ds)).min(max_step(&sc.lambda, dz));
            }
            if dtau < 0.0 {
                amax = amax.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                amax = amax.min(-kappa / dkappa);
            }
            if pass == 0 {
                let a = amax.min(1.0);
                sigma = (1.0 - a).powi(3);
                aff = Some((dst, dzt, dtau, dkappa));
            } else {
                let alpha = (STEP * amax).min(1.0);
                step = Some((alpha, dx, dy, ds, dz, dst, dzt, dtau, dkappa));
            }
        }
        let (alpha, dx, dy, ds, dz, dst, dzt, dtau, dkappa) = step.expect("corrector pass ran");
        if !(alpha > MIN_STEP) {
            status = SdpStatus::Inaccurate;
            break;
        }
        let new_s: Vec<DMatrix<f64>> = it.s.iter().zip(&ds).map(|(s, d)| s + d * alpha).collect();
        let new_z: Vec<DMatrix<f64>> = it.z.iter().zip(&dz).map(|(z, d)| z + d * alpha).collect();
        let mut new_scal = Vec::with_capacity(it.scal.len());
        for (j, sc) in it.scal.iter().enumerate() {
            // The scaling is recomputed from the updated pair; the scaled
            // update is the fallback when the pair is too close to the
            // boundary to factor.
            let fresh = NtScaling::from_pair(&new_s[j], &new_z[j]);
            let next = fresh.or_else(|| {
                let mut sc = sc.clone();
                sc.update(&dst[j], &dzt[j], alpha).then_some(sc)
            });
            match next {
                Some(sc) => new_scal.push(sc),
                None => break,
            }
        }
        if new_scal.len() != it.scal.len() {
            status = SdpStatus::Inaccurate;
            break;
        }
        it.s = new_s;
        it.z = new_z;
        it.scal = new_scal;
        it.x.iter_mut().zip(&dx).for_each(|(a, d)| *a += alpha * d);
        it.y.iter_mut().zip(&dy).for_each(|(a, d)| *a += alpha * d);
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
    }

    let (s, z) = (&it.s, &it.z);
    if matches!(status, SdpStatus::Inaccurate | SdpStatus::IterationLimit) && certificate.is_none() {
        let by = dot(b, &it.y);
        let hz = ops.h_dot(z);
        if by + hz < 0.0 && it.kappa > it.tau {
            let ray = make_ray(prob, &groups, &it.y, z);
            if ray.verify(prob).passes {
                status = SdpStatus::PrimalInfeasible;
                certificate = Some(ray);
            }
        }
    }
    let tau = it.tau;
    SdpOutcome {
        status,
        x: it.x.iter().map(|v| v / tau).collect(),
        y: it.y.iter().map(|v| v / tau).collect(),
        s: collapse(prob, &groups, &s.iter().map(|m| m / tau).collect::<Vec<_>>()),
        z: collapse(prob, &groups, &z.iter().map(|m| m / tau).collect::<Vec<_>>()),
        primal_objective: pcost,
        dual_objective: dcost,
        residuals: last_res,
        iterations,
        tau,
        kappa: it.kappa,
        certificate,
    }
}

fn make_ray(prob: &SdpProblem, groups: &[Vec<usize>], y: &[f64], z: &[DMatrix<f64>]) -> FarkasRay {
    let mut ray = FarkasRay {
        y: y.to_vec(),
        z: collapse(prob, groups, z),
    };
    let nrm = ray.norm();
    if nrm > 0.0 {
        ray.y.iter_mut().for_each(|v| *v /= nrm);
        ray.z.iter_mut().for_each(|m| *m /= nrm);
    }
    ray
}
