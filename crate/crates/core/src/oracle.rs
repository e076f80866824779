//! Brute-force baselines for the minimum of a bi-quadratic form over the
//! bi-sphere. They are only used to cross-check certified results.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forms::{norm, BiQuadraticForm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridEstimate {
    pub value: f64,
    /// Bound on `value - b_min` from the Lipschitz constant on the torus.
    pub error_bound: f64,
}

/// Minimum of `B` over `(cos a, sin a) x (cos b, sin b)` on a uniform grid
/// of `[0, 2 pi)^2` with spacing at most `step`.
pub fn grid_min_bisphere_2x2(form: &BiQuadraticForm, step: f64) -> Result<GridEstimate> {
    if form.p() != 2 || form.q() != 2 {
        return Err(Error::Input("grid oracle needs p = q = 2".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Input("grid step must be positive".into()));
    }
    let n = (std::f64::consts::TAU / step).ceil() as usize;
    let h = std::f64::consts::TAU / n as f64;
    let trig: Vec<[f64; 2]> = (0..n).map(|i| [(i as f64 * h).cos(), (i as f64 * h).sin()]).collect();
    let g = form.gram_matrix();
    let mut best = f64::INFINITY;
    for x in &trig {
        // For fixed x the form is a quadratic form in y.
        let mut qy = [[0.0; 2]; 2];
        for j in 0..2 {
            for l in 0..2 {
                let mut s = 0.0;
                for i in 0..2 {
                    for k in 0..2 {
                        s += g[(i * 2 + j, k * 2 + l)] * x[i] * x[k];
                    }
                }
                qy[j][l] = s;
            }
        }
        for y in &trig {
            let v = qy[0][0] * y[0] * y[0] + 2.0 * qy[0][1] * y[0] * y[1] + qy[1][1] * y[1] * y[1];
            best = best.min(v);
        }
    }
    // d/da and d/db of B along the torus are each bounded by 2 * sum |b|.
    let lip = 2.0 * form.coeffs().iter().map(|c| c.abs()).sum::<f64>();
    Ok(GridEstimate {
        value: best,
        error_bound: lip * h,
    })
}

/// Best value found by projected gradient descent on the bi-sphere from
/// `starts` seeded random points. Always an upper bound on `b_min`.
pub fn multistart_min_bisphere(form: &BiQuadraticForm, starts: usize, seed: u64) -> f64 {
    let (p, q) = (form.p(), form.q());
    let g = form.gram_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..starts.max(1) {
        let mut x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut y: Vec<f64> = (0..q).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut x);
        normalize(&mut y);
        best = best.min(descend(&g, p, q, &mut x, &mut y));
    }
    best
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    } else {
        v[0] = 1.0;
    }
}

fn value_and_grad(g: &DMatrix<f64>, p: usize, q: usize, x: &[f64], y: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let z: Vec<f64> = (0..p * q).map(|r| x[r / q] * y[r % q]).collect();
    let gz: Vec<f64> = (0..p * q).map(|r| (0..p * q).map(|c| g[(r, c)] * z[c]).sum()).collect();
    let val = z.iter().zip(&gz).map(|(a, b)| a * b).sum();
    let mut gx = vec![0.0; p];
    let mut gy = vec![0.0; q];
    for r in 0..p * q {
        gx[r / q] += 2.0 * gz[r] * y[r % q];
        gy[r % q] += 2.0 * gz[r] * x[r / q];
    }
    (val, gx, gy)
}

fn tangent(g: &mut [f64], x: &[f64]) {
    let c: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
    g.iter_mut().zip(x).for_each(|(a, b)| *a -= c * b);
}

fn descend(g: &DMatrix<f64>, p: usize, q: usize, x: &mut Vec<f64>, y: &mut Vec<f64>) -> f64 {
    let (mut f, mut gx, mut gy) = value_and_grad(g, p, q, x, y);
    let mut step = 1.0;
    for _ in 0..5000 {
        tangent(&mut gx, x);
        tangent(&mut gy, y);
        let gn2: f64 = gx.iter().chain(&gy).map(|a| a * a).sum();
        if gn2 < 1e-24 {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let mut xn: Vec<f64> = x.iter().zip(&gx).map(|(a, b)| a - step * b).collect();
            let mut yn: Vec<f64> = y.iter().zip(&gy).map(|(a, b)| a - step * b).collect();
            normalize(&mut xn);
            normalize(&mut yn);
            let (fnew, gxn, gyn) = value_and_grad(g, p, q, &xn, &yn);
            if fnew <= f - 1e-4 * step * gn2 {
                *x = xn;
                *y = yn;
                f = fnew;
                gx = gxn;
                gy = gyn;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    f
}
