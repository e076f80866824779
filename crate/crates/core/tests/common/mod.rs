//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use posmap_core::sdp::{ConeBlock, SdpProblem};
use posmap_core::{BiQuadraticForm, KroneckerMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

/// 4x4 Gram input of the first positivity example.
pub fn gram_example() -> BiQuadraticForm {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        0.0058, -0.1894, -0.2736, 0.3415,
        -0.1894, -0.1859, -0.1585, 0.0841,
        -0.2736, -0.1585, -0.0693, -0.0669,
        0.3415, 0.0841, -0.0669, 0.2494,
    ]);
    BiQuadraticForm::from_gram(2, 2, &m).unwrap()
}

/// The (2,2) form given by its monomial coefficients.
pub fn coefficient_example() -> BiQuadraticForm {
    BiQuadraticForm::from_omega_entries(
        2,
        2,
        [
            ([0, 0, 0, 0], 1.0),
            ([0, 0, 0, 1], 4.0),
            ([0, 1, 0, 1], 12.0),
            ([0, 0, 1, 0], 4.0),
            ([0, 0, 1, 1], 16.0),
            ([0, 1, 1, 1], 2.0),
            ([1, 0, 1, 0], 12.0),
            ([1, 0, 1, 1], 2.0),
            ([1, 1, 1, 1], 2.0),
        ],
    )
    .unwrap()
}

/// The (3,3) tensor example, given as the slices `f(:, :, k, l)`.
pub fn tensor_example() -> BiQuadraticForm {
    #[rustfmt::skip]
    let slices: [((usize, usize), [f64; 9]); 9] = [
        ((0, 0), [-0.9727, 0.3169, -0.3437, -0.6332, -0.7866, 0.4257, -0.3350, -0.9896, -0.4323]),
        ((1, 0), [-0.6332, -0.7866, 0.4257, 0.7387, 0.6873, -0.3248, -0.7986, -0.5988, -0.9485]),
        ((2, 0), [-0.3350, -0.9896, -0.4323, -0.7986, -0.5988, -0.9485, 0.5853, 0.5921, 0.6301]),
        ((0, 1), [0.3169, 0.6158, -0.0184, -0.7866, 0.0160, 0.0085, -0.9896, -0.6663, 0.2559]),
        ((1, 1), [-0.7866, 0.0160, 0.0085, 0.6873, 0.5160, -0.0216, -0.5988, 0.0411, 0.9857]),
        ((2, 1), [-0.9896, -0.6663, 0.2559, -0.5988, 0.0411, 0.9857, 0.5921, -0.2907, -0.3881]),
        ((0, 2), [-0.3437, -0.0184, 0.5649, 0.4257, 0.0085, -0.1439, -0.4323, 0.2559, 0.6162]),
        ((1, 2), [0.4257, 0.0085, -0.1439, -0.3248, -0.0216, -0.0037, -0.9485, 0.9857, -0.7734]),
        ((2, 2), [-0.4323, 0.2559, 0.6162, -0.9485, 0.9857, -0.7734, 0.6301, -0.3881, -0.8526]),
    ];
    let mut f = vec![0.0; 81];
    for ((k, l), s) in slices {
        for i in 0..3 {
            for j in 0..3 {
                f[((i * 3 + j) * 3 + k) * 3 + l] = s[i * 3 + j];
            }
        }
    }
    BiQuadraticForm::from_full_tensor(3, 3, &f).unwrap()
}

/// `sum x_i^2 y_i^2 + 2 sum x_i^2 y_{i+1}^2 - 2 sum_{a<b} x_a x_b y_a y_b`,
/// indices cyclic over three.
pub fn cyclic_example() -> BiQuadraticForm {
    let mut e = Vec::new();
    for i in 0..3 {
        e.push(([i, i, i, i], 1.0));
    }
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        e.push(([i, j, i, j], 2.0));
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        e.push(([a, a, b, b], -2.0));
    }
    BiQuadraticForm::from_omega_entries(3, 3, e).unwrap()
}

/// Coefficient `1 / (i + j + k + l + 4)` (1-based indices summing to
/// `i + j + k + l`) on every monomial of the (4,4) space.
pub fn harmonic_example() -> BiQuadraticForm {
    let mut e = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            for k in i..4 {
                for l in j..4 {
                    e.push(([i, j, k, l], 1.0 / (i + j + k + l + 4) as f64));
                }
            }
        }
    }
    BiQuadraticForm::from_omega_entries(4, 4, e).unwrap()
}

/// The 4x4 matrix with the 0.4691/0.1203 pattern; it breaks the partial
/// symmetry, so only the entries indexed by Omega are read.
pub fn small_entangled() -> KroneckerMatrix {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        0.4691, 0.1203, -0.1203, 0.4691,
        0.1203, 0.0309, -0.0309, 0.1203,
        -0.1203, -0.0309, 0.0309, -0.1203,
        0.4691, 0.1203, -0.1203, 0.4691,
    ]);
    KroneckerMatrix::from_omega_entries_of(2, 2, &m).unwrap()
}

pub fn unit3(i: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m[(i, i)] = 1.0;
    m
}

fn sym3(a: usize, b: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m[(a, b)] = 1.0;
    m[(b, a)] = 1.0;
    m
}

/// `A1 + 2 A2 - A3 / 2` over (3,3).
pub fn cyclic_matrix() -> KroneckerMatrix {
    let a1 = unit3(0).kronecker(&unit3(0)) + unit3(1).kronecker(&unit3(1)) + unit3(2).kronecker(&unit3(2));
    let a2 = unit3(0).kronecker(&unit3(1)) + unit3(1).kronecker(&unit3(2)) + unit3(2).kronecker(&unit3(0));
    let a3 = sym3(0, 1).kronecker(&sym3(0, 1)) + sym3(0, 2).kronecker(&sym3(0, 2)) + sym3(1, 2).kronecker(&sym3(1, 2));
    KroneckerMatrix::new(3, 3, a1 + a2 * 2.0 - a3 * 0.5).unwrap()
}

/// Entry `(i + j + k + l)` with 1-based indices over (4,4).
pub fn index_sum_matrix() -> KroneckerMatrix {
    KroneckerMatrix::new(
        4,
        4,
        DMatrix::from_fn(16, 16, |r, c| (r / 4 + r % 4 + c / 4 + c % 4 + 4) as f64),
    )
    .unwrap()
}

/// Sum of two Kronecker products of PSD matrices over (2,3).
pub fn two_term_sum() -> KroneckerMatrix {
    let b1 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
    let c1 = DMatrix::from_row_slice(3, 3, &[3.0, -1.0, -1.0, -1.0, 3.0, -1.0, -1.0, -1.0, 3.0]);
    let b2 = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0]);
    let c2 = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, -1.0, 2.0, 4.0, 2.0, -1.0, 2.0, 4.0]);
    KroneckerMatrix::new(2, 3, b1.kronecker(&c1) + b2.kronecker(&c2)).unwrap()
}

/// `I_3 (x) I_3` plus three rank-one terms.
pub fn identity_plus_cycle() -> KroneckerMatrix {
    let m = DMatrix::identity(9, 9)
        + unit3(0).kronecker(&unit3(1))
        + unit3(1).kronecker(&unit3(2))
        + unit3(2).kronecker(&unit3(0));
    KroneckerMatrix::new(3, 3, m).unwrap()
}

pub fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random factor pairs `(a_i, b_i)` for a planted separable matrix.
pub fn planted_pairs(p: usize, q: usize, atoms: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..atoms)
        .map(|_| (gaussian_vec(p, &mut rng), gaussian_vec(q, &mut rng)))
        .collect()
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    (&a + a.transpose()) * 0.5
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    a.qr().q()
}

/// Planted complementary pair: X* and S* share eigenvectors with
/// complementary supports; b and C are derived from them. Returns the
/// problem and its optimal value.
pub fn planted_sdp(seed: u64) -> (SdpProblem, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sides = [Uniform::new_inclusive(2usize, 6).unwrap().sample(&mut rng), 3, 1];
    let cones: Vec<ConeBlock> = vec![ConeBlock::Psd(sides[0]), ConeBlock::Psd(sides[1]), ConeBlock::NonNeg(4)];
    let mut xs = Vec::new();
    let mut ss = Vec::new();
    for cone in &cones {
        let n = cone.side();
        let qm = match cone {
            ConeBlock::Psd(_) => random_orthogonal(n, &mut rng),
            ConeBlock::NonNeg(_) => DMatrix::identity(n, n),
        };
        let rank = Uniform::new_inclusive(1usize, n).unwrap().sample(&mut rng);
        let mut xd = DVector::zeros(n);
        let mut sd = DVector::zeros(n);
        for i in 0..n {
            let v: f64 = Uniform::new(0.5, 2.0).unwrap().sample(&mut rng);
            if i < rank {
                xd[i] = v;
            } else {
                sd[i] = v;
            }
        }
        xs.push(&qm * DMatrix::from_diagonal(&xd) * qm.transpose());
        ss.push(&qm * DMatrix::from_diagonal(&sd) * qm.transpose());
    }
    let m = 8;
    let mut constraints = Vec::new();
    let mut cost: Vec<DMatrix<f64>> = ss.clone();
    for _ in 0..m {
        let a: Vec<DMatrix<f64>> = cones
            .iter()
            .map(|c| match c {
                ConeBlock::Psd(n) => random_symmetric(*n, &mut rng),
                ConeBlock::NonNeg(n) => {
                    DMatrix::from_diagonal(&DVector::from_fn(*n, |_, _| StandardNormal.sample(&mut rng)))
                }
            })
            .collect();
        let b: f64 = a.iter().zip(&xs).map(|(ai, xi)| ai.dot(xi)).sum();
        let y: f64 = StandardNormal.sample(&mut rng);
        for (c, ai) in cost.iter_mut().zip(&a) {
            *c += ai * y;
        }
        constraints.push((a, b));
    }
    let value: f64 = cost.iter().zip(&xs).map(|(c, x)| c.dot(x)).sum();
    (
        SdpProblem::from_primal_standard(&cones, &cost, &constraints).unwrap(),
        value,
    )
}

/// `X >= 0` with `tr X = -1`.
pub fn trivially_infeasible_sdp() -> SdpProblem {
    SdpProblem::from_primal_standard(
        &[ConeBlock::Psd(2)],
        &[DMatrix::zeros(2, 2)],
        &[(vec![DMatrix::identity(2, 2)], -1.0)],
    )
    .unwrap()
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn sign_normalized(v: &[f64]) -> Vec<f64> {
    let big = v
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = if big < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| s * x).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
