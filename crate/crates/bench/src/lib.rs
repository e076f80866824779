//! Fixed problem instances shared by the benchmarks.

use nalgebra::DMatrix;
use posmap_core::{BiQuadraticForm, KroneckerMatrix};

/// A (2,2) form with a single negative minimizer.
pub fn small_form() -> BiQuadraticForm {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        0.0058, -0.1894, -0.2736, 0.3415,
        -0.1894, -0.1859, -0.1585, 0.0841,
        -0.2736, -0.1585, -0.0693, -0.0669,
        0.3415, 0.0841, -0.0669, 0.2494,
    ]);
    BiQuadraticForm::from_gram(2, 2, &m).expect("valid gram matrix")
}

/// `(x^T x)(y^T y)` over `(p, q)`.
pub fn norms_form(p: usize, q: usize) -> BiQuadraticForm {
    BiQuadraticForm::product_of_norms(p, q).expect("valid dimensions")
}

/// A (2,2) matrix outside the separable cone, read from its Omega entries.
pub fn entangled_2x2() -> KroneckerMatrix {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        0.4691, 0.1203, -0.1203, 0.4691,
        0.1203, 0.0309, -0.0309, 0.1203,
        -0.1203, -0.0309, 0.0309, -0.1203,
        0.4691, 0.1203, -0.1203, 0.4691,
    ]);
    KroneckerMatrix::from_omega_entries_of(2, 2, &m).expect("valid matrix")
}

/// Two fixed product terms over (2,2).
pub fn separable_2x2() -> KroneckerMatrix {
    KroneckerMatrix::from_factor_pairs(
        2,
        2,
        &[(vec![1.0, 0.5], vec![0.3, 1.0]), (vec![0.2, 1.0], vec![1.0, -0.4])],
    )
}
