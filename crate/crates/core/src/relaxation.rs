//! Shared assembly of moment relaxations over the bi-sphere:
//! minimize a linear objective in `w` subject to linear equalities,
//! truncated-ideal rows for `h`, `M_k(w)` PSD and `L_g^{(k)}(w)` PSD.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::moments::{ideal_equality_rows, reduce_equalities, LinearFunctional, LocalizingMap};
use crate::monomials::MonomialBasis;
use crate::poly::Poly;
use crate::sdp::{AffineBlock, SdpProblem};

#[derive(Debug, Clone)]
pub(crate) struct MomentRelaxation {
    pub basis: Arc<MonomialBasis>,
    pub problem: SdpProblem,
}

pub(crate) struct RelaxationSpec<'a> {
    pub p: usize,
    pub q: usize,
    pub k: usize,
    pub objective: &'a Poly,
    pub fixed: Vec<(LinearFunctional, f64)>,
    pub h: &'a [Poly],
    pub g: &'a [Poly],
}

pub(crate) fn build(spec: RelaxationSpec) -> Result<MomentRelaxation> {
    let basis = Arc::new(MonomialBasis::new(spec.p, spec.q, 2 * spec.k)?);
    if spec.objective.degree() > 2 * spec.k {
        return Err(Error::Structural(
            "objective degree exceeds the relaxation order".into(),
        ));
    }
    let objective = spec.objective.to_dense(&basis)?;
    let (mut rows, mut rhs): (Vec<_>, Vec<_>) = spec.fixed.into_iter().unzip();
    for h in spec.h {
        let r = ideal_equality_rows(h, &basis)?;
        rhs.extend(std::iter::repeat_n(0.0, r.len()));
        rows.extend(r);
    }
    let reduced = reduce_equalities(rows, rhs, basis.len())?;
    let mut blocks = vec![AffineBlock::from_localizing(&LocalizingMap::new(
        &basis,
        &Poly::constant(basis.nvars(), 1.0),
        spec.k,
    )?)];
    for g in spec.g {
        blocks.push(AffineBlock::from_localizing(&LocalizingMap::new(&basis, g, spec.k)?));
    }
    let problem = SdpProblem::new(objective, reduced.rows, reduced.rhs, blocks)?;
    Ok(MomentRelaxation { basis, problem })
}

/// The bi-sphere equalities `x^T x - 1`, `y^T y - 1`.
pub(crate) fn sphere_polys(p: usize, q: usize) -> Vec<Poly> {
    vec![Poly::sphere(p + q, 0, p), Poly::sphere(p + q, p, q)]
}

/// The sign-fixing inequalities `1^T x >= 0`, `1^T y >= 0`.
pub(crate) fn orthant_polys(p: usize, q: usize) -> Vec<Poly> {
    vec![Poly::ones_sum(p + q, 0, p), Poly::ones_sum(p + q, p, q)]
}
