//! Positivity of linear maps between symmetric matrix spaces and separability
//! of matrices in the Kronecker subspace, both decided through Lasserre-type
//! moment relaxations solved by a built-in interior-point SDP solver.
//!
//! The two entry points are [`positivity::check_positivity`] and
//! [`separability::check_separability`]. Everything else is the machinery
//! they share: monomial bookkeeping, truncated moment sequences, the SDP
//! solver, and atom extraction from flat moment matrices.

pub mod error;
pub mod extraction;
pub mod forms;
pub mod moments;
pub mod monomials;
pub mod oracle;
pub mod poly;
pub mod positivity;
mod relaxation;
pub mod sdp;
pub mod separability;

pub use error::{Error, Result};
pub use extraction::{extract_atoms, extract_atoms_at_gap};
pub use forms::{pairing, Atom, AtomicMeasure, BiQuadraticForm, KroneckerMatrix, Omega};
pub use moments::{FlatnessMode, FlatnessReport, FlatnessTolerances, RankRule, Tms};
pub use monomials::{Monomial, MonomialBasis};
pub use poly::Poly;
pub use positivity::{check_positivity, PositivityOptions, PositivityReport, PositivityStatus};
pub use sdp::{SdpOptions, SdpOutcome, SdpProblem, SdpStatus};
pub use separability::{check_separability, SeparabilityOptions, SeparabilityReport, SeparabilityStatus};
