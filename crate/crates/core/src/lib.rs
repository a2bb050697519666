//! String-net numerics: unitary fusion categories, planar diagram reduction,
//! Levin-Wen ground states on small honeycomb lattices, and the entropy-based
//! checks of the entanglement bootstrap.

pub mod diagrams;
pub mod eb_axioms;
pub mod error;
pub mod fusion_category;
pub mod hamiltonian;
pub mod lattice;
pub mod linalg;
pub mod par;
pub mod quantum_info;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
