//! Perturbative treatment of a small center-line detuning.
//!
//! The detuning-independent tables I, J1, J2, J3 are computed once per gate
//! and cutoff; every observable is then a polynomial in λ̃.

pub mod predict;
pub mod quadrature;
pub mod states;
pub mod table;

pub use predict::*;
pub use quadrature::{compute_i, compute_j, FirstOrderQuadrature, QuadratureConfig, SecondOrderQuadrature};
pub use states::*;
pub use table::{CoefficientTable, Provenance, TableDiagnostics};
