//! Finite-dimensional linear algebra used by the spectral modules.

pub mod dense;
pub mod sym;
pub mod tridiag;

pub use dense::{Matrix, SymmetricEigen};
pub use sym::{FactorBasis, PsdFactor, SymMatrix};
pub use tridiag::{ShiftedLu, SturmCount, Tridiagonal};
