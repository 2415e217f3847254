//! Eigenvalue counting in spectral gaps of perturbed periodic Jacobi matrices.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what the command line uses.

// `!(x > 0)` style checks are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod birman_schwinger;
pub mod cli;
pub mod config;
pub mod error;
pub mod green;
pub mod inertia;
pub mod instances;
pub mod linalg;
pub mod ltsums;
pub mod operators;
pub mod quadrature;
pub mod scalar;
pub mod splitting;

pub use bands::{band_edge_solution, compute_bands, discriminant, floquet_decay_rate, GapComponent};
pub use birman_schwinger::{bs_decompose, bs_operator, gap_bound, verify_principle, BoundVariant};
pub use error::{Error, Result};
pub use green::{scan_green_bounds, Edge, GreenMethod};
pub use inertia::{count_in_interval, dense_count_ge, eigs_in_interval};
pub use ltsums::{check_sum_identity, convergence_experiment, gap_power_sum, ExperimentClass, SumFunction, Verdict};
pub use operators::{make_perturbation, PerturbationSpec, Profile, SiteShift, Window};
pub use scalar::Scalar;
pub use splitting::split;

pub type PeriodicBackground = operators::PeriodicBackground<f64>;
pub type Perturbation = operators::Perturbation<f64>;
pub type JacobiOperator = operators::JacobiOperator<f64>;
pub type TruncatedMatrix = operators::TruncatedMatrix<f64>;
pub type BandSet = bands::BandSet<f64>;
pub type SplitPerturbation = splitting::SplitPerturbation<f64>;
pub type BSOperator = birman_schwinger::BSOperator<f64>;
pub type BoundReport = birman_schwinger::BoundReport<f64>;
pub type GapReport = ltsums::GapReport<f64>;
pub type GreenSolver = green::GreenSolver<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type SymMatrix = linalg::SymMatrix<f64>;
