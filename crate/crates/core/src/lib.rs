//! Monotonicity-based inversion for the fractional Schrödinger equation
//! `(-Δ)^s u + q u = 0` on an interval, with Dirichlet data prescribed on the
//! exterior.
//!
//! The crate is organised bottom-up:
//!
//! * [`discretize`] builds the node lattice and the discrete fractional
//!   Laplacian (exact lattice kernel).
//! * [`forward`] assembles `A = L + h·diag(q)`, solves exterior-value
//!   problems and exposes the solution operator.
//! * [`dtn`] forms Dirichlet-to-Neumann matrices, their Fréchet derivative
//!   and the testing operators built from reference solutions.
//! * [`order`] implements Loewner-order tests and verifiers for the
//!   monotonicity inequalities.
//! * [`reconstruct`] contains the inversion algorithms: pixel-wise supremum
//!   recovery of the potential, support and inner-support detection, and
//!   localized potentials.
//!
//! [`Model`] bundles a grid and its operator and is the usual entry point.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretize;
pub mod dtn;
mod error;
pub mod forward;
mod linalg;
pub mod order;
mod par;
mod pipeline;
pub mod reconstruct;

pub use discretize::{FracOperator, Grid, GridSpec};
pub use dtn::{DtnMatrix, TestOperator};
pub use error::{Error, Result};
pub use forward::{ExteriorData, Potential, Solution, SolutionOperator, SystemMatrix};
pub use linalg::{frobenius, min_eigenvalue, symmetry_defect};
pub use order::{loewner_leq, LoewnerVerdict};
pub use par::Schedule;
pub use pipeline::Model;
pub use reconstruct::{PixelPartition, PotentialResult, ShapeResult};
