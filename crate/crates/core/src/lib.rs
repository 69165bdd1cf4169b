//! Inertial forward-backward splitting for composite convex problems of the
//! form `F(x) = f(x) + rho ||x||_1`, built around l1-regularized least
//! squares.
//!
//! The crate ships:
//!
//! - the inertial forward-backward iteration (ISTA and FISTA as special
//!   cases) and the heavy-ball style splitting variant, with full
//!   per-iteration traces and discrete-energy bookkeeping ([`engine`]);
//! - momentum/step-size policies (Beck-Teboulle and Chambolle-Dossal
//!   recursions, capped variants, adaptive restart, a switch to the locally
//!   optimal constant momentum) plus hypothesis validation ([`schedule`]);
//! - sparse-optimization diagnostics: duality-gap certified reference
//!   solves, boundary-set classification, finite manifold-identification
//!   detection with explicit iteration bounds, local linear-rate fitting,
//!   and oscillation statistics ([`analysis`]);
//! - deterministic instance generation and self-describing on-disk formats
//!   ([`model`], [`io`]).
//!
//! Core numerics are generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the aliases below pin the common double-precision
//! configuration.

pub mod analysis;
pub mod engine;
pub mod io;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod rng;
pub mod scalar;
pub mod schedule;

pub use scalar::Scalar;

/// Double-precision aliases for the usual configuration.
pub type Matrix64 = linalg::DenseMatrix<f64>;
pub type Instance64 = model::L1LsInstance<f64>;
pub type ScheduleSpec64 = schedule::ScheduleSpec<f64>;
pub type Trace64 = engine::SolverTrace<f64>;
pub type Reference64 = analysis::ReferenceSolution<f64>;
