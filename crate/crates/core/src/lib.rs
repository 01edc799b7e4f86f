//! Constrained Procrustes problems solved as rank-constrained semidefinite
//! programs.
//!
//! The crate is layered bottom-up:
//!
//! - [`matcore`]: dense symmetric eigen utilities, ε-rank, Schur complement checks.
//! - [`sdp`]: a dense homogeneous self-dual interior-point solver for block
//!   standard-form conic programs (PSD, nonnegative and free blocks).
//! - [`reformulate`]: linear maps `L(X)`, the four matrix norms and their
//!   epigraph programs.
//! - [`constraints`]: feasible-set encodings (orthogonal, oblique, projection,
//!   quadratic, linear, ...) as PSD blocks plus a rank target.
//! - [`rankopt`]: trace, log-det and convex-iteration rank heuristics and the
//!   rank-constrained feasibility oracle.
//! - [`bisect`]: bisection on the objective level over feasibility queries.
//! - [`apps`]: instance generators, permutation search, graph isomorphism and
//!   orthogonal least squares regression.

pub mod apps;
pub mod bisect;
pub mod constraints;
pub mod error;
pub mod formulation;
pub mod matcore;
pub mod rankopt;
pub mod reformulate;
pub mod sdp;

pub use error::{Error, Result};
pub use formulation::Formulation;
