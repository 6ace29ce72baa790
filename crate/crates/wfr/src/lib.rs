//! Constrained unbalanced dynamic optimal transport in one space dimension.
//!
//! Given two nonnegative measures on the unit interval or circle and an
//! affine path constraint `∫ H(t,·) dρ_t = F(t)`, this crate computes the
//! constrained Wasserstein-Fisher-Rao energy, a minimizing space-time triple
//! `(ρ, ω, ζ)` of density, momentum and source, and checks first-order
//! optimality certificates for candidate solutions.
//!
//! The pieces:
//!
//! * [`grid`] — staggered/centered discretization and the discrete
//!   continuity operator;
//! * [`measures`] — discrete measures, constraint specifications and
//!   feasibility checks;
//! * [`energy`] — the infinitesimal cost, the paraboloid it is conjugate to,
//!   and proximal/projection kernels;
//! * [`paths`] — closed-form finite-energy path constructors used as
//!   initializers and oracles;
//! * [`solver`] — Douglas-Rachford splitting over the staggered/centered
//!   pair with a joint affine projection;
//! * [`certify`] — optimality certificates and geodesic-equation residuals;
//! * [`config`] — the JSON run configuration shared by the CLI and the
//!   Python bindings.

pub mod certify;
pub mod config;
pub mod energy;
pub mod error;
pub mod grid;
pub mod measures;
pub mod numerics;
pub mod paths;
pub mod solver;

pub use error::WfrError;
pub use grid::{build_grids, DomainKind, SpatialGrid, TimeGrid};
pub use measures::{ConstraintSpec, DiscreteMeasure, FeasibilityReport};
pub use paths::PathTriple;
pub use solver::{Problem, Solution, SolverParams};
