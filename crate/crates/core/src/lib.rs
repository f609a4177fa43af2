//! Primal-dual evolutionary dynamics for population games with convex
//! inequality constraints.
//!
//! A primal population plays the game `f(x)`; a dual population, whose
//! strategies are the constraints plus a null strategy, prices constraint
//! violations. Both populations revise strategies with an impartial
//! pairwise-comparison protocol (Smith by default). For concave potential
//! games (or stable games) the rest points of the coupled system are the
//! saddle points of the Lagrangian, and with enough dual mass they solve
//! the constrained potential maximization.

pub mod cli;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod games;
pub mod io;
pub mod lyapunov;
pub mod quadrature;
pub mod state;

pub use dynamics::{integrate, Dynamics, Integrator, Protocol, SimParams, Trajectory};
pub use equilibrium::{in_equilibria_set, EquilibriumReport, SlaterPoint, Verdict};
pub use error::{Error, Result};
pub use game::{ConstraintSpec, FitnessRule, GameSpec};
pub use state::{DualState, PrimalState, SIMPLEX_TOL};
