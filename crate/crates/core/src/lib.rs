//! Three-phase power flow and infeasibility analysis on the equivalent
//! circuit formulation.
//!
//! A [`NetworkModel`] is validated and stamped into a per-unit [`Circuit`].
//! The [`engine`] solves either the plain power flow or one of two
//! optimization problems that add slack current sources ("infeasibility
//! currents") at chosen node-phases and minimize their L2 or L1 norm. Where
//! power flow has no solution, the nonzero sources point at the weak parts of
//! the network.

pub mod analysis;
pub mod engine;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod stamp;
pub mod synthetic;

pub use analysis::{NodeSubset, Objective, SolutionReport};
pub use engine::{Formulation, Problem, SolverSettings};
pub use model::{Branch, BranchKind, BranchStatus, Bus, BusKind, Load, NetworkModel, Phase, PhaseMatrix, PhaseSet, ShuntCap};
pub use stamp::Circuit;
