//! Distributed multi-consensus-block augmented-Lagrangian solver for
//! aggregative convex programs: a linear objective over a box with affine
//! equalities and inequalities and convex quadratic inequalities of the forms
//! `a(z) + c(z)^2` and `c(z)^2 - a(z) b(z)`.
//!
//! The N x M process grid is simulated deterministically in one process.
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F64` / `*F32`
//! aliases below name the common instantiations.

pub mod config;
pub mod consensus;
pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod family;
pub mod format;
pub mod oracle;
pub mod partition;
pub mod problem;
pub mod runtime;
pub mod scalar;
pub mod state;
pub mod subproblem;

pub use config::{DualDirection, ExecutionMode, InnerConfig, SolverConfig};
pub use error::{Error, Result};
pub use family::{Family, PerFamily};
pub use partition::{ConsensusPartition, ScalingRecord, SlackBounds, Strategy};
pub use problem::{Accum, AffineForm, AffineMap, Problem, QuadraticConstraint, QuadraticKind};
pub use runtime::{run, IterationTrace, ProcessTopology, RunOutput, Status};
pub use scalar::Real;
pub use state::{BlockState, GlobalState, Instance};
pub use subproblem::SubblockContext;

pub type ProblemF64 = Problem<f64>;
pub type ProblemF32 = Problem<f32>;
pub type SolverConfigF64 = SolverConfig<f64>;
pub type SolverConfigF32 = SolverConfig<f32>;
pub type RunOutputF64 = RunOutput<f64>;
pub type RunOutputF32 = RunOutput<f32>;
pub type GlobalStateF64 = GlobalState<f64>;
pub type GlobalStateF32 = GlobalState<f32>;
