//! Spectral toolkit for low-dimensional stochastic flows viewed as operators
//! on the exterior algebra of phase space.

pub mod acceptance;
pub mod config;
pub mod cpd;
pub mod error;
pub mod exterior;
pub mod flow;
pub mod forms;
pub mod grid;
pub mod hamiltonian;
pub mod linsolve;
pub mod nicolai;
pub mod numeric;
pub mod par;
pub mod report;
pub mod runner;
pub mod sde;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use flow::{builtin_flow, BuiltinFlow, FlowField, FlowSource};
pub use forms::{ghost_number, FormField};
pub use grid::{AxisSpec, Grid, GridSpec, Metric, Support, Topology};
pub use par::Execution;
pub use hamiltonian::{build_current, build_hamiltonian, evolve, HamiltonianSet};
