pub mod cli;
pub mod error;
pub mod functions;
pub mod graph;
pub mod oracle;
pub mod problem;
pub mod scenarios;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use problem::{AgentProblem, ConstraintMode, Coupling, Problem, Weights};
