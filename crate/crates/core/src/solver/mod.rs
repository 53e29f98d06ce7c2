//! Dual operator assembly and the cluster-based dual proximal gradient
//! iteration.
//!
//! Each agent `(i, j)` holds `lambda_ij = [mu; gamma; theta]` with blocks of
//! length `M`, `n_i M` and `B`. One iteration has two bulk-synchronous phases:
//! every agent takes a proximal gradient step on its block using only
//! time-`t` values, then every edge multiplier takes an ascent step on the
//! consensus violation of the new blocks.

mod assembly;
mod iterate;
mod metrics;
mod run;
mod state;

pub use assembly::{
    assemble, lipschitz_h, step_sizes, AgentLinks, AgentOperators, Assembly, BlockDims, ConsensusEdge,
    StepSizes, TauMode,
};
pub use iterate::{cdpg_iterate, grad_p, recover_primal};
pub use metrics::{
    consensus_differences, consensus_residual, dual_objective, lagrangian, metrics, primal_estimates, DualValue,
    Metrics,
};
pub use run::{
    cluster_means, prepare, run, ErgodicCheckpoint, RunOutcome, SolverConfig, SolverTrace, TraceRow, STOP_WINDOW,
};
pub use state::{DualState, EdgeMultipliers, ErgodicAverage};
