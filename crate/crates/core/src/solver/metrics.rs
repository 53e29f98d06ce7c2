use nalgebra::DVector;

use super::assembly::Assembly;
use super::iterate::recover_primal;
use super::state::{DualState, EdgeMultipliers};
use crate::error::Result;
use crate::functions::{Proximal, SmoothConvex, INDICATOR_TOL};
use crate::problem::{ConstraintMode, Problem};

/// Blocks of `Z lambda`, intra edges first, in the row order of `Z`.
pub fn consensus_differences(assembly: &Assembly, state: &DualState) -> Vec<DVector<f64>> {
    let intra = assembly.intra_edges.iter().map(|e| {
        let g = assembly.agents[e.owner].dims.gamma();
        state.lambda[e.other].rows(g.start, g.len()) - state.lambda[e.owner].rows(g.start, g.len())
    });
    let global = assembly.global_edges.iter().map(|e| {
        let (to, tw) = (assembly.agents[e.other].dims.theta(), assembly.agents[e.owner].dims.theta());
        state.lambda[e.other].rows(to.start, to.len()) - state.lambda[e.owner].rows(tw.start, tw.len())
    });
    intra.chain(global).collect()
}

/// `||Z lambda||`.
pub fn consensus_residual(assembly: &Assembly, state: &DualState) -> f64 {
    consensus_differences(assembly, state).iter().map(|d| d.norm_squared()).sum::<f64>().sqrt()
}

/// Value of the dual objective `Phi = P + Q` with the indicator flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualValue {
    pub smooth: f64,
    pub nonsmooth: f64,
    /// Set when an indicator in `Q` was violated beyond tolerance; its
    /// contribution is then left out of `nonsmooth`.
    pub indicator_violated: bool,
}

impl DualValue {
    pub fn total(&self) -> f64 {
        self.smooth + self.nonsmooth
    }
}

/// `P(lambda) = sum f*(H lambda) + E lambda` and
/// `Q(lambda) = sum g*(mu) + indicator(theta >= 0)`.
pub fn dual_objective(problem: &Problem, assembly: &Assembly, state: &DualState) -> Result<DualValue> {
    let mut smooth = 0.0;
    let mut nonsmooth = 0.0;
    let mut violated = false;
    for (op, lam) in assembly.agents.iter().zip(&state.lambda) {
        let agent = problem.agent(op.cluster, op.index);
        let v = &op.h * lam;
        smooth += agent.smooth.conjugate(v.as_slice())? + op.e.dot(lam);
        let mu = lam.rows(0, op.dims.m);
        let g = agent.nonsmooth.conjugate_eval(mu.as_slice());
        if g.is_finite() {
            nonsmooth += g;
        } else {
            violated = true;
        }
        if problem.mode() == ConstraintMode::Inequality {
            let t = op.dims.theta();
            violated |= lam.rows(t.start, t.len()).iter().any(|&x| x < -INDICATOR_TOL);
        }
    }
    Ok(DualValue { smooth, nonsmooth, indicator_violated: violated })
}

/// Penalized dual Lagrangian
/// `P + Q + 1/2 ||Z lambda||^2_D + omega^T Z lambda`.
pub fn lagrangian(
    problem: &Problem,
    assembly: &Assembly,
    state: &DualState,
    omega: &EdgeMultipliers,
) -> Result<(f64, bool)> {
    let phi = dual_objective(problem, assembly, state)?;
    let diffs = consensus_differences(assembly, state);
    let edges = assembly.intra_edges.iter().chain(&assembly.global_edges);
    let mults = omega.xi.iter().chain(&omega.zeta);
    let coupling: f64 = diffs
        .iter()
        .zip(edges.zip(mults))
        .map(|(d, (e, w))| 0.5 * e.weight * d.norm_squared() + w.dot(d))
        .sum();
    Ok((phi.total() + coupling, phi.indicator_violated))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub consensus_residual: f64,
    pub lagrangian: f64,
    /// `|(L - ref) / ref|`, or `|L - ref|` when the reference is zero.
    pub rel_error: Option<f64>,
    pub rel_error_is_absolute: bool,
    pub indicator_violated: bool,
    /// Recovered `y_ij`, relabeled order.
    pub primal: Vec<DVector<f64>>,
}

/// `reference` is the optimal value of the dual Lagrangian, i.e. minus the
/// optimal primal objective in the minimization convention.
pub fn metrics(
    problem: &Problem,
    assembly: &Assembly,
    state: &DualState,
    omega: &EdgeMultipliers,
    reference: Option<f64>,
) -> Result<Metrics> {
    let (lag, violated) = lagrangian(problem, assembly, state, omega)?;
    let (rel_error, absolute) = match reference {
        Some(r) if r == 0.0 => (Some((lag - r).abs()), true),
        Some(r) => (Some(((lag - r) / r).abs()), false),
        None => (None, false),
    };
    Ok(Metrics {
        consensus_residual: consensus_residual(assembly, state),
        lagrangian: lag,
        rel_error,
        rel_error_is_absolute: absolute,
        indicator_violated: violated,
        primal: primal_estimates(problem, assembly, state)?,
    })
}

pub fn primal_estimates(problem: &Problem, assembly: &Assembly, state: &DualState) -> Result<Vec<DVector<f64>>> {
    assembly
        .agents
        .iter()
        .zip(&state.lambda)
        .map(|(op, lam)| recover_primal(op, &problem.agent(op.cluster, op.index).smooth, lam))
        .collect()
}
