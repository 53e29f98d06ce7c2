use nalgebra::DVector;
use rayon::prelude::*;
use rayon::ThreadPool;

use super::assembly::{AgentOperators, Assembly, StepSizes};
use super::state::{DualState, EdgeMultipliers};
use crate::error::{Error, Result};
use crate::functions::{Proximal, SmoothConvex, SmoothTerm};
use crate::problem::{ConstraintMode, Problem};

/// `grad p_ij(lambda) = H^T argmax_u ((H lambda)^T u - f(u)) + E^T`.
pub fn grad_p(agent: &AgentOperators, f: &SmoothTerm, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let v = &agent.h * lambda;
    let u = f.conjugate_argmax(v.as_slice())?;
    Ok(agent.h.tr_mul(&DVector::from_vec(u)) + &agent.e)
}

/// `y_ij = argmin_y f_ij(y) + (mu + Lblk^T gamma + Ablk^T theta)^T y`.
pub fn recover_primal(agent: &AgentOperators, f: &SmoothTerm, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let v = &agent.h * lambda;
    Ok(DVector::from_vec(f.conjugate_argmax(v.as_slice())?))
}

/// One bulk-synchronous CDPG step. Phase 1 updates every agent's dual block
/// from time-`t` values only; phase 2 updates the edge multipliers from the
/// new dual blocks.
pub fn cdpg_iterate(
    problem: &Problem,
    assembly: &Assembly,
    steps: &StepSizes,
    state: &DualState,
    omega: &EdgeMultipliers,
    pool: Option<&ThreadPool>,
) -> Result<(DualState, EdgeMultipliers)> {
    let n = assembly.n_agents();
    let mode = problem.mode();
    let agent_step = |a: usize| update_agent(a, problem, assembly, steps, state, omega, mode);
    let lambda: Vec<DVector<f64>> = match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(agent_step).collect::<Result<_>>())?,
        None => (0..n).map(agent_step).collect::<Result<_>>()?,
    };
    let next = DualState { lambda, iteration: state.iteration + 1 };
    check_finite(next.lambda.iter(), next.iteration, "dual iterate")?;

    let multipliers = update_edges(assembly, &next, omega);
    check_finite(multipliers.xi.iter().chain(&multipliers.zeta), next.iteration, "edge multiplier")?;
    Ok((next, multipliers))
}

fn update_agent(
    a: usize,
    problem: &Problem,
    assembly: &Assembly,
    steps: &StepSizes,
    state: &DualState,
    omega: &EdgeMultipliers,
    mode: ConstraintMode,
) -> Result<DVector<f64>> {
    let op = &assembly.agents[a];
    let agent = problem.agent(op.cluster, op.index);
    let links = &assembly.links[a];
    let lam = &state.lambda[a];
    let dims = op.dims;
    let c = steps.c[a];
    let grad = grad_p(op, &agent.smooth, lam)?;
    let mut next = DVector::zeros(dims.len());

    let (mr, gr, tr) = (dims.mu(), dims.gamma(), dims.theta());
    let rho: Vec<f64> = mr.clone().map(|k| lam[k] - c * grad[k]).collect();
    let mu = agent.nonsmooth.prox_conjugate(&rho, c);
    next.rows_mut(mr.start, mr.len()).copy_from_slice(&mu);

    let gamma = lam.rows(gr.start, gr.len());
    let mut dir = grad.rows(gr.start, gr.len()).into_owned();
    for &e in &links.intra_out {
        let edge = &assembly.intra_edges[e];
        let other = state.lambda[edge.other].rows(gr.start, gr.len());
        dir -= &omega.xi[e];
        dir += (gamma - other) * edge.weight;
    }
    for &e in &links.intra_in {
        let edge = &assembly.intra_edges[e];
        let owner = state.lambda[edge.owner].rows(gr.start, gr.len());
        dir += &omega.xi[e];
        dir += (gamma - owner) * edge.weight;
    }
    next.rows_mut(gr.start, gr.len()).copy_from(&(gamma - dir * c));

    let theta = lam.rows(tr.start, tr.len());
    let mut dir = grad.rows(tr.start, tr.len()).into_owned();
    for &e in &links.global_out {
        let edge = &assembly.global_edges[e];
        let other = theta_of(assembly, state, edge.other);
        dir -= &omega.zeta[e];
        dir += (theta - other) * edge.weight;
    }
    for &e in &links.global_in {
        let edge = &assembly.global_edges[e];
        let owner = theta_of(assembly, state, edge.owner);
        dir += &omega.zeta[e];
        dir += (theta - owner) * edge.weight;
    }
    let mut theta_next = theta - dir * c;
    if mode == ConstraintMode::Inequality {
        theta_next.apply(|x| *x = x.max(0.0));
    }
    next.rows_mut(tr.start, tr.len()).copy_from(&theta_next);
    Ok(next)
}

fn theta_of<'a>(assembly: &Assembly, state: &'a DualState, a: usize) -> nalgebra::DVectorView<'a, f64> {
    let t = assembly.agents[a].dims.theta();
    state.lambda[a].rows(t.start, t.len())
}

fn update_edges(assembly: &Assembly, next: &DualState, omega: &EdgeMultipliers) -> EdgeMultipliers {
    let xi = assembly
        .intra_edges
        .iter()
        .zip(&omega.xi)
        .map(|(e, xi)| {
            let g = assembly.agents[e.owner].dims.gamma();
            let diff = next.lambda[e.other].rows(g.start, g.len()) - next.lambda[e.owner].rows(g.start, g.len());
            xi + diff * e.weight
        })
        .collect();
    let zeta = assembly
        .global_edges
        .iter()
        .zip(&omega.zeta)
        .map(|(e, zeta)| {
            let diff = theta_of(assembly, next, e.other) - theta_of(assembly, next, e.owner);
            zeta + diff * e.weight
        })
        .collect();
    EdgeMultipliers { xi, zeta }
}

fn check_finite<'a>(
    mut blocks: impl Iterator<Item = &'a DVector<f64>>,
    iteration: usize,
    what: &str,
) -> Result<()> {
    if blocks.all(|b| b.iter().all(|x| x.is_finite())) {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, what: what.into() })
    }
}
