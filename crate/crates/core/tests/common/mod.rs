#![allow(dead_code)]

use std::collections::BTreeMap;

use cdpg::functions::{FunctionSpec, Proximal, SmoothConvex};
use cdpg::scenarios::{agent_key, ClusterSpec, CouplingSpec, NetworkSpec, ScenarioSpec, WeightsSpec};
use cdpg::solver::{DualState, EdgeMultipliers, StepSizes};
use cdpg::{ConstraintMode, Problem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stacked operators of the compact dual problem, built from incidence
/// matrices and Kronecker products without the solver's assembly.
pub struct DenseOperators {
    /// Per agent `(offset, M, n_i M, B)` in relabeled order.
    pub blocks: Vec<(usize, usize, usize, usize)>,
    pub dual_len: usize,
    /// Block diagonal of the `H_ij`.
    pub h: DMatrix<f64>,
    pub e: DVector<f64>,
    pub z: DMatrix<f64>,
    /// Diagonal of `D`.
    pub d: DVector<f64>,
}

pub fn dense_operators(problem: &Problem) -> DenseOperators {
    let net = problem.network();
    let (m, b) = (net.block_dim(), net.coupling_rows());
    let coupling = problem.coupling();
    let weights = problem.weights();

    let mut blocks = Vec::new();
    let mut off = 0;
    for (i, c) in net.clusters().iter().enumerate() {
        for _ in 0..c.n_agents() {
            let len = m + c.n_agents() * m + b;
            blocks.push((off, m, c.n_agents() * m, b));
            let _ = i;
            off += len;
        }
    }
    let dual_len = off;
    let n_agents = blocks.len();

    let mut h = DMatrix::zeros(n_agents * m, dual_len);
    let mut e = DVector::zeros(dual_len);
    let mut k = 0;
    for (i, c) in net.clusters().iter().enumerate() {
        let n = c.n_agents();
        let lk = c.laplacian().kronecker(&DMatrix::<f64>::identity(m, m));
        let a_i = coupling.block(i + 1, m) / n as f64;
        for j in 0..n {
            let (o, _, g, _) = blocks[k];
            let mut hij = DMatrix::zeros(m, m + g + b);
            hij.view_mut((0, 0), (m, m)).copy_from(&(-DMatrix::<f64>::identity(m, m)));
            hij.view_mut((0, m), (m, g)).copy_from(&(-lk.columns(j * m, m).transpose()));
            hij.view_mut((0, m + g), (m, b)).copy_from(&(-a_i.transpose()));
            h.view_mut((k * m, o), (m, m + g + b)).copy_from(&hij);
            let scale = weights.kappa[i] * weights.eta[i][j];
            e.rows_mut(o + m + g, b).copy_from(&(&coupling.rhs * scale));
            k += 1;
        }
    }

    // intra edges: (G_i^T (x) I_{n_i M}) acting on the stacked gammas of cluster i
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut d = Vec::new();
    let mut first = 0;
    for (i, c) in net.clusters().iter().enumerate() {
        let n = c.n_agents();
        let w = n * m;
        let gi = c.incidence();
        let zi = gi.transpose().kronecker(&DMatrix::<f64>::identity(w, w));
        for r in 0..zi.nrows() {
            let mut row = DVector::zeros(dual_len);
            for j in 0..n {
                let (o, mm, _, _) = blocks[first + j];
                for q in 0..w {
                    row[o + mm + q] = zi[(r, j * w + q)];
                }
            }
            rows.push(row);
            let edge = r / w;
            let owner = (0..n).find(|&j| gi[(j, edge)] < 0.0).unwrap();
            d.push(weights.pi[i][owner]);
        }
        first += n;
    }
    // global edges: (G^T (x) I_B) acting on the stacked thetas
    let g = net.global_incidence();
    let zg = g.transpose().kronecker(&DMatrix::<f64>::identity(b, b));
    let pi_flat: Vec<f64> = weights.pi.iter().flatten().copied().collect();
    for r in 0..zg.nrows() {
        let mut row = DVector::zeros(dual_len);
        for (a, &(o, mm, gg, _)) in blocks.iter().enumerate() {
            for q in 0..b {
                row[o + mm + gg + q] = zg[(r, a * b + q)];
            }
        }
        rows.push(row);
        let edge = r / b.max(1);
        let owner = (0..n_agents).find(|&a| g[(a, edge)] < 0.0).unwrap();
        d.push(pi_flat[owner]);
    }
    let z = if rows.is_empty() {
        DMatrix::zeros(0, dual_len)
    } else {
        DMatrix::from_fn(rows.len(), dual_len, |r, c| rows[r][c])
    };
    DenseOperators { blocks, dual_len, h, e, z, d: DVector::from_vec(d) }
}

/// `grad P(lambda) = H^T argmax(...) + E` with the stacked operators.
pub fn dense_grad_p(problem: &Problem, ops: &DenseOperators, lambda: &DVector<f64>) -> DVector<f64> {
    let m = problem.network().block_dim();
    let v = &ops.h * lambda;
    let agents: Vec<_> = problem.agents().iter().flatten().collect();
    let mut u = DVector::zeros(v.len());
    for (k, agent) in agents.iter().enumerate() {
        let arg = agent.smooth.conjugate_argmax(v.rows(k * m, m).as_slice()).unwrap();
        u.rows_mut(k * m, m).copy_from_slice(&arg);
    }
    ops.h.tr_mul(&u) + &ops.e
}

/// One step of the compact form:
/// `lambda+ = prox^S_Q[lambda - S (grad P + Z^T omega + Z^T D Z lambda)]`,
/// `omega+ = omega + D Z lambda+`.
pub fn dense_step(
    problem: &Problem,
    ops: &DenseOperators,
    steps: &StepSizes,
    lambda: &DVector<f64>,
    omega: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let grad = dense_grad_p(problem, ops, lambda);
    let zl = &ops.z * lambda;
    let full = grad + ops.z.tr_mul(omega) + ops.z.tr_mul(&zl.component_mul(&ops.d));
    let mut s = DVector::zeros(ops.dual_len);
    for (&(o, m, g, b), &c) in ops.blocks.iter().zip(&steps.c) {
        s.rows_mut(o, m + g + b).fill(c);
    }
    let mut next = lambda - s.component_mul(&full);
    let agents: Vec<_> = problem.agents().iter().flatten().collect();
    for ((&(o, m, g, b), &c), agent) in ops.blocks.iter().zip(&steps.c).zip(&agents) {
        let mu = agent.nonsmooth.prox_conjugate(next.rows(o, m).as_slice(), c);
        next.rows_mut(o, m).copy_from_slice(&mu);
        if problem.mode() == ConstraintMode::Inequality {
            next.rows_mut(o + m + g, b).apply(|x| *x = x.max(0.0));
        }
    }
    let next_omega = omega + (&ops.z * &next).component_mul(&ops.d);
    (next, next_omega)
}

/// Random instance with `M, B` in `1..=2`, mixed function types, random
/// weights and either constraint mode.
pub fn rich_instance(seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=2usize);
    let b = rng.gen_range(1..=2usize);
    let n_clusters = rng.gen_range(1..=3usize);
    let sizes: Vec<usize> = (0..n_clusters).map(|_| rng.gen_range(1..=3)).collect();
    let mut clusters = Vec::new();
    let mut global = Vec::new();
    let mut offset = 0;
    for &n in &sizes {
        let edges: Vec<[usize; 2]> = (2..=n).map(|l| [rng.gen_range(1..l), l]).collect();
        global.extend(edges.iter().map(|e| [e[0] + offset, e[1] + offset]));
        clusters.push(ClusterSpec { size: n, intra_edges: edges });
        offset += n;
    }
    for k in 2..=offset {
        let a = rng.gen_range(1..k);
        if !global.iter().any(|e| e[1] == k) {
            global.push([a, k]);
        }
    }
    let mut agents = BTreeMap::new();
    for (i, &n) in sizes.iter().enumerate() {
        for j in 1..=n {
            let a: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..2.0)).collect();
            let lin: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = if rng.gen_bool(0.5) {
                FunctionSpec::Quadratic { a, b: lin }
            } else {
                FunctionSpec::QuadExp { a, b: lin, rho1: rng.gen_range(0.01..0.5), rho2: rng.gen_range(-1.0..1.0), rho3: 0.1 }
            };
            let g = match rng.gen_range(0..4) {
                0 => FunctionSpec::BoxIndicator {
                    lower: (0..m).map(|_| rng.gen_range(-2.0..0.0)).collect(),
                    upper: (0..m).map(|_| rng.gen_range(0.5..2.0)).collect(),
                },
                1 => FunctionSpec::NormPenalty { order: 1, weight: rng.gen_range(0.1..1.0) },
                2 => FunctionSpec::NormPenalty { order: 2, weight: rng.gen_range(0.1..1.0) },
                _ => FunctionSpec::Zero,
            };
            agents.insert(agent_key(i + 1, j), cdpg::scenarios::AgentSpec { f, g });
        }
    }
    let a_rows: Vec<Vec<f64>> = (0..b).map(|_| (0..n_clusters * m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let rhs: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mode = if rng.gen_bool(0.5) { ConstraintMode::Inequality } else { ConstraintMode::Equality };
    let kappa = normalized(&mut rng, n_clusters);
    let eta = sizes.iter().map(|&n| normalized(&mut rng, n)).collect();
    let pi = sizes.iter().map(|&n| (0..n).map(|_| rng.gen_range(0.5..2.0)).collect()).collect();
    ScenarioSpec {
        name: Some(format!("rich-{seed}")),
        network: NetworkSpec { clusters, global_edges: global, block_dim: m },
        agents,
        coupling: CouplingSpec { a: a_rows, b: rhs, mode },
        weights: WeightsSpec { kappa: Some(kappa), eta: Some(eta), pi: Some(pi) },
        reference: None,
    }
}

fn normalized(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // exact unit sum
    let rest: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - rest;
    w
}

/// Random nonzero starting point (theta kept nonnegative).
pub fn random_start(
    assembly: &cdpg::solver::Assembly,
    seed: u64,
    nonnegative_theta: bool,
) -> (DualState, EdgeMultipliers) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambda = DualState::zeros(assembly);
    for (l, op) in lambda.lambda.iter_mut().zip(&assembly.agents) {
        l.apply(|x| *x = rng.gen_range(-1.0..1.0));
        if nonnegative_theta {
            let t = op.dims.theta();
            l.rows_mut(t.start, t.len()).apply(|x| *x = x.abs());
        }
    }
    let mut omega = EdgeMultipliers::zeros(assembly);
    for w in omega.xi.iter_mut().chain(omega.zeta.iter_mut()) {
        w.apply(|x| *x = rng.gen_range(-1.0..1.0));
    }
    (lambda, omega)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
