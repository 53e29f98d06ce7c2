use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functions::SmoothConvex;
use crate::problem::Problem;
use crate::spectral::{gershgorin_bound, largest_eigenvalue, spectral_norm_sq, POWER_TOL};

/// Partition `(M, n_i M, B)` of one agent's dual vector `[mu; gamma; theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockDims {
    pub m: usize,
    pub n_i: usize,
    pub b: usize,
}

impl BlockDims {
    pub fn len(&self) -> usize {
        self.m + self.n_i * self.m + self.b
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mu(&self) -> Range<usize> {
        0..self.m
    }

    pub fn gamma(&self) -> Range<usize> {
        self.m..self.m + self.n_i * self.m
    }

    pub fn theta(&self) -> Range<usize> {
        let start = self.m + self.n_i * self.m;
        start..start + self.b
    }
}

/// Local dual operators of agent `(i, j)`.
#[derive(Debug, Clone)]
pub struct AgentOperators {
    pub cluster: usize,
    pub index: usize,
    /// Relabeled index `n_ij` (1-based).
    pub global: usize,
    pub dims: BlockDims,
    /// `H_ij = [-I_M | -Lblk^T | -Ablk^T]`, shape `M x dims.len()`.
    pub h: DMatrix<f64>,
    /// `E_ij^T`: zero except `kappa_i eta_ij b` in the theta block.
    pub e: DVector<f64>,
    /// `A_i / n_i`, shape `B x M`.
    pub coupling_slice: DMatrix<f64>,
    /// Column block `j` of `L^i (x) I_M`, shape `n_i M x M`.
    pub laplacian_block: DMatrix<f64>,
    pub sigma: f64,
    pub pi: f64,
}

impl AgentOperators {
    pub fn label(&self) -> String {
        format!("{}.{}", self.cluster, self.index)
    }
}

/// One consensus edge. `owner` is the endpoint with the smaller index and
/// carries the penalty weight; rows of `Z` hold `lambda_other - lambda_owner`
/// restricted to the gamma (intra) or theta (global) block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusEdge {
    /// Flat agent positions (relabeled index minus one).
    pub owner: usize,
    pub other: usize,
    pub weight: f64,
    /// First row of this edge's block in `Z`.
    pub row: usize,
}

/// Edge indices touching one agent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentLinks {
    pub intra_out: Vec<usize>,
    pub intra_in: Vec<usize>,
    pub global_out: Vec<usize>,
    pub global_in: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Assembly {
    /// Ordered by relabeled index.
    pub agents: Vec<AgentOperators>,
    pub links: Vec<AgentLinks>,
    pub intra_edges: Vec<ConsensusEdge>,
    pub global_edges: Vec<ConsensusEdge>,
    /// Stacked consensus operator over the stacked dual vector.
    pub z: DMatrix<f64>,
    /// Diagonal of `D[pi]`, one entry per row of `Z`.
    pub penalty: DVector<f64>,
    /// Offset of each agent's block in the stacked dual vector.
    pub offsets: Vec<usize>,
    pub dual_len: usize,
}

impl Assembly {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Width of the rows contributed by an intra edge of the owner's cluster.
    pub fn intra_width(&self, edge: &ConsensusEdge) -> usize {
        let d = self.agents[edge.owner].dims;
        d.n_i * d.m
    }

    pub fn global_width(&self) -> usize {
        self.agents.first().map_or(0, |a| a.dims.b)
    }

    /// `Z^T D[pi] Z` as a dense matrix.
    pub fn consensus_hessian(&self) -> DMatrix<f64> {
        let dz = DMatrix::from_diagonal(&self.penalty) * &self.z;
        self.z.transpose() * dz
    }
}

pub fn assemble(problem: &Problem) -> Result<Assembly> {
    let net = problem.network();
    let (m, b) = (net.block_dim(), net.coupling_rows());
    let coupling = problem.coupling();
    let weights = problem.weights();

    let mut agents = Vec::with_capacity(net.n_agents());
    let mut offsets = Vec::with_capacity(net.n_agents());
    let mut dual_len = 0;
    for (i, j) in net.agents() {
        let cluster = net.cluster(i)?;
        let n_i = cluster.n_agents();
        let dims = BlockDims { m, n_i, b };
        let d = dims.len();
        let label = format!("{i}.{j}");
        let fail = |reason: String| Error::Assembly { agent: label.clone(), reason };

        let lap = cluster.laplacian();
        let mut lblk = DMatrix::zeros(n_i * m, m);
        for r in 0..n_i {
            for k in 0..m {
                lblk[(r * m + k, k)] = lap[(r, j - 1)];
            }
        }
        let aslice = coupling.block(i, m) / n_i as f64;
        if aslice.shape() != (b, m) {
            return Err(fail(format!("coupling slice is {:?}, expected ({b}, {m})", aslice.shape())));
        }

        let mut h = DMatrix::zeros(m, d);
        for k in 0..m {
            h[(k, k)] = -1.0;
        }
        h.columns_mut(dims.gamma().start, n_i * m).copy_from(&(-lblk.transpose()));
        h.columns_mut(dims.theta().start, b).copy_from(&(-aslice.transpose()));

        let mut e = DVector::zeros(d);
        let scale = weights.kappa[i - 1] * weights.eta[i - 1][j - 1];
        e.rows_mut(dims.theta().start, b).copy_from(&(&coupling.rhs * scale));

        let agent = problem.agent(i, j);
        if agent.smooth.dim() != m {
            return Err(fail(format!("smooth term has dimension {}, expected {m}", agent.smooth.dim())));
        }
        offsets.push(dual_len);
        dual_len += d;
        agents.push(AgentOperators {
            cluster: i,
            index: j,
            global: net.relabel(i, j)?,
            dims,
            h,
            e,
            coupling_slice: aslice,
            laplacian_block: lblk,
            sigma: agent.smooth.sigma(),
            pi: weights.pi[i - 1][j - 1],
        });
    }

    let mut links = vec![AgentLinks::default(); agents.len()];
    let mut intra_edges = Vec::new();
    let mut rows = 0;
    for cluster in net.clusters() {
        let i = cluster.cluster_id();
        let width = cluster.n_agents() * m;
        for &(j, l) in cluster.edges() {
            let owner = net.relabel(i, j)? - 1;
            let other = net.relabel(i, l)? - 1;
            links[owner].intra_out.push(intra_edges.len());
            links[other].intra_in.push(intra_edges.len());
            intra_edges.push(ConsensusEdge { owner, other, weight: agents[owner].pi, row: rows });
            rows += width;
        }
    }
    let mut global_edges = Vec::new();
    for &(k, l) in net.global_edges() {
        let (owner, other) = (k - 1, l - 1);
        links[owner].global_out.push(global_edges.len());
        links[other].global_in.push(global_edges.len());
        global_edges.push(ConsensusEdge { owner, other, weight: agents[owner].pi, row: rows });
        rows += b;
    }

    let mut z = DMatrix::zeros(rows, dual_len);
    let mut penalty = DVector::zeros(rows);
    for e in &intra_edges {
        let g = agents[e.owner].dims.gamma();
        let width = g.len();
        for r in 0..width {
            z[(e.row + r, offsets[e.other] + g.start + r)] = 1.0;
            z[(e.row + r, offsets[e.owner] + g.start + r)] = -1.0;
            penalty[e.row + r] = e.weight;
        }
    }
    for e in &global_edges {
        let t = agents[e.owner].dims.theta();
        let t_other = agents[e.other].dims.theta();
        for r in 0..b {
            z[(e.row + r, offsets[e.other] + t_other.start + r)] = 1.0;
            z[(e.row + r, offsets[e.owner] + t.start + r)] = -1.0;
            penalty[e.row + r] = e.weight;
        }
    }

    Ok(Assembly { agents, links, intra_edges, global_edges, z, penalty, offsets, dual_len })
}

/// `h_ij = ||H_ij||^2 / sigma_ij`.
pub fn lipschitz_h(agent: &AgentOperators) -> Result<f64> {
    if !(agent.sigma > 0.0) {
        return Err(Error::Assembly {
            agent: agent.label(),
            reason: format!("strong convexity modulus {} is not positive", agent.sigma),
        });
    }
    Ok(spectral_norm_sq(&agent.h)? / agent.sigma)
}

/// How `tau_max(Z^T D[pi] Z)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauMode {
    /// Power iteration on the assembled operator.
    #[default]
    PowerIteration,
    /// Gershgorin row-sum bound; computable from local degree information.
    Gershgorin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSizes {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub tau_max: f64,
}

pub fn step_sizes(assembly: &Assembly, h: &[f64], safety: f64, mode: TauMode) -> Result<StepSizes> {
    if !(safety > 0.0 && safety.is_finite()) {
        return Err(Error::Validation(format!("safety factor must be positive, got {safety}")));
    }
    let tau_max = match mode {
        TauMode::PowerIteration => {
            let z = &assembly.z;
            let p = &assembly.penalty;
            largest_eigenvalue(
                assembly.dual_len,
                |v| z.transpose() * (z * v).component_mul(p),
                POWER_TOL,
            )?
        }
        TauMode::Gershgorin => gershgorin_bound(&assembly.consensus_hessian()),
    };
    let c = h.iter().map(|&hij| safety / (hij + tau_max)).collect();
    Ok(StepSizes { c, h: h.to_vec(), tau_max })
}
