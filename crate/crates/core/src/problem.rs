//! Problem instance: network, per-agent costs, affine coupling and weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{ProxTerm, SmoothConvex, SmoothTerm};
use crate::graph::MultiClusterNetwork;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// `A x <= b`; the coupling multiplier is kept in the nonnegative orthant.
    #[default]
    Inequality,
    /// `A x = b`; the coupling multiplier is free.
    Equality,
}

/// Cost `f_ij + g_ij` of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProblem {
    pub smooth: SmoothTerm,
    pub nonsmooth: ProxTerm,
}

/// `A x (<= | =) b` with `A` of shape `B x (N M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub mode: ConstraintMode,
}

impl Coupling {
    /// Column block `A_i` (shape `B x M`) acting on cluster `i` (1-based).
    pub fn block(&self, i: usize, dim: usize) -> DMatrix<f64> {
        self.matrix.columns((i - 1) * dim, dim).into_owned()
    }
}

/// `kappa_i` (sums to one), `eta_ij` (sums to one per cluster) and penalty
/// weights `pi_ij > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub kappa: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
}

impl Weights {
    /// `kappa_i = 1/N`, `eta_ij = 1/n_i`, `pi_ij = 1`.
    pub fn uniform(cluster_sizes: &[usize]) -> Self {
        let n = cluster_sizes.len() as f64;
        Self {
            kappa: vec![1.0 / n; cluster_sizes.len()],
            eta: cluster_sizes.iter().map(|&s| vec![1.0 / s as f64; s]).collect(),
            pi: cluster_sizes.iter().map(|&s| vec![1.0; s]).collect(),
        }
    }

    fn validate(&self, sizes: &[usize]) -> Result<()> {
        if self.kappa.len() != sizes.len() {
            return Err(Error::Validation(format!(
                "kappa has {} entries for {} clusters",
                self.kappa.len(),
                sizes.len()
            )));
        }
        let ksum: f64 = self.kappa.iter().sum();
        if (ksum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!("kappa sums to {ksum}, expected 1")));
        }
        for (i, &s) in sizes.iter().enumerate() {
            let eta = self.eta.get(i).filter(|e| e.len() == s).ok_or_else(|| {
                Error::Validation(format!("eta for cluster {} must have {s} entries", i + 1))
            })?;
            let esum: f64 = eta.iter().sum();
            if (esum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::Validation(format!(
                    "eta of cluster {} sums to {esum}, expected 1",
                    i + 1
                )));
            }
            let pi = self.pi.get(i).filter(|p| p.len() == s).ok_or_else(|| {
                Error::Validation(format!("pi for cluster {} must have {s} entries", i + 1))
            })?;
            if let Some(p) = pi.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
                return Err(Error::Validation(format!(
                    "pi in cluster {} must be positive, got {p}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    network: MultiClusterNetwork,
    agents: Vec<Vec<AgentProblem>>,
    coupling: Coupling,
    weights: Weights,
}

impl Problem {
    pub fn new(
        network: MultiClusterNetwork,
        agents: Vec<Vec<AgentProblem>>,
        coupling: Coupling,
        weights: Weights,
    ) -> Result<Self> {
        let sizes = network.cluster_sizes();
        let (m, b) = (network.block_dim(), network.coupling_rows());
        if agents.len() != sizes.len() || agents.iter().zip(&sizes).any(|(a, &s)| a.len() != s) {
            return Err(Error::Validation("agent table does not match cluster sizes".into()));
        }
        if coupling.matrix.shape() != (b, sizes.len() * m) {
            return Err(Error::Validation(format!(
                "coupling matrix is {:?}, expected ({b}, {})",
                coupling.matrix.shape(),
                sizes.len() * m
            )));
        }
        if coupling.rhs.len() != b {
            return Err(Error::Validation(format!(
                "coupling rhs has {} entries, expected {b}",
                coupling.rhs.len()
            )));
        }
        weights.validate(&sizes)?;
        for (i, cluster) in agents.iter().enumerate() {
            for (j, agent) in cluster.iter().enumerate() {
                if !(agent.smooth.sigma() > 0.0) {
                    return Err(Error::Validation(format!(
                        "agent {}.{} is not strongly convex",
                        i + 1,
                        j + 1
                    )));
                }
                let dim_ok = agent.smooth.dim() == m;
                let box_ok = match &agent.nonsmooth {
                    ProxTerm::Box(bx) => bx.lower().len() == m,
                    _ => true,
                };
                if !dim_ok || !box_ok {
                    return Err(Error::Validation(format!(
                        "agent {}.{} has functions of the wrong dimension (M = {m})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { network, agents, coupling, weights })
    }

    pub fn network(&self) -> &MultiClusterNetwork {
        &self.network
    }

    pub fn agents(&self) -> &[Vec<AgentProblem>] {
        &self.agents
    }

    /// Agent `(i, j)`, 1-based.
    pub fn agent(&self, i: usize, j: usize) -> &AgentProblem {
        &self.agents[i - 1][j - 1]
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn mode(&self) -> ConstraintMode {
        self.coupling.mode
    }

    pub fn with_mode(mut self, mode: ConstraintMode) -> Self {
        self.coupling.mode = mode;
        self
    }

    pub fn block_dim(&self) -> usize {
        self.network.block_dim()
    }

    /// Aggregated primal objective `sum_ij f_ij(x_i) + g_ij(x_i)`.
    pub fn primal_objective(&self, x: &[f64]) -> f64 {
        use crate::functions::Proximal;
        let m = self.block_dim();
        self.agents
            .iter()
            .enumerate()
            .map(|(i, cluster)| {
                let xi = &x[i * m..(i + 1) * m];
                cluster.iter().map(|a| a.smooth.eval(xi) + a.nonsmooth.eval(xi)).sum::<f64>()
            })
            .sum()
    }

    /// Componentwise interval `D_i` on which every `g_ij` of cluster `i` is
    /// finite (intersection of boxes; unbounded otherwise).
    pub fn cluster_domain(&self, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.block_dim();
        let mut lo = vec![f64::NEG_INFINITY; m];
        let mut hi = vec![f64::INFINITY; m];
        for agent in &self.agents[i - 1] {
            if let ProxTerm::Box(bx) = &agent.nonsmooth {
                for k in 0..m {
                    lo[k] = lo[k].max(bx.lower()[k]);
                    hi[k] = hi[k].min(bx.upper()[k]);
                }
            }
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Infeasible(format!("boxes of cluster {i} do not intersect")));
        }
        Ok((lo, hi))
    }

    /// Decidable parts of the standing assumptions: connectivity (enforced at
    /// construction), strong convexity (enforced at construction) and a
    /// constraint-qualification witness for single-row couplings.
    pub fn check_assumptions(&self) -> Result<AssumptionReport> {
        let n = self.network.n_clusters();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for i in 1..=n {
            let (l, h) = self.cluster_domain(i)?;
            lo.extend(l);
            hi.extend(h);
        }
        let min_sigma = self
            .agents
            .iter()
            .flatten()
            .map(|a| a.smooth.sigma())
            .fold(f64::INFINITY, f64::min);
        let mut report = AssumptionReport {
            connected: true,
            min_sigma,
            strictly_feasible: None,
            witness: None,
        };
        if self.coupling.rhs.len() != 1 {
            return Ok(report);
        }
        let a: Vec<f64> = self.coupling.matrix.row(0).iter().copied().collect();
        let b = self.coupling.rhs[0];
        let range = |pick_low: bool| -> f64 {
            a.iter()
                .zip(lo.iter().zip(&hi))
                .map(|(&ak, (&l, &h))| {
                    if ak == 0.0 {
                        0.0
                    } else if (ak > 0.0) == pick_low {
                        ak * l
                    } else {
                        ak * h
                    }
                })
                .sum()
        };
        let (amin, amax) = (range(true), range(false));
        let strict = match self.coupling.mode {
            ConstraintMode::Inequality => amin < b,
            ConstraintMode::Equality => (amin < b && b < amax) || (amin == b && amax == b),
        };
        let feasible = match self.coupling.mode {
            ConstraintMode::Inequality => amin <= b,
            ConstraintMode::Equality => amin <= b && b <= amax,
        };
        if !feasible {
            return Err(Error::Infeasible(format!(
                "a^T x over the box domain spans [{amin}, {amax}], b = {b}"
            )));
        }
        report.strictly_feasible = Some(strict);
        if strict && lo.iter().chain(&hi).all(|x| x.is_finite()) {
            report.witness = Some(relint_witness(&a, b, &lo, &hi, self.coupling.mode));
        }
        Ok(report)
    }
}

/// Point in the relative interior of the box with `a^T x < b` (inequality) or
/// `a^T x = b` (equality). Callers guarantee strict feasibility.
fn relint_witness(a: &[f64], b: f64, lo: &[f64], hi: &[f64], mode: ConstraintMode) -> Vec<f64> {
    let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let extreme = |toward_low: bool| -> Vec<f64> {
        a.iter()
            .zip(lo.iter().zip(hi))
            .zip(&center)
            .map(|((&ak, (&l, &h)), &c)| {
                if ak == 0.0 {
                    c
                } else if (ak > 0.0) == toward_low {
                    l
                } else {
                    h
                }
            })
            .collect()
    };
    let dot = |x: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    let ac = dot(&center);
    let blend = |end: &[f64], t: f64| -> Vec<f64> {
        center.iter().zip(end).map(|(c, e)| c + t * (e - c)).collect()
    };
    match mode {
        ConstraintMode::Inequality if ac < b => center,
        ConstraintMode::Inequality => {
            let low = extreme(true);
            let al = dot(&low);
            // move from the center toward the minimizing vertex, stopping
            // halfway between the crossing point and the vertex
            let t_cross = (ac - b) / (ac - al);
            blend(&low, 0.5 * (t_cross + 1.0))
        }
        ConstraintMode::Equality => {
            if ac == b {
                return center;
            }
            let end = extreme(ac > b);
            let ae = dot(&end);
            blend(&end, (ac - b) / (ac - ae))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub connected: bool,
    pub min_sigma: f64,
    /// `None` when not decided (multi-row couplings).
    pub strictly_feasible: Option<bool>,
    pub witness: Option<Vec<f64>>,
}
