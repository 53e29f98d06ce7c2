//! Built-in problem instances and the serializable scenario description.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::FunctionSpec;
use crate::graph::{ClusterGraph, MultiClusterNetwork};
use crate::problem::{AgentProblem, ConstraintMode, Coupling, Problem, Weights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub size: usize,
    #[serde(default)]
    pub intra_edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub clusters: Vec<ClusterSpec>,
    /// Edges between relabeled agents `1..=sum n_i`.
    #[serde(default)]
    pub global_edges: Vec<[usize; 2]>,
    #[serde(default = "one")]
    pub block_dim: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub f: FunctionSpec,
    #[serde(default = "zero_spec")]
    pub g: FunctionSpec,
}

fn zero_spec() -> FunctionSpec {
    FunctionSpec::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// Rows of `A`.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub mode: ConstraintMode,
}

/// Missing entries default to the uniform split and unit penalties.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<Vec<f64>>>,
}

/// Published or precomputed optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub x_star: Vec<f64>,
    /// Primal objective at `x_star` (minimization convention).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub network: NetworkSpec,
    /// Keyed `"i.j"`.
    pub agents: BTreeMap<String, AgentSpec>,
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
}

pub fn agent_key(i: usize, j: usize) -> String {
    format!("{i}.{j}")
}

fn pairs(edges: &[[usize; 2]]) -> Vec<(usize, usize)> {
    edges.iter().map(|e| (e[0], e[1])).collect()
}

impl ScenarioSpec {
    pub fn sizes(&self) -> Vec<usize> {
        self.network.clusters.iter().map(|c| c.size).collect()
    }

    /// Validates and builds the problem, reporting every agent-level problem
    /// together.
    pub fn build(&self) -> Result<Problem> {
        let mut issues = Vec::new();
        let m = self.network.block_dim;
        let sizes = self.sizes();

        let mut clusters = Vec::new();
        for (i, c) in self.network.clusters.iter().enumerate() {
            match ClusterGraph::new(i + 1, c.size, &pairs(&c.intra_edges)) {
                Ok(g) => clusters.push(g),
                Err(e) => issues.push(format!("network.clusters[{i}]: {e}")),
            }
        }

        let mut agents: Vec<Vec<AgentProblem>> = Vec::new();
        for (i, &n) in sizes.iter().enumerate() {
            let mut row = Vec::new();
            for j in 1..=n {
                let key = agent_key(i + 1, j);
                let Some(spec) = self.agents.get(&key) else {
                    issues.push(format!("agents: missing entry \"{key}\""));
                    continue;
                };
                let smooth = spec.f.to_smooth(m).map_err(|e| issues.push(format!("agents.\"{key}\".f: {e}")));
                let nonsmooth =
                    spec.g.to_prox(m).map_err(|e| issues.push(format!("agents.\"{key}\".g: {e}")));
                if let (Ok(smooth), Ok(nonsmooth)) = (smooth, nonsmooth) {
                    row.push(AgentProblem { smooth, nonsmooth });
                }
            }
            agents.push(row);
        }
        for key in self.agents.keys() {
            let known = sizes.iter().enumerate().any(|(i, &n)| (1..=n).any(|j| agent_key(i + 1, j) == *key));
            if !known {
                issues.push(format!("agents: \"{key}\" does not name an agent of the network"));
            }
        }

        let b_rows = self.coupling.a.len();
        let width = sizes.len() * m;
        for (r, row) in self.coupling.a.iter().enumerate() {
            if row.len() != width {
                issues.push(format!("coupling.A[{r}] has {} entries, expected {width}", row.len()));
            }
        }
        if self.coupling.b.len() != b_rows {
            issues.push(format!("coupling.b has {} entries, expected {b_rows}", self.coupling.b.len()));
        }

        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        let network = MultiClusterNetwork::new(clusters, &pairs(&self.network.global_edges), m, b_rows)?;
        let matrix = DMatrix::from_fn(b_rows, width, |r, c| self.coupling.a[r][c]);
        let coupling =
            Coupling { matrix, rhs: DVector::from_vec(self.coupling.b.clone()), mode: self.coupling.mode };
        let uniform = Weights::uniform(&sizes);
        let weights = Weights {
            kappa: self.weights.kappa.clone().unwrap_or(uniform.kappa),
            eta: self.weights.eta.clone().unwrap_or(uniform.eta),
            pi: self.weights.pi.clone().unwrap_or(uniform.pi),
        };
        Problem::new(network, agents, coupling, weights)
    }
}

/// Intra-cluster and global topologies for the commodity market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarketTopology {
    /// Paths inside clusters; the last agent of each cluster linked to the
    /// first agent of the next.
    #[default]
    Path,
    /// Stars centred on agent 1 of each cluster; first agents linked to the
    /// first agent of cluster 1.
    Star,
    /// Complete graphs inside clusters; every pair of cluster heads linked
    /// and one extra cross link per adjacent pair.
    Dense,
}

impl MarketTopology {
    pub const ALL: [MarketTopology; 3] = [Self::Path, Self::Star, Self::Dense];
}

fn intra_path(n: usize) -> Vec<[usize; 2]> {
    (1..n).map(|j| [j, j + 1]).collect()
}

fn intra_star(n: usize) -> Vec<[usize; 2]> {
    (2..=n).map(|j| [1, j]).collect()
}

fn intra_complete(n: usize) -> Vec<[usize; 2]> {
    (1..=n).flat_map(|j| (j + 1..=n).map(move |l| [j, l])).collect()
}

/// Relabeled intra edges plus `extra`, so the global graph spans every agent.
fn network_spec(sizes: &[usize], intra: impl Fn(usize) -> Vec<[usize; 2]>, extra: Vec<[usize; 2]>) -> NetworkSpec {
    let mut offset = 0;
    let mut clusters = Vec::new();
    let mut global = Vec::new();
    for &n in sizes {
        let edges = intra(n);
        global.extend(edges.iter().map(|e| [e[0] + offset, e[1] + offset]));
        clusters.push(ClusterSpec { size: n, intra_edges: edges });
        offset += n;
    }
    global.extend(extra);
    NetworkSpec { clusters, global_edges: global, block_dim: 1 }
}

fn first_agents(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().scan(1, |next, &n| {
        let first = *next;
        *next += n;
        Some(first)
    }).collect()
}

/// `(varpi, varsigma, upper bound)` per agent of the commodity market, by cluster.
pub const MARKET_TABLE: [&[(f64, f64, f64)]; 3] = [
    &[(-0.1, 2.1, 10.5), (-0.2, 2.2, 5.5), (-0.3, 2.0, 3.33), (-0.2, 1.9, 4.75)],
    &[(-0.5, 0.2, 0.2), (-0.45, 0.25, 0.27), (-0.55, 0.5, 0.45)],
    &[(-0.8, 3.3, 2.06), (-0.9, 4.1, 2.27)],
];

pub const MARKET_SUPPLY: f64 = 5.0;
pub const MARKET_OPTIMUM: [f64; 3] = [3.33, 0.0, 1.67];

/// Social-welfare maximization over three regional markets, posed as
/// minimization of the negated utilities `-(varpi x^2 + varsigma x)` over
/// `[0, xbar]` subject to `sum x <= 5`.
pub fn commodity_market() -> ScenarioSpec {
    commodity_market_with(MarketTopology::Path)
}

pub fn commodity_market_with(topology: MarketTopology) -> ScenarioSpec {
    let sizes: Vec<usize> = MARKET_TABLE.iter().map(|c| c.len()).collect();
    let heads = first_agents(&sizes);
    let network = match topology {
        MarketTopology::Path => {
            let bridges = heads.windows(2).map(|w| [w[1] - 1, w[1]]).collect();
            network_spec(&sizes, intra_path, bridges)
        }
        MarketTopology::Star => {
            let bridges = heads[1..].iter().map(|&h| [1, h]).collect();
            network_spec(&sizes, intra_star, bridges)
        }
        MarketTopology::Dense => {
            let mut bridges: Vec<[usize; 2]> =
                (0..heads.len()).flat_map(|a| (a + 1..heads.len()).map(move |b| (a, b))).map(|(a, b)| [heads[a], heads[b]]).collect();
            bridges.extend(heads.windows(2).map(|w| [w[1] - 1, w[1] + 1]));
            network_spec(&sizes, intra_complete, bridges)
        }
    };
    let mut agents = BTreeMap::new();
    for (i, cluster) in MARKET_TABLE.iter().enumerate() {
        for (j, &(varpi, varsigma, upper)) in cluster.iter().enumerate() {
            let spec = AgentSpec {
                f: FunctionSpec::Quadratic { a: vec![-varpi], b: vec![-varsigma] },
                g: FunctionSpec::BoxIndicator { lower: vec![0.0], upper: vec![upper] },
            };
            agents.insert(agent_key(i + 1, j + 1), spec);
        }
    }
    let objective = MARKET_OPTIMUM
        .iter()
        .zip(MARKET_TABLE.iter())
        .map(|(&x, cluster)| cluster.iter().map(|&(p, s, _)| -(p * x * x + s * x)).sum::<f64>())
        .sum();
    ScenarioSpec {
        name: Some("commodity-market".into()),
        network,
        agents,
        coupling: CouplingSpec { a: vec![vec![1.0; sizes.len()]], b: vec![MARKET_SUPPLY], mode: ConstraintMode::Inequality },
        weights: WeightsSpec::default(),
        reference: Some(ReferenceSpec { x_star: MARKET_OPTIMUM.to_vec(), objective: Some(objective) }),
    }
}

/// Per-cluster dispatch data: box, cost `(alpha1, alpha2)`, SO2 emission
/// `(beta1, beta2)` and NOx emission `(rho1, rho2, rho3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchUnit {
    pub lower: f64,
    pub upper: f64,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub rho: [f64; 3],
}

pub const DISPATCH_TABLE: [DispatchUnit; 3] = [
    DispatchUnit { lower: 0.05, upper: 5.0, alpha: [100.0, 200.0], beta: [6.490, -2.0], rho: [0.255, 0.012, -3.554] },
    DispatchUnit { lower: 0.05, upper: 10.0, alpha: [120.0, 150.0], beta: [5.638, -3.0], rho: [0.250, 0.012, -4.047] },
    DispatchUnit { lower: 0.05, upper: 10.0, alpha: [40.0, 180.0], beta: [4.586, -2.0], rho: [0.255, 0.012, -3.094] },
];

pub const DISPATCH_DEMAND: f64 = 5.0;
pub const DISPATCH_CHI: f64 = 0.5;
/// Agents per dispatch cluster: one generation company and two renewables.
pub const DISPATCH_CLUSTER_SIZE: usize = 3;
pub const DISPATCH_EXPECTED: [f64; 3] = [2.38, 2.57, 0.05];

impl DispatchUnit {
    pub fn cost(&self, x: f64) -> f64 {
        self.alpha[0] * x * x + self.alpha[1] * x
    }

    pub fn emission(&self, x: f64) -> f64 {
        let [r1, r2, r3] = self.rho;
        self.beta[0] * x * x + self.beta[1] * x + r1 * (r2 * x).exp() + r3 * x
    }

    /// Price-penalty factor `C(xbar) / (E^S(xbar) + E^N(xbar))`.
    pub fn delta(&self) -> f64 {
        self.cost(self.upper) / self.emission(self.upper)
    }

    /// `chi C + (1 - chi) delta (E^S + E^N)` divided evenly over `n` agents.
    pub fn agent_function(&self, n: usize) -> FunctionSpec {
        let (chi, d, k) = (DISPATCH_CHI, self.delta(), n as f64);
        let w = (1.0 - chi) * d;
        FunctionSpec::QuadExp {
            a: vec![(chi * self.alpha[0] + w * self.beta[0]) / k],
            b: vec![(chi * self.alpha[1] + w * self.beta[1]) / k],
            rho1: w * self.rho[0] / k,
            rho2: self.rho[1],
            rho3: w * self.rho[2] / k,
        }
    }
}

/// Economic emission dispatch with demand balance `sum x = 5`.
pub fn emission_dispatch() -> ScenarioSpec {
    let sizes = vec![DISPATCH_CLUSTER_SIZE; DISPATCH_TABLE.len()];
    let heads = first_agents(&sizes);
    let bridges = heads.windows(2).map(|w| [w[0], w[1]]).collect();
    let network = network_spec(&sizes, intra_star, bridges);
    let mut agents = BTreeMap::new();
    for (i, unit) in DISPATCH_TABLE.iter().enumerate() {
        for j in 1..=sizes[i] {
            let spec = AgentSpec {
                f: unit.agent_function(sizes[i]),
                g: FunctionSpec::BoxIndicator { lower: vec![unit.lower], upper: vec![unit.upper] },
            };
            agents.insert(agent_key(i + 1, j), spec);
        }
    }
    ScenarioSpec {
        name: Some("emission-dispatch".into()),
        network,
        agents,
        coupling: CouplingSpec { a: vec![vec![1.0; sizes.len()]], b: vec![DISPATCH_DEMAND], mode: ConstraintMode::Equality },
        weights: WeightsSpec::default(),
        reference: Some(ReferenceSpec { x_star: DISPATCH_EXPECTED.to_vec(), objective: None }),
    }
}

/// Random feasible box-constrained quadratic instance with `M = B = 1`,
/// `n_clusters` clusters of 1 to `n_max` agents, random spanning trees and
/// `sum x <= b` with `b` strictly inside the attainable range.
pub fn random_small(seed: u64, n_clusters: usize, n_max: usize) -> Result<ScenarioSpec> {
    if !(1..=3).contains(&n_clusters) || !(1..=3).contains(&n_max) {
        return Err(Error::Validation(format!(
            "random_small supports 1..=3 clusters of at most 3 agents, got {n_clusters} and {n_max}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..n_clusters).map(|_| rng.gen_range(1..=n_max)).collect();
    let mut offset = 0;
    let mut clusters = Vec::new();
    let mut global = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for &n in &sizes {
        let edges: Vec<[usize; 2]> = (2..=n).map(|l| [rng.gen_range(1..l), l]).collect();
        global.extend(edges.iter().map(|e| [e[0] + offset, e[1] + offset]));
        clusters.push(ClusterSpec { size: n, intra_edges: edges });
        members.push((offset + 1..=offset + n).collect());
        offset += n;
    }
    for i in 1..n_clusters {
        let earlier = &members[rng.gen_range(0..i)];
        let a = earlier[rng.gen_range(0..earlier.len())];
        let b = members[i][rng.gen_range(0..members[i].len())];
        global.push([a, b]);
    }

    let mut agents = BTreeMap::new();
    let (mut amin, mut amax) = (0.0, 0.0);
    for (i, &n) in sizes.iter().enumerate() {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for j in 1..=n {
            let lower: f64 = rng.gen_range(-2.0..0.0);
            let upper: f64 = rng.gen_range(0.5..3.0);
            lo = lo.max(lower);
            hi = hi.min(upper);
            let spec = AgentSpec {
                f: FunctionSpec::Quadratic { a: vec![rng.gen_range(0.2..2.0)], b: vec![rng.gen_range(-3.0..3.0)] },
                g: FunctionSpec::BoxIndicator { lower: vec![lower], upper: vec![upper] },
            };
            agents.insert(agent_key(i + 1, j), spec);
        }
        amin += lo;
        amax += hi;
    }
    let rhs = amin + rng.gen_range(0.2..0.8) * (amax - amin);
    Ok(ScenarioSpec {
        name: Some(format!("random-small-{seed}")),
        network: NetworkSpec { clusters, global_edges: global, block_dim: 1 },
        agents,
        coupling: CouplingSpec { a: vec![vec![1.0; n_clusters]], b: vec![rhs], mode: ConstraintMode::Inequality },
        weights: WeightsSpec::default(),
        reference: None,
    })
}

/// Built-in scenario by its command-line name.
pub fn builtin(name: &str) -> Option<ScenarioSpec> {
    match name {
        "commodity-market" => Some(commodity_market()),
        "emission-dispatch" => Some(emission_dispatch()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 2] = ["commodity-market", "emission-dispatch"];
