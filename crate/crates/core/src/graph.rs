//! Two-level communication network: clusters of agents embedded in a global
//! agent graph.
//!
//! All indices crossing this module's public surface are 1-based. Agent `j` of
//! cluster `i` carries the global label `n_ij = n_1 + ... + n_{i-1} + j`.
//!
//! Edges are unordered pairs, stored normalized as `(min, max)` and kept in
//! the canonical order produced by [`order_edges`]: ascending smaller
//! endpoint, ties broken by the larger endpoint.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Unordered edge normalized to `(smaller, larger)`, 1-based.
pub type Edge = (usize, usize);

/// Sorts an edge set into the canonical total order.
///
/// Self-loops and repeated pairs (in either orientation) are rejected.
pub fn order_edges(edges: &[(usize, usize)]) -> Result<Vec<Edge>> {
    let mut seen = BTreeSet::new();
    for &(a, b) in edges {
        if a == b {
            return Err(Error::Validation(format!("self-loop ({a},{a})")));
        }
        if a == 0 || b == 0 {
            return Err(Error::Validation(format!(
                "edge ({a},{b}) uses index 0; indices are 1-based"
            )));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::Validation(format!("duplicate edge ({a},{b})")));
        }
    }
    // BTreeSet iteration over (min, max) tuples is exactly the canonical order.
    Ok(seen.into_iter().collect())
}

fn is_canonical(edges: &[Edge]) -> bool {
    edges.iter().all(|&(a, b)| a < b) && edges.windows(2).all(|w| w[0] < w[1])
}

/// Degree matrix minus adjacency for a graph on `vertex_count` vertices.
pub fn laplacian_from_edges(vertex_count: usize, edges: &[Edge]) -> DMatrix<f64> {
    let mut lap = DMatrix::zeros(vertex_count, vertex_count);
    for &(a, b) in edges {
        let (a, b) = (a - 1, b - 1);
        lap[(a, a)] += 1.0;
        lap[(b, b)] += 1.0;
        lap[(a, b)] = -1.0;
        lap[(b, a)] = -1.0;
    }
    lap
}

/// Vertex-by-edge incidence matrix.
///
/// Column `k` for `e_k = (j, l)` with `j < l` holds `-1` in row `j` and `+1` in
/// row `l`, so that `G * G^T` is the graph Laplacian. The edge list must
/// already be in canonical order.
pub fn incidence(vertex_count: usize, edges: &[Edge]) -> Result<DMatrix<f64>> {
    if !is_canonical(edges) {
        return Err(Error::Contract(
            "incidence requires edges in canonical order (use order_edges)".into(),
        ));
    }
    let mut g = DMatrix::zeros(vertex_count, edges.len());
    for (k, &(a, b)) in edges.iter().enumerate() {
        if b > vertex_count {
            return Err(Error::InvalidIndex(format!(
                "edge ({a},{b}) exceeds vertex count {vertex_count}"
            )));
        }
        g[(a - 1, k)] = -1.0;
        g[(b - 1, k)] = 1.0;
    }
    Ok(g)
}

fn is_connected(vertex_count: usize, edges: &[Edge]) -> bool {
    if vertex_count <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); vertex_count];
    for &(a, b) in edges {
        adj[a - 1].push(b - 1);
        adj[b - 1].push(a - 1);
    }
    let mut visited = vec![false; vertex_count];
    let mut queue = VecDeque::from([0]);
    visited[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !visited[w] {
                visited[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == vertex_count
}

/// One cluster `G_i`: agents `1..=n_i` and their intra-cluster links.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    cluster_id: usize,
    n_agents: usize,
    edges: Vec<Edge>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl ClusterGraph {
    /// Validates and builds a cluster. Rejects self-loops, duplicates,
    /// out-of-range endpoints and disconnected clusters.
    pub fn new(cluster_id: usize, n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::Validation(format!("cluster {cluster_id} has no agents")));
        }
        let edges = order_edges(edges)
            .map_err(|e| Error::Validation(format!("cluster {cluster_id}: {e}")))?;
        if let Some(&(a, b)) = edges.iter().find(|&&(_, b)| b > n_agents) {
            return Err(Error::Validation(format!(
                "cluster {cluster_id}: edge ({a},{b}) references agent beyond {n_agents}"
            )));
        }
        if !is_connected(n_agents, &edges) {
            return Err(Error::Validation(format!("cluster {cluster_id} is not connected")));
        }
        let mut adjacency = vec![BTreeSet::new(); n_agents];
        for &(a, b) in &edges {
            adjacency[a - 1].insert(b);
            adjacency[b - 1].insert(a);
        }
        Ok(Self { cluster_id, n_agents, edges, adjacency })
    }

    pub fn cluster_id(&self) -> usize {
        self.cluster_id
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Edges in canonical order `e_1, ..., e_|E_i|`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[j - 1].iter().copied()
    }

    pub fn degree(&self, j: usize) -> usize {
        self.adjacency[j - 1].len()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian_from_edges(self.n_agents, &self.edges)
    }

    pub fn incidence(&self) -> DMatrix<f64> {
        incidence(self.n_agents, &self.edges).expect("cluster edges are canonical")
    }
}

/// Neighbor sets of one agent `(i, j)`.
///
/// `succ`/`pred` hold intra-cluster neighbors with larger/smaller local index
/// (`S_ij`, `S#_ij`); `global_succ`/`global_pred` hold global neighbors with
/// larger/smaller relabeled index (`S̄_ij`, `S̄#_ij`). All sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentNeighbors {
    pub succ: Vec<usize>,
    pub pred: Vec<usize>,
    pub global_succ: Vec<usize>,
    pub global_pred: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    per_cluster: Vec<Vec<AgentNeighbors>>,
}

impl NeighborSets {
    /// Record for agent `(i, j)`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> Result<&AgentNeighbors> {
        self.per_cluster
            .get(i.wrapping_sub(1))
            .and_then(|c| c.get(j.wrapping_sub(1)))
            .ok_or_else(|| Error::InvalidIndex(format!("agent ({i},{j})")))
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &AgentNeighbors)> {
        self.per_cluster.iter().enumerate().flat_map(|(i, c)| {
            c.iter().enumerate().map(move |(j, n)| ((i + 1, j + 1), n))
        })
    }
}

/// Clusters plus the global agent graph `G` over relabeled indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiClusterNetwork {
    clusters: Vec<ClusterGraph>,
    global_edges: Vec<Edge>,
    offsets: Vec<usize>,
    block_dim: usize,
    coupling_rows: usize,
}

impl MultiClusterNetwork {
    /// `block_dim` is the per-cluster decision dimension `M`; `coupling_rows`
    /// is the number of rows `B` of the affine coupling constraint.
    pub fn new(
        clusters: Vec<ClusterGraph>,
        global_edges: &[(usize, usize)],
        block_dim: usize,
        coupling_rows: usize,
    ) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Validation("network has no clusters".into()));
        }
        if block_dim == 0 {
            return Err(Error::Validation("block dimension M must be at least 1".into()));
        }
        let mut offsets = Vec::with_capacity(clusters.len());
        let mut total = 0;
        for c in &clusters {
            offsets.push(total);
            total += c.n_agents();
        }
        let global_edges = order_edges(global_edges)
            .map_err(|e| Error::Validation(format!("global graph: {e}")))?;
        if let Some(&(a, b)) = global_edges.iter().find(|&&(_, b)| b > total) {
            return Err(Error::Validation(format!(
                "global graph: edge ({a},{b}) references agent beyond {total}"
            )));
        }
        if !is_connected(total, &global_edges) {
            return Err(Error::Validation("global graph is not connected".into()));
        }
        Ok(Self { clusters, global_edges, offsets, block_dim, coupling_rows })
    }

    pub fn clusters(&self) -> &[ClusterGraph] {
        &self.clusters
    }

    pub fn cluster(&self, i: usize) -> Result<&ClusterGraph> {
        self.clusters
            .get(i.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidIndex(format!("cluster {i}")))
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_agents(&self) -> usize {
        self.offsets.last().unwrap() + self.clusters.last().unwrap().n_agents()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(ClusterGraph::n_agents).collect()
    }

    pub fn global_edges(&self) -> &[Edge] {
        &self.global_edges
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn coupling_rows(&self) -> usize {
        self.coupling_rows
    }

    /// Global label `n_ij` of agent `j` in cluster `i`.
    pub fn relabel(&self, i: usize, j: usize) -> Result<usize> {
        let cluster = self.cluster(i)?;
        if j == 0 || j > cluster.n_agents() {
            return Err(Error::InvalidIndex(format!(
                "agent {j} in cluster {i} of size {}",
                cluster.n_agents()
            )));
        }
        Ok(self.offsets[i - 1] + j)
    }

    /// Inverse of [`relabel`](Self::relabel).
    pub fn locate(&self, k: usize) -> Result<(usize, usize)> {
        if k == 0 || k > self.n_agents() {
            return Err(Error::InvalidIndex(format!("global agent {k}")));
        }
        let i = self.offsets.partition_point(|&o| o < k);
        Ok((i, k - self.offsets[i - 1]))
    }

    /// All agents as `(i, j)` in relabeling order.
    pub fn agents(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (1..=c.n_agents()).map(move |j| (i + 1, j)))
    }

    pub fn global_laplacian(&self) -> DMatrix<f64> {
        laplacian_from_edges(self.n_agents(), &self.global_edges)
    }

    pub fn global_incidence(&self) -> DMatrix<f64> {
        incidence(self.n_agents(), &self.global_edges).expect("global edges are canonical")
    }

    pub fn neighbor_sets(&self) -> NeighborSets {
        let mut per_cluster: Vec<Vec<AgentNeighbors>> = self
            .clusters
            .iter()
            .map(|c| vec![AgentNeighbors::default(); c.n_agents()])
            .collect();
        for (ci, c) in self.clusters.iter().enumerate() {
            for &(a, b) in c.edges() {
                per_cluster[ci][a - 1].succ.push(b);
                per_cluster[ci][b - 1].pred.push(a);
            }
        }
        for &(a, b) in &self.global_edges {
            let (ia, ja) = self.locate(a).unwrap();
            let (ib, jb) = self.locate(b).unwrap();
            per_cluster[ia - 1][ja - 1].global_succ.push(b);
            per_cluster[ib - 1][jb - 1].global_pred.push(a);
        }
        // Canonical edge order already yields ascending succ lists; pred lists
        // need an explicit sort.
        for rec in per_cluster.iter_mut().flatten() {
            rec.pred.sort_unstable();
            rec.global_pred.sort_unstable();
        }
        NeighborSets { per_cluster }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_node_edges() -> Vec<(usize, usize)> {
        vec![(2, 4), (1, 2), (4, 5), (2, 5), (3, 4)]
    }

    fn four_clusters() -> MultiClusterNetwork {
        let clusters = vec![
            ClusterGraph::new(1, 1, &[]).unwrap(),
            ClusterGraph::new(2, 1, &[]).unwrap(),
            ClusterGraph::new(3, 1, &[]).unwrap(),
            ClusterGraph::new(4, 2, &[(1, 2)]).unwrap(),
        ];
        MultiClusterNetwork::new(clusters, &five_node_edges(), 1, 1).unwrap()
    }

    #[test]
    fn relabel_examples() {
        let net = four_clusters();
        assert_eq!(net.relabel(1, 1).unwrap(), 1);
        assert_eq!(net.relabel(4, 1).unwrap(), 4);
        assert_eq!(net.relabel(4, 2).unwrap(), 5);
        assert!(matches!(net.relabel(5, 1), Err(Error::InvalidIndex(_))));
        assert!(matches!(net.relabel(4, 3), Err(Error::InvalidIndex(_))));
        assert!(matches!(net.relabel(0, 1), Err(Error::InvalidIndex(_))));

        let clusters = vec![
            ClusterGraph::new(1, 4, &[(1, 2), (2, 3), (3, 4)]).unwrap(),
            ClusterGraph::new(2, 3, &[(1, 2), (2, 3)]).unwrap(),
            ClusterGraph::new(3, 2, &[(1, 2)]).unwrap(),
        ];
        let chain: Vec<_> = (1..9).map(|k| (k, k + 1)).collect();
        let net = MultiClusterNetwork::new(clusters, &chain, 1, 1).unwrap();
        assert_eq!(net.relabel(3, 2).unwrap(), 9);
        for (i, j) in net.agents() {
            let k = net.relabel(i, j).unwrap();
            assert_eq!(net.locate(k).unwrap(), (i, j));
        }
    }

    #[test]
    fn order_edges_examples() {
        assert_eq!(
            order_edges(&five_node_edges()).unwrap(),
            vec![(1, 2), (2, 4), (2, 5), (3, 4), (4, 5)]
        );
        assert_eq!(order_edges(&[(1, 2)]).unwrap(), vec![(1, 2)]);
        assert_eq!(order_edges(&[(1, 3), (1, 2)]).unwrap(), vec![(1, 2), (1, 3)]);
        assert_eq!(order_edges(&[(3, 1), (2, 1)]).unwrap(), vec![(1, 2), (1, 3)]);
    }

    #[test]
    fn order_edges_rejects_duplicates_and_loops() {
        assert!(matches!(order_edges(&[(1, 2), (2, 1)]), Err(Error::Validation(_))));
        assert!(matches!(order_edges(&[(1, 2), (1, 2)]), Err(Error::Validation(_))));
        assert!(matches!(order_edges(&[(3, 3)]), Err(Error::Validation(_))));
    }

    #[test]
    fn laplacian_examples() {
        let path = ClusterGraph::new(1, 2, &[(1, 2)]).unwrap();
        assert_eq!(path.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

        let g = ClusterGraph::new(1, 5, &five_node_edges()).unwrap();
        let lap = g.laplacian();
        let row4: Vec<f64> = lap.row(3).iter().copied().collect();
        assert_eq!(row4, vec![0.0, -1.0, -1.0, 3.0, -1.0]);
        assert_eq!(lap, lap.transpose());
        for r in 0..5 {
            assert_eq!(lap.row(r).sum(), 0.0);
        }

        let single = ClusterGraph::new(1, 1, &[]).unwrap();
        assert_eq!(single.laplacian(), DMatrix::from_element(1, 1, 0.0));
    }

    #[test]
    fn incidence_examples() {
        let path = ClusterGraph::new(1, 2, &[(1, 2)]).unwrap();
        assert_eq!(path.incidence(), DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]));

        let g = ClusterGraph::new(1, 5, &five_node_edges()).unwrap();
        let inc = g.incidence();
        assert_eq!(inc.shape(), (5, 5));
        for k in 0..5 {
            assert_eq!(inc.column(k).sum(), 0.0);
        }
        assert_eq!(&inc * inc.transpose(), g.laplacian());

        let empty = incidence(3, &[]).unwrap();
        assert_eq!(empty.shape(), (3, 0));

        assert!(matches!(incidence(3, &[(2, 3), (1, 2)]), Err(Error::Contract(_))));
        assert!(matches!(incidence(3, &[(2, 1)]), Err(Error::Contract(_))));
    }

    #[test]
    fn four_cluster_neighbor_sets() {
        let sets = four_clusters().neighbor_sets();
        assert_eq!(sets.get(4, 1).unwrap().succ, vec![2]);
        assert!(sets.get(4, 2).unwrap().succ.is_empty());
        for i in 1..=3 {
            assert!(sets.get(i, 1).unwrap().succ.is_empty());
        }
        assert_eq!(sets.get(1, 1).unwrap().global_succ, vec![2]);
        assert_eq!(sets.get(2, 1).unwrap().global_succ, vec![4, 5]);
        assert_eq!(sets.get(3, 1).unwrap().global_succ, vec![4]);
        assert_eq!(sets.get(4, 1).unwrap().global_succ, vec![5]);
        assert!(sets.get(4, 2).unwrap().global_succ.is_empty());
        assert_eq!(sets.get(4, 2).unwrap().pred, vec![1]);
        assert_eq!(sets.get(4, 2).unwrap().global_pred, vec![2, 4]);
    }

    #[test]
    fn trivial_neighbor_sets() {
        let net =
            MultiClusterNetwork::new(vec![ClusterGraph::new(1, 1, &[]).unwrap()], &[], 1, 0)
                .unwrap();
        let sets = net.neighbor_sets();
        assert_eq!(sets.get(1, 1).unwrap(), &AgentNeighbors::default());

        let chain = MultiClusterNetwork::new(
            vec![ClusterGraph::new(1, 1, &[]).unwrap(), ClusterGraph::new(2, 1, &[]).unwrap()],
            &[(1, 2)],
            1,
            1,
        )
        .unwrap();
        let sets = chain.neighbor_sets();
        assert_eq!(sets.get(1, 1).unwrap().global_succ, vec![2]);
        assert_eq!(sets.get(2, 1).unwrap().global_pred, vec![1]);
    }

    #[test]
    fn connectivity_is_checked() {
        assert!(ClusterGraph::new(1, 5, &five_node_edges()).is_ok());
        // dropping e1 = (1,2) isolates node 1
        let without_e1 = [(2, 4), (4, 5), (2, 5), (3, 4)];
        assert!(matches!(ClusterGraph::new(1, 5, &without_e1), Err(Error::Validation(_))));

        let clusters = vec![ClusterGraph::new(1, 1, &[]).unwrap(), ClusterGraph::new(2, 1, &[]).unwrap()];
        assert!(MultiClusterNetwork::new(clusters, &[], 1, 1).is_err());
    }

    #[test]
    fn self_loop_error_names_cluster() {
        let err = ClusterGraph::new(7, 3, &[(2, 2)]).unwrap_err();
        assert!(err.to_string().contains("cluster 7"), "{err}");
    }
}
