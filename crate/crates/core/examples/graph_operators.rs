// Laplacians, incidence matrices and neighbor sets of a two-cluster network.

use cdpg::graph::{ClusterGraph, MultiClusterNetwork};

pub fn run_example() -> cdpg::Result<()> {
    let c1 = ClusterGraph::new(1, 3, &[(1, 2), (2, 3)])?;
    let c2 = ClusterGraph::new(2, 2, &[(1, 2)])?;
    let net = MultiClusterNetwork::new(vec![c1, c2], &[(2, 4), (1, 2), (4, 5), (2, 5), (3, 4)], 1, 1)?;

    let l = net.global_laplacian();
    let g = net.global_incidence();
    println!("global Laplacian:{l}");
    println!("incidence G (rows = agents, columns = edges):{g}");
    println!("|L - G G^T| = {:e}", (&l - &g * g.transpose()).amax());

    for (i, j) in net.agents() {
        println!("agent ({i},{j}) -> global label {}", net.relabel(i, j)?);
    }
    let sets = net.neighbor_sets();
    for ((i, j), nb) in sets.iter() {
        println!(
            "({i},{j}): succ {:?} pred {:?} global succ {:?} global pred {:?}",
            nb.succ, nb.pred, nb.global_succ, nb.global_pred
        );
    }
    Ok(())
}

fn main() -> cdpg::Result<()> {
    run_example()
}
