// Economic emission dispatch with an equality demand constraint.

use cdpg::scenarios::emission_dispatch;
use cdpg::solver::{run, SolverConfig};

pub fn run_example() -> cdpg::Result<()> {
    let problem = emission_dispatch().build()?;
    let config = SolverConfig { max_iters: 200_000, tol: 1e-9, record_every: 1000, ..Default::default() };
    let out = run(&problem, &config)?;
    let total: f64 = out.primal.iter().sum();
    println!("converged: {} after {} iterations", out.converged, out.iterations);
    println!("dispatch:  {:?} (total {total:.9})", out.primal);
    println!("residual:  {:e}", out.final_metrics.consensus_residual);
    Ok(())
}

fn main() -> cdpg::Result<()> {
    run_example()
}
