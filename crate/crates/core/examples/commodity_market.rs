// Solves the three-region commodity market and compares with the known optimum.

use cdpg::scenarios::commodity_market;
use cdpg::solver::{run, SolverConfig};

pub fn run_example() -> cdpg::Result<()> {
    let spec = commodity_market();
    let problem = spec.build()?;
    let reference = spec.reference.as_ref().expect("market has a reference");
    let config = SolverConfig {
        max_iters: 200_000,
        tol: 1e-9,
        record_every: 1000,
        reference_value: reference.objective.map(|f| -f),
        ..Default::default()
    };
    let out = run(&problem, &config)?;
    println!("converged: {} after {} iterations", out.converged, out.iterations);
    println!("primal:    {:?}", out.primal);
    println!("reference: {:?}", reference.x_star);
    println!("residual:  {:e}", out.final_metrics.consensus_residual);
    if let Some(o) = out.final_metrics.rel_error {
        println!("relative error o: {o:e}");
    }
    Ok(())
}

fn main() -> cdpg::Result<()> {
    run_example()
}
