// Random small instances: CDPG against the centralized brute-force oracle.

use cdpg::oracle::brute_force_primal;
use cdpg::scenarios::random_small;
use cdpg::solver::{run, SolverConfig};

pub fn run_example() -> cdpg::Result<()> {
    let config = SolverConfig { max_iters: 200_000, tol: 1e-10, record_every: 10_000, ..Default::default() };
    let mut worst = 0.0f64;
    for seed in 1..=20 {
        let problem = random_small(seed, 3, 3)?.build()?;
        let reference = brute_force_primal(&problem)?;
        let out = run(&problem, &config)?;
        let err = out.primal.iter().zip(&reference.x_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        println!(
            "seed {seed:>2}  agents {:>2}  iters {:>6}  max |x - x*| = {err:.2e}",
            problem.network().n_agents(),
            out.iterations
        );
    }
    println!("worst deviation {worst:.2e}");
    Ok(())
}

fn main() -> cdpg::Result<()> {
    run_example()
}
