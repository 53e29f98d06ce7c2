// Certifies the ergodic O(1/T) bounds on both built-in scenarios.

use cdpg::oracle::{kkt_residuals, saddle_point, ergodic_certificate};
use cdpg::scenarios::{commodity_market, emission_dispatch};
use cdpg::solver::{run, SolverConfig};

pub fn run_example() -> cdpg::Result<()> {
    for spec in [commodity_market(), emission_dispatch()] {
        let problem = spec.build()?;
        let base = SolverConfig { max_iters: 10_001, tol: 1e-9, ..Default::default() };
        let star = saddle_point(&problem, &base)?;
        let kkt = kkt_residuals(&problem, &star.assembly, &star.steps, &star.state, &star.multipliers)?;
        let traced = run(
            &problem,
            &SolverConfig { min_iters: 10_001, ergodic_checkpoints: vec![100, 1000, 10_000], ..base },
        )?;
        let (l0, w0) = &traced.initial;
        let cert = ergodic_certificate(
            &problem,
            &traced.assembly,
            &traced.steps,
            &traced.checkpoints,
            (l0, w0),
            (&star.state, &star.multipliers),
        )?;
        println!("{}: saddle kkt {:.2e}/{:.2e}, Theta = {:.6e}", spec.name.unwrap_or_default(), kkt.stationarity, kkt.consensus, cert.theta);
        for row in &cert.rows {
            println!(
                "  T = {:>6}  gap {:.3e}  consensus {:.3e}  bound {:.3e}  (T+1)|Z lambda| {:.3e}  {}",
                row.t,
                row.objective_gap,
                row.consensus_term,
                row.bound,
                row.scaled_residual,
                if row.holds { "ok" } else { "VIOLATED" }
            );
        }
        println!("  certificate {}", if cert.passed { "passed" } else { "failed" });
    }
    Ok(())
}

fn main() -> cdpg::Result<()> {
    run_example()
}
