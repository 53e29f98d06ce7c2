// Exports a built-in scenario as a config document, edits it, and solves it.

use cdpg::cli::{export_config, parse_config_str, RunSection};
use cdpg::scenarios::commodity_market;
use cdpg::solver::{run, SolverConfig};

pub fn run_example() -> cdpg::Result<()> {
    let run_section = RunSection { max_iters: Some(100_000), tol: Some(1e-9), ..Default::default() };
    let mut doc = export_config(&commodity_market(), &run_section)?;

    // tighter supply cap
    doc["coupling"]["b"] = serde_json::json!([4.0]);
    doc["name"] = serde_json::json!("market-supply-4");
    doc.as_object_mut().unwrap().remove("reference");
    let text = serde_json::to_string_pretty(&doc)?;
    println!("{text}");

    let (spec, section) = parse_config_str(&text)?;
    let problem = spec.build()?;
    let config = SolverConfig {
        max_iters: section.max_iters.unwrap_or(100_000),
        tol: section.tol.unwrap_or(1e-9),
        record_every: 1000,
        ..Default::default()
    };
    let out = run(&problem, &config)?;
    let total: f64 = out.primal.iter().sum();
    println!("converged: {} after {} iterations", out.converged, out.iterations);
    println!("primal {:?}, total supply {total:.6}", out.primal);
    Ok(())
}

fn main() -> cdpg::Result<()> {
    run_example()
}
