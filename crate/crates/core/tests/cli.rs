use std::path::Path;
use std::process::Command;

use cdpg::cli::{
    self, builtin_scenario, export_config, parse_config, parse_config_str, RunArgs, RunConfig, RunSection,
    EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VERIFY_FAILED,
};
use cdpg::scenarios::{commodity_market, emission_dispatch, random_small};
use cdpg::{ConstraintMode, Error};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdpg"))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

#[test]
fn exported_configs_round_trip() {
    let specs = [commodity_market(), emission_dispatch(), random_small(5, 3, 3).unwrap()];
    for spec in specs {
        let run = RunSection { max_iters: Some(123), tol: Some(1e-7), seed: Some(9), ..Default::default() };
        let text = serde_json::to_string(&export_config(&spec, &run).unwrap()).unwrap();
        let (parsed, section) = parse_config_str(&text).unwrap();
        assert_eq!(parsed, spec);
        assert_eq!(section, run);
    }
}

#[test]
fn export_subcommand_output_parses() {
    let out = bin().args(["export", "--scenario", "commodity-market"]).output().unwrap();
    assert!(out.status.success());
    let (spec, _) = parse_config_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(spec, commodity_market());
}

#[test]
fn missing_config_exits_with_error() {
    let out = bin().args(["solve", "--config", "/nonexistent/missing.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.json"), "{stderr}");
}

#[test]
fn malformed_configs_report_every_problem() {
    let err = parse_config_str("{\n  \"network\": [1,\n}").unwrap_err();
    let Error::Config(issues) = err else { panic!("expected config error") };
    assert!(issues[0].starts_with("line 3, column"), "{issues:?}");

    let mut doc = export_config(&commodity_market(), &RunSection::default()).unwrap();
    doc["extra"] = json!(1);
    doc["network"]["clusters"][1]["intra_edges"] = json!([[2, 2], [1, 2], [2, 3]]);
    doc["weights"]["colour"] = json!("blue");
    doc["run"] = json!({ "max_iters": 10, "speed": 3 });
    let Error::Config(issues) = parse_config_str(&doc.to_string()).unwrap_err() else {
        panic!("expected config error")
    };
    let all = issues.join("\n");
    assert!(issues.len() >= 3, "{all}");
    assert!(all.contains("\"extra\""), "{all}");
    assert!(all.contains("colour"), "{all}");
    assert!(all.contains("speed"), "{all}");

    let mut doc = export_config(&commodity_market(), &RunSection::default()).unwrap();
    doc["network"]["clusters"][1]["intra_edges"] = json!([[2, 2], [1, 2], [2, 3]]);
    let Error::Config(issues) = parse_config_str(&doc.to_string()).unwrap_err() else {
        panic!("expected config error")
    };
    let all = issues.join("\n");
    assert!(all.contains("cluster 2") && all.contains("self-loop"), "{all}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let code = cli::main_with_args(["cdpg", "solve", "--config", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_ERROR);
}

#[test]
fn infeasible_config_fails_verification() {
    let spec = random_small(2, 3, 3).unwrap();
    let mut doc = export_config(&spec, &RunSection::default()).unwrap();
    doc["coupling"]["b"] = json!([-100.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = write_json(dir.path(), "infeasible.json", &doc);
    let out = bin().args(["verify", "--config", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_VERIFY_FAILED));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("feasibility") && stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn verify_passes_on_commodity_market() {
    let out = bin().args(["verify", "--scenario", "commodity-market"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{stdout}");
    for check in ["assumptions", "convergence", "oracle agreement", "primal feasibility", "kkt residuals", "ergodic certificate"] {
        assert!(stdout.lines().any(|l| l.starts_with(check) && l.contains("PASS")), "{check}: {stdout}");
    }
}

#[test]
fn verify_random_small_seeds() {
    for seed in 1..=20 {
        let code = cli::main_with_args([
            "cdpg",
            "verify",
            "--scenario",
            "random-small",
            "--seed",
            &seed.to_string(),
            "--out-summary",
            "/dev/null",
        ]);
        assert_eq!(code, EXIT_OK, "seed {seed}");
    }
}

#[test]
fn trace_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let summary = dir.path().join("summary.json");
    let code = cli::main_with_args([
        "cdpg",
        "solve",
        "--scenario",
        "commodity-market",
        "--record-every",
        "300",
        "--out-trace",
        trace.to_str().unwrap(),
        "--out-summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let iters = summary["iterations"].as_u64().unwrap() as usize;

    let mut reader = csv::Reader::from_path(&trace).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..4], ["t", "consensus_residual", "lagrangian", "rel_error_o"]);
    assert_eq!(header.len(), 4 + 9);
    assert_eq!(header[4], "y_hat_1.1.1");
    assert_eq!(header[12], "y_hat_3.2.1");
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let expected = iters / 300 + usize::from(!iters.is_multiple_of(300));
    assert_eq!(rows.len(), expected);
    assert_eq!(rows[0][0].parse::<usize>().unwrap(), 300);
    assert_eq!(rows.last().unwrap()[0].parse::<usize>().unwrap(), iters);
    assert!(rows.iter().all(|r| !r[3].is_empty()));

    // no reference objective: the relative error column stays empty
    let trace2 = dir.path().join("trace2.csv");
    let code = cli::main_with_args([
        "cdpg",
        "solve",
        "--scenario",
        "random-small",
        "--out-trace",
        trace2.to_str().unwrap(),
        "--out-summary",
        "/dev/null",
    ]);
    assert_eq!(code, EXIT_OK);
    let mut reader = csv::Reader::from_path(&trace2).unwrap();
    assert!(reader.records().all(|r| r.unwrap()[3].is_empty()));
}

#[test]
fn identical_runs_write_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("t{k}.csv"));
        let code = cli::main_with_args([
            "cdpg",
            "solve",
            "--scenario",
            "random-small",
            "--seed",
            "11",
            "--record-every",
            "1",
            "--out-trace",
            path.to_str().unwrap(),
            "--out-summary",
            "/dev/null",
        ]);
        assert_eq!(code, EXIT_OK);
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn iteration_cap_exits_not_converged() {
    let code = cli::main_with_args(["cdpg", "solve", "--scenario", "emission-dispatch", "--max-iters", "10", "--out-summary", "/dev/null"]);
    assert_eq!(code, EXIT_NOT_CONVERGED);
}

#[test]
fn invalid_flags_exit_with_error() {
    for args in [
        vec!["cdpg", "solve"],
        vec!["cdpg", "solve", "--scenario", "nowhere"],
        vec!["cdpg", "solve", "--scenario", "commodity-market", "--tol", "0"],
        vec!["cdpg", "solve", "--scenario", "commodity-market", "--record-every", "0"],
        vec!["cdpg", "solve", "--scenario", "commodity-market", "--config", "x.json"],
        vec!["cdpg", "solve", "--scenario", "commodity-market", "--mode", "sideways"],
    ] {
        assert_eq!(cli::main_with_args(args.clone()), EXIT_ERROR, "{args:?}");
    }
}

#[test]
fn mode_selection() {
    let mut doc = export_config(&commodity_market(), &RunSection::default()).unwrap();
    doc["coupling"]["mode"] = json!("equality");
    let (spec, _) = parse_config_str(&doc.to_string()).unwrap();
    assert_eq!(spec.build().unwrap().mode(), ConstraintMode::Equality);

    // equality run meets the supply exactly; the inequality optimum already does
    let dir = tempfile::tempdir().unwrap();
    let path = write_json(dir.path(), "eq.json", &doc);
    let summary = dir.path().join("s.json");
    let code = cli::main_with_args([
        "cdpg",
        "solve",
        "--config",
        path.to_str().unwrap(),
        "--out-summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let total: f64 = s["primal"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 5.0).abs() <= 1e-6);

    let args = RunArgs {
        config: Some(path.clone()),
        mode: Some(cli::ModeArg::Inequality),
        ..Default::default()
    };
    let (_, cfg) = cli::load(&args).unwrap();
    assert_eq!(cfg.mode, Some(ConstraintMode::Inequality));
}

#[test]
fn config_run_section_is_applied() {
    let run = RunSection { max_iters: Some(10), record_every: Some(5), ..Default::default() };
    let doc = export_config(&emission_dispatch(), &run).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = write_json(dir.path(), "c.json", &doc);
    let (spec, section) = parse_config(&path).unwrap();
    assert_eq!(spec, emission_dispatch());
    let args = RunArgs { config: Some(path), record_every: Some(2), ..Default::default() };
    let cfg = RunConfig::resolve(&args, &section).unwrap();
    assert_eq!((cfg.max_iters, cfg.record_every), (10, 2));
    assert!(builtin_scenario("random-small", 3).is_ok());
}
