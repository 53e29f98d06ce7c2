//! Command-line front end: `solve`, `verify` and `export`.
//!
//! Exit codes: 0 success, 1 error, 2 iteration budget exhausted without
//! convergence (`solve`), 3 failed verification or infeasible instance
//! (`verify`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::oracle::{brute_force_primal, kkt_residuals, saddle_point, ergodic_certificate, Certificate, KktResiduals};
use crate::problem::{ConstraintMode, Problem};
use crate::scenarios::{self, AgentSpec, ScenarioSpec, BUILTIN_NAMES};
use crate::solver::{run, RunOutcome, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

/// Recorded `T` values for the ergodic certificate.
pub const CERTIFICATE_CHECKPOINTS: [usize; 3] = [100, 1_000, 10_000];
pub const AGREEMENT_TOL: f64 = 1e-3;
pub const KKT_TOL: f64 = 1e-4;
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "cdpg", version, about = "Cluster-based dual proximal gradient solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solver and write the trace and summary.
    Solve(RunArgs),
    /// Run the solver together with the brute-force, KKT and ergodic checks.
    Verify(RunArgs),
    /// Print a built-in scenario as an editable config document.
    Export {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Inequality,
    Equality,
}

impl From<ModeArg> for ConstraintMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Inequality => ConstraintMode::Inequality,
            ModeArg::Equality => ConstraintMode::Equality,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Built-in scenario: commodity-market, emission-dispatch or random-small.
    #[arg(long, conflicts_with = "config")]
    pub scenario: Option<String>,
    /// JSON config document.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub safety: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
    /// Summary JSON destination; standard output when absent.
    #[arg(long)]
    pub out_summary: Option<PathBuf>,
    /// Seed for random-small.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the coupling constraint type.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

/// `run` section of a config document; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_summary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Builtin(String),
    File(PathBuf),
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub max_iters: usize,
    pub tol: f64,
    pub safety: f64,
    pub record_every: usize,
    pub workers: usize,
    pub out_trace: Option<PathBuf>,
    pub out_summary: Option<PathBuf>,
    pub mode: Option<ConstraintMode>,
    pub seed: u64,
}

impl RunConfig {
    pub const DEFAULT_MAX_ITERS: usize = 200_000;
    pub const DEFAULT_TOL: f64 = 1e-9;
    pub const DEFAULT_RECORD_EVERY: usize = 100;

    /// Command-line flags take precedence over the config's `run` section.
    pub fn resolve(args: &RunArgs, file: &RunSection) -> Result<Self> {
        let scenario = match (&args.scenario, &args.config) {
            (Some(name), None) => ScenarioSource::Builtin(name.clone()),
            (None, Some(path)) => ScenarioSource::File(path.clone()),
            _ => return Err(Error::Config(vec!["exactly one of --scenario and --config is required".into()])),
        };
        let cfg = Self {
            scenario,
            max_iters: args.max_iters.or(file.max_iters).unwrap_or(Self::DEFAULT_MAX_ITERS),
            tol: args.tol.or(file.tol).unwrap_or(Self::DEFAULT_TOL),
            safety: args.safety.or(file.safety).unwrap_or(1.0),
            record_every: args.record_every.or(file.record_every).unwrap_or(Self::DEFAULT_RECORD_EVERY),
            workers: args.workers.or(file.workers).unwrap_or(1),
            out_trace: args.out_trace.clone().or_else(|| file.out_trace.clone()),
            out_summary: args.out_summary.clone().or_else(|| file.out_summary.clone()),
            mode: args.mode.or(file.mode).map(Into::into),
            seed: args.seed.or(file.seed).unwrap_or(1),
        };
        cfg.solver_config().validate()?;
        Ok(cfg)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            safety: self.safety,
            record_every: self.record_every,
            workers: self.workers,
            ..Default::default()
        }
    }
}

const TOP_LEVEL_KEYS: [&str; 7] = ["name", "network", "agents", "coupling", "weights", "reference", "run"];

fn section<T: DeserializeOwned>(map: &Map<String, Value>, key: &str, issues: &mut Vec<String>) -> Option<T> {
    let value = map.get(key)?;
    match serde_json::from_value(value.clone()) {
        Ok(v) => Some(v),
        Err(e) => {
            issues.push(format!("{key}: {e}"));
            None
        }
    }
}

/// Parses and validates a config document, reporting every schema problem
/// at once.
pub fn parse_config_str(text: &str) -> Result<(ScenarioSpec, RunSection)> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(vec![format!("line {}, column {}: {e}", e.line(), e.column())]))?;
    let Value::Object(map) = value else {
        return Err(Error::Config(vec!["top level must be a JSON object".into()]));
    };
    let mut issues = Vec::new();
    for key in map.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            issues.push(format!("unknown top-level key \"{key}\""));
        }
    }
    for key in ["network", "agents", "coupling"] {
        if !map.contains_key(key) {
            issues.push(format!("missing section \"{key}\""));
        }
    }
    let name = section(&map, "name", &mut issues);
    let network = section(&map, "network", &mut issues);
    let coupling = section(&map, "coupling", &mut issues);
    let weights = section(&map, "weights", &mut issues).unwrap_or_default();
    let reference = section(&map, "reference", &mut issues);
    let run = section(&map, "run", &mut issues).unwrap_or_default();
    let mut agents = std::collections::BTreeMap::new();
    match map.get("agents") {
        Some(Value::Object(entries)) => {
            for (key, v) in entries {
                match serde_json::from_value::<AgentSpec>(v.clone()) {
                    Ok(a) => {
                        agents.insert(key.clone(), a);
                    }
                    Err(e) => issues.push(format!("agents.\"{key}\": {e}")),
                }
            }
        }
        Some(_) => issues.push("agents: expected an object keyed \"i.j\"".into()),
        None => {}
    }
    let (Some(network), Some(coupling)) = (network, coupling) else {
        return Err(Error::Config(issues));
    };
    let spec = ScenarioSpec { name, network, agents, coupling, weights, reference };
    if let Err(e) = spec.build() {
        match e {
            Error::Config(more) => issues.extend(more),
            other => issues.push(other.to_string()),
        }
    }
    if issues.is_empty() {
        Ok((spec, run))
    } else {
        Err(Error::Config(issues))
    }
}

pub fn parse_config(path: &Path) -> Result<(ScenarioSpec, RunSection)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_config_str(&text)
}

/// Config document for `spec`, with `run` as its run section.
pub fn export_config(spec: &ScenarioSpec, run: &RunSection) -> Result<Value> {
    let mut value = serde_json::to_value(spec)?;
    if let Value::Object(map) = &mut value {
        if *run != RunSection::default() {
            map.insert("run".into(), serde_json::to_value(run)?);
        }
    }
    Ok(value)
}

pub fn builtin_scenario(name: &str, seed: u64) -> Result<ScenarioSpec> {
    if name == "random-small" {
        return scenarios::random_small(seed, 3, 3);
    }
    scenarios::builtin(name).ok_or_else(|| {
        Error::Config(vec![format!(
            "unknown scenario \"{name}\" (available: {}, random-small)",
            BUILTIN_NAMES.join(", ")
        )])
    })
}

/// Loads the scenario named by `args`, then resolves the run settings.
pub fn load(args: &RunArgs) -> Result<(ScenarioSpec, RunConfig)> {
    let flags_only = RunConfig::resolve(args, &RunSection::default())?;
    let (spec, section) = match &flags_only.scenario {
        ScenarioSource::File(path) => parse_config(path)?,
        ScenarioSource::Builtin(name) => (builtin_scenario(name, flags_only.seed)?, RunSection::default()),
    };
    Ok((spec, RunConfig::resolve(args, &section)?))
}

fn build_problem(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<Problem> {
    let problem = spec.build()?;
    Ok(match cfg.mode {
        Some(mode) => problem.with_mode(mode),
        None => problem,
    })
}

fn reference_value(spec: &ScenarioSpec) -> Option<f64> {
    spec.reference.as_ref().and_then(|r| r.objective).map(|f| -f)
}

/// Largest violation of the coupling constraint at `x`.
pub fn coupling_violation(problem: &Problem, x: &[f64]) -> f64 {
    let c = problem.coupling();
    let ax = &c.matrix * nalgebra::DVector::from_column_slice(x);
    ax.iter()
        .zip(c.rhs.iter())
        .map(|(v, b)| match c.mode {
            ConstraintMode::Inequality => (v - b).max(0.0),
            ConstraintMode::Equality => (v - b).abs(),
        })
        .fold(0.0, f64::max)
}

/// Largest distance of an agent's estimate from its cluster mean.
pub fn primal_spread(out: &RunOutcome) -> f64 {
    let m = out.assembly.agents.first().map_or(0, |a| a.dims.m);
    out.assembly
        .agents
        .iter()
        .zip(&out.agent_primal)
        .map(|(op, y)| {
            let mean = &out.primal[(op.cluster - 1) * m..op.cluster * m];
            y.iter().zip(mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    pub primal: Vec<f64>,
    pub agent_primal: Vec<Vec<f64>>,
    pub primal_objective: f64,
    pub consensus_residual: f64,
    pub coupling_violation: f64,
    pub primal_spread: f64,
    pub lagrangian: f64,
    pub rel_error_o: Option<f64>,
    pub tau_max: f64,
    pub step_sizes: Vec<f64>,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn new(spec: &ScenarioSpec, problem: &Problem, out: &RunOutcome, wall: f64) -> Self {
        Self {
            scenario: spec.name.clone(),
            converged: out.converged,
            iterations: out.iterations,
            primal: out.primal.clone(),
            agent_primal: out.agent_primal.iter().map(|y| y.iter().copied().collect()).collect(),
            primal_objective: problem.primal_objective(&out.primal),
            consensus_residual: out.final_metrics.consensus_residual,
            coupling_violation: coupling_violation(problem, &out.primal),
            primal_spread: primal_spread(out),
            lagrangian: out.final_metrics.lagrangian,
            rel_error_o: out.final_metrics.rel_error,
            tau_max: out.steps.tau_max,
            step_sizes: out.steps.c.clone(),
            wall_time_s: wall,
        }
    }
}

fn write_trace(out: &RunOutcome, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    out.trace.write_csv(BufWriter::new(file))
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

pub fn cmd_solve(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<i32> {
    let problem = build_problem(spec, cfg)?;
    let config = SolverConfig { reference_value: reference_value(spec), ..cfg.solver_config() };
    let start = Instant::now();
    let out = run(&problem, &config)?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(path) = &cfg.out_trace {
        write_trace(&out, path)?;
    }
    emit_json(&Summary::new(spec, &problem, &out, wall), cfg.out_summary.as_deref())?;
    if !out.converged {
        eprintln!("warning: no convergence within {} iterations", cfg.max_iters);
    }
    Ok(if out.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenario: Option<String>,
    pub checks: Vec<CheckLine>,
    pub reference: Option<Vec<f64>>,
    pub kkt: Option<KktResiduals>,
    pub certificate: Option<Certificate>,
    pub summary: Option<Summary>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        self.checks
            .iter()
            .map(|c| format!("{:<width$}  {}  {}\n", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail))
            .collect()
    }
}

/// Runs the solver, the brute-force primal oracle, the KKT residuals and the
/// ergodic certificate.
pub fn verify(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<VerifyReport> {
    let problem = build_problem(spec, cfg)?;
    let mut report = VerifyReport {
        scenario: spec.name.clone(),
        checks: Vec::new(),
        reference: None,
        kkt: None,
        certificate: None,
        summary: None,
    };
    let mut check = |name: &str, passed: bool, detail: String| {
        report.checks.push(CheckLine { name: name.into(), passed, detail });
    };

    let assumptions = match problem.check_assumptions() {
        Ok(a) => a,
        Err(Error::Infeasible(why)) => {
            check("feasibility", false, why);
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    check(
        "assumptions",
        assumptions.strictly_feasible != Some(false),
        format!("min sigma {:.3e}, strictly feasible {:?}", assumptions.min_sigma, assumptions.strictly_feasible),
    );

    let reference = match brute_force_primal(&problem) {
        Ok(r) => Some(r),
        Err(Error::Infeasible(why)) => {
            check("feasibility", false, why);
            return Ok(report);
        }
        Err(Error::Unsupported(why)) => {
            eprintln!("note: brute-force oracle skipped: {why}");
            None
        }
        Err(e) => return Err(e),
    };

    let checkpoints: Vec<usize> = CERTIFICATE_CHECKPOINTS.iter().copied().filter(|&t| t < cfg.max_iters).collect();
    let base = cfg.solver_config();
    let config = SolverConfig {
        min_iters: checkpoints.last().map_or(0, |t| t + 1),
        ergodic_checkpoints: checkpoints,
        reference_value: reference.as_ref().map(|r| -r.objective).or(reference_value(spec)),
        ..base.clone()
    };
    let start = Instant::now();
    let out = run(&problem, &config)?;
    let summary = Summary::new(spec, &problem, &out, start.elapsed().as_secs_f64());

    check("convergence", out.converged, format!("{} iterations", out.iterations));
    if let Some(r) = &reference {
        let gap = r.x_star.iter().zip(&out.primal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check("oracle agreement", gap <= AGREEMENT_TOL, format!("max |x - x_ref| = {gap:.3e}"));
    }
    check(
        "primal feasibility",
        summary.coupling_violation <= FEASIBILITY_TOL,
        format!("coupling violation {:.3e}, spread {:.3e}", summary.coupling_violation, summary.primal_spread),
    );
    let kkt = kkt_residuals(&problem, &out.assembly, &out.steps, &out.state, &out.multipliers)?;
    check(
        "kkt residuals",
        kkt.stationarity <= KKT_TOL && kkt.consensus <= KKT_TOL,
        format!("stationarity {:.3e}, consensus {:.3e}", kkt.stationarity, kkt.consensus),
    );

    let star = saddle_point(&problem, &base)?;
    let (l0, w0) = &out.initial;
    let cert = ergodic_certificate(
        &problem,
        &out.assembly,
        &out.steps,
        &out.checkpoints,
        (l0, w0),
        (&star.state, &star.multipliers),
    )?;
    let detail = if cert.violations.is_empty() {
        format!("Theta {:.4e}, T in {:?}", cert.theta, cert.rows.iter().map(|r| r.t).collect::<Vec<_>>())
    } else {
        format!("Theta {:.4e}, violated at T = {:?}", cert.theta, cert.violations)
    };
    check("ergodic certificate", cert.passed, detail);

    report.reference = reference.map(|r| r.x_star);
    report.kkt = Some(kkt);
    report.certificate = Some(cert);
    report.summary = Some(summary);
    Ok(report)
}

pub fn cmd_verify(spec: &ScenarioSpec, cfg: &RunConfig) -> Result<i32> {
    let report = verify(spec, cfg)?;
    print!("{}", report.table());
    if let Some(path) = &cfg.out_summary {
        emit_json(&report, Some(path))?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Parses `args` and runs the selected command, returning the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => load(args).and_then(|(spec, cfg)| cmd_solve(&spec, &cfg)),
        Command::Verify(args) => match load(args) {
            Err(Error::Infeasible(why)) => {
                println!("feasibility  FAIL  {why}");
                Ok(EXIT_VERIFY_FAILED)
            }
            other => other.and_then(|(spec, cfg)| cmd_verify(&spec, &cfg)),
        },
        Command::Export { scenario, seed } => builtin_scenario(scenario, seed.unwrap_or(1))
            .and_then(|spec| export_config(&spec, &RunSection::default()))
            .and_then(|v| emit_json(&v, None))
            .map(|_| EXIT_OK),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_precedence_and_defaults() {
        let args = RunArgs { scenario: Some("commodity-market".into()), tol: Some(1e-6), ..Default::default() };
        let file = RunSection { tol: Some(1e-3), max_iters: Some(77), ..Default::default() };
        let cfg = RunConfig::resolve(&args, &file).unwrap();
        assert_eq!(cfg.tol, 1e-6);
        assert_eq!(cfg.max_iters, 77);
        assert_eq!(cfg.record_every, RunConfig::DEFAULT_RECORD_EVERY);
        assert_eq!(cfg.workers, 1);

        let bad = RunArgs { scenario: Some("x".into()), max_iters: Some(0), tol: Some(-1.0), ..Default::default() };
        match RunConfig::resolve(&bad, &RunSection::default()) {
            Err(Error::Config(issues)) => assert_eq!(issues.len(), 2),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::resolve(&RunArgs::default(), &RunSection::default()).is_err());
    }

    #[test]
    fn unknown_keys_are_all_reported() {
        let mut doc = export_config(&scenarios::commodity_market(), &RunSection::default()).unwrap();
        doc["extra"] = Value::Bool(true);
        doc["network"]["colour"] = Value::from("red");
        doc["agents"]["1.1"]["h"] = Value::from(1);
        match parse_config_str(&doc.to_string()) {
            Err(Error::Config(issues)) => {
                assert_eq!(issues.len(), 3, "{issues:?}");
                assert!(issues[0].contains("extra"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_config_str("{\n  \"network\": ,\n}") {
            Err(Error::Config(issues)) => assert!(issues[0].starts_with("line 2"), "{issues:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn self_loop_names_cluster() {
        let mut doc = export_config(&scenarios::commodity_market(), &RunSection::default()).unwrap();
        doc["network"]["clusters"][1]["intra_edges"] = serde_json::json!([[2, 2]]);
        let err = parse_config_str(&doc.to_string()).unwrap_err().to_string();
        assert!(err.contains("cluster 2") && err.contains("self-loop"), "{err}");
    }

    #[test]
    fn mode_dispatch() {
        let mut doc = export_config(&scenarios::commodity_market(), &RunSection::default()).unwrap();
        doc["coupling"]["mode"] = Value::from("equality");
        let (spec, _) = parse_config_str(&doc.to_string()).unwrap();
        assert_eq!(spec.build().unwrap().mode(), ConstraintMode::Equality);
        doc["coupling"].as_object_mut().unwrap().remove("mode");
        let (spec, _) = parse_config_str(&doc.to_string()).unwrap();
        assert_eq!(spec.build().unwrap().mode(), ConstraintMode::Inequality);
    }
}
