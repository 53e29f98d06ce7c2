use std::io::Write;

use nalgebra::DVector;

use super::assembly::{assemble, lipschitz_h, step_sizes, Assembly, StepSizes, TauMode};
use super::iterate::cdpg_iterate;
use super::metrics::{metrics, Metrics};
use super::state::{DualState, EdgeMultipliers, ErgodicAverage};
use crate::error::{Error, Result};
use crate::problem::Problem;

/// Iterations between two checks of the stopping rule.
pub const STOP_WINDOW: usize = 50;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once the consensus residual and the change of the recovered
    /// primal over one window both fall below `tol`.
    pub tol: f64,
    /// An early stop also requires the dual iterate to move less than this
    /// over one window; `tol` when absent.
    pub dual_tol: Option<f64>,
    /// No early stop before this many iterations.
    pub min_iters: usize,
    pub safety: f64,
    pub tau_mode: TauMode,
    pub record_every: usize,
    pub workers: usize,
    /// `(lambda^0, omega^0)`; zeros when absent.
    pub initial: Option<(DualState, EdgeMultipliers)>,
    /// Optimal dual value used for the relative error column.
    pub reference_value: Option<f64>,
    /// Values of `T` at which the ergodic mean `lambda-bar^{T+1}` is kept.
    pub ergodic_checkpoints: Vec<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-8,
            dual_tol: None,
            min_iters: 0,
            safety: 1.0,
            tau_mode: TauMode::PowerIteration,
            record_every: 10,
            workers: 1,
            initial: None,
            reference_value: None,
            ergodic_checkpoints: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.max_iters == 0 {
            issues.push("max_iters must be at least 1".to_string());
        }
        if !(self.tol > 0.0) {
            issues.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.record_every == 0 {
            issues.push("record_every must be at least 1".to_string());
        }
        if !(self.safety > 0.0 && self.safety.is_finite()) {
            issues.push(format!("safety must be positive, got {}", self.safety));
        }
        if self.workers == 0 {
            issues.push("workers must be at least 1".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub consensus_residual: f64,
    pub lagrangian: f64,
    pub rel_error: Option<f64>,
    /// `y_hat` of every agent, flattened in relabeled order.
    pub primal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    /// `i.j.m` labels of the primal columns.
    pub primal_labels: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    fn new(assembly: &Assembly) -> Self {
        let primal_labels = assembly
            .agents
            .iter()
            .flat_map(|a| (1..=a.dims.m).map(move |m| format!("{}.{}.{m}", a.cluster, a.index)))
            .collect();
        Self { primal_labels, rows: Vec::new() }
    }

    fn push(&mut self, t: usize, m: &Metrics) {
        self.rows.push(TraceRow {
            t,
            consensus_residual: m.consensus_residual,
            lagrangian: m.lagrangian,
            rel_error: m.rel_error,
            primal: m.primal.iter().flat_map(|y| y.iter().copied()).collect(),
        });
    }

    pub fn header(&self) -> Vec<String> {
        let fixed = ["t", "consensus_residual", "lagrangian", "rel_error_o"];
        fixed
            .iter()
            .map(|s| s.to_string())
            .chain(self.primal_labels.iter().map(|l| format!("y_hat_{l}")))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        for row in &self.rows {
            let mut rec = vec![
                row.t.to_string(),
                row.consensus_residual.to_string(),
                row.lagrangian.to_string(),
                row.rel_error.map_or_else(String::new, |o| o.to_string()),
            ];
            rec.extend(row.primal.iter().map(|y| y.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ergodic mean `lambda-bar^{T+1}` captured after `T + 1` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicCheckpoint {
    pub t: usize,
    pub mean: DualState,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: SolverTrace,
    pub state: DualState,
    pub multipliers: EdgeMultipliers,
    pub initial: (DualState, EdgeMultipliers),
    pub final_metrics: Metrics,
    /// Recovered `y_ij` per agent, relabeled order.
    pub agent_primal: Vec<DVector<f64>>,
    /// Per-cluster mean of the recovered `y_ij`, stacked `x_1, ..., x_N`.
    pub primal: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub assembly: Assembly,
    pub steps: StepSizes,
    pub checkpoints: Vec<ErgodicCheckpoint>,
}

/// Assembled operators plus step sizes, ready to iterate.
pub fn prepare(problem: &Problem, safety: f64, tau_mode: TauMode) -> Result<(Assembly, StepSizes)> {
    let assembly = assemble(problem)?;
    let h = assembly.agents.iter().map(lipschitz_h).collect::<Result<Vec<_>>>()?;
    let steps = step_sizes(&assembly, &h, safety, tau_mode)?;
    Ok((assembly, steps))
}

pub fn run(problem: &Problem, config: &SolverConfig) -> Result<RunOutcome> {
    config.validate()?;
    let (assembly, steps) = prepare(problem, config.safety, config.tau_mode)?;
    let pool = if config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
        Some(pool)
    } else {
        None
    };

    let (mut state, mut omega) = match &config.initial {
        Some((l, w)) => (l.clone(), w.clone()),
        None => (DualState::zeros(&assembly), EdgeMultipliers::zeros(&assembly)),
    };
    check_shapes(&assembly, &state, &omega)?;
    state.iteration = 0;
    let initial = (state.clone(), omega.clone());

    let mut trace = SolverTrace::new(&assembly);
    let mut ergodic = ErgodicAverage::new(&state);
    let mut checkpoints = Vec::new();
    let mut window_start: Option<(Vec<f64>, DVector<f64>)> = None;
    let mut converged = false;
    let mut last = None;

    for t in 1..=config.max_iters {
        let (next, next_omega) = cdpg_iterate(problem, &assembly, &steps, &state, &omega, pool.as_ref())?;
        state = next;
        omega = next_omega;
        ergodic.push(&state);
        if config.ergodic_checkpoints.contains(&(t - 1)) {
            checkpoints.push(ErgodicCheckpoint { t: t - 1, mean: ergodic.mean() });
        }

        let record = t % config.record_every == 0;
        let check = t % STOP_WINDOW == 0;
        if !record && !check {
            continue;
        }
        let m = metrics(problem, &assembly, &state, &omega, config.reference_value)?;
        if record {
            trace.push(t, &m);
        }
        if check {
            let flat: Vec<f64> = m.primal.iter().flat_map(|y| y.iter().copied()).collect();
            let dual = state.stacked();
            if let Some((prev, prev_dual)) = &window_start {
                let change = prev.iter().zip(&flat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let dual_ok = (&dual - prev_dual).amax() <= config.dual_tol.unwrap_or(config.tol);
                if t >= config.min_iters && m.consensus_residual <= config.tol && change <= config.tol && dual_ok {
                    converged = true;
                }
            }
            window_start = Some((flat, dual));
        }
        last = Some((t, m));
        if converged {
            break;
        }
    }

    let iterations = state.iteration;
    let final_metrics = match last {
        Some((t, m)) if t == iterations => m,
        _ => metrics(problem, &assembly, &state, &omega, config.reference_value)?,
    };
    if trace.rows.last().map(|r| r.t) != Some(iterations) {
        trace.push(iterations, &final_metrics);
    }
    let agent_primal = final_metrics.primal.clone();
    let primal = cluster_means(&assembly, &agent_primal);
    Ok(RunOutcome {
        trace,
        state,
        multipliers: omega,
        initial,
        final_metrics,
        agent_primal,
        primal,
        converged,
        iterations,
        assembly,
        steps,
        checkpoints,
    })
}

fn check_shapes(assembly: &Assembly, state: &DualState, omega: &EdgeMultipliers) -> Result<()> {
    let ok = state.lambda.len() == assembly.n_agents()
        && state.lambda.iter().zip(&assembly.agents).all(|(l, a)| l.len() == a.dims.len())
        && omega.xi.len() == assembly.intra_edges.len()
        && omega.zeta.len() == assembly.global_edges.len()
        && omega.xi.iter().zip(&assembly.intra_edges).all(|(x, e)| x.len() == assembly.intra_width(e))
        && omega.zeta.iter().all(|z| z.len() == assembly.global_width());
    if ok {
        Ok(())
    } else {
        Err(Error::Contract("initial dual state does not match the assembled operators".into()))
    }
}

/// Per-cluster average of the agents' primal estimates.
pub fn cluster_means(assembly: &Assembly, agent_primal: &[DVector<f64>]) -> Vec<f64> {
    let m = assembly.agents.first().map_or(0, |a| a.dims.m);
    let n_clusters = assembly.agents.last().map_or(0, |a| a.cluster);
    let mut sums = vec![0.0; n_clusters * m];
    let mut counts = vec![0usize; n_clusters];
    for (op, y) in assembly.agents.iter().zip(agent_primal) {
        counts[op.cluster - 1] += 1;
        for k in 0..m {
            sums[(op.cluster - 1) * m + k] += y[k];
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        for k in 0..m {
            sums[i * m + k] /= c as f64;
        }
    }
    sums
}
