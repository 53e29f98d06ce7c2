//! Independent checks: a brute-force primal solver, KKT residuals in compact
//! form, and the ergodic rate certificate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{ProxTerm, Proximal, SmoothConvex};
use crate::problem::{ConstraintMode, Problem};
use crate::solver::{
    dual_objective, grad_p, run, Assembly, DualState, EdgeMultipliers, ErgodicCheckpoint, RunOutcome, SolverConfig,
    StepSizes,
};

const PG_MAX_ITERS: usize = 1_000_000;
const PG_TOL: f64 = 1e-14;
const FEAS_TOL: f64 = 1e-8;
const DYKSTRA_ITERS: usize = 100_000;
const MAX_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMethod {
    ProjectedGradient,
    Grid,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    /// `F(x*)` in the minimization convention.
    pub objective: f64,
    pub method: ReferenceMethod,
}

/// Aggregated primal `F(x) = sum_ij f_ij(x_i)` restricted to the box domain.
struct Aggregate<'a> {
    problem: &'a Problem,
    m: usize,
}

impl Aggregate<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.problem
            .agents()
            .iter()
            .enumerate()
            .map(|(i, c)| c.iter().map(|a| a.smooth.eval(&x[i * self.m..(i + 1) * self.m])).sum::<f64>())
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (i, cluster) in self.problem.agents().iter().enumerate() {
            for a in cluster {
                let gi = a.smooth.gradient(&x[i * self.m..(i + 1) * self.m]);
                for (k, v) in gi.into_iter().enumerate() {
                    g[i * self.m + k] += v;
                }
            }
        }
        g
    }
}

/// Euclidean projection onto `box ∩ {A x <= b}` (or `= b`).
struct FeasibleSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    mode: ConstraintMode,
}

impl FeasibleSet {
    fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let ax = &self.a * DVector::from_column_slice(x);
        let coupling = ax
            .iter()
            .zip(self.b.iter())
            .map(|(v, b)| match self.mode {
                ConstraintMode::Inequality => (v - b).max(0.0),
                ConstraintMode::Equality => (v - b).abs(),
            })
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max);
        coupling.max(bounds)
    }

    fn project(&self, z: &[f64]) -> Vec<f64> {
        if self.a.nrows() == 1 {
            self.project_single_row(z)
        } else {
            self.project_dykstra(z)
        }
    }

    /// `x(nu) = clamp(z - nu a)`; `a^T x(nu)` is nonincreasing in `nu`, so
    /// bisection on `nu` finds the active multiplier.
    fn project_single_row(&self, z: &[f64]) -> Vec<f64> {
        let a: Vec<f64> = self.a.row(0).iter().copied().collect();
        let b = self.b[0];
        let x_of = |nu: f64| -> Vec<f64> {
            let shifted: Vec<f64> = z.iter().zip(&a).map(|(zk, ak)| zk - nu * ak).collect();
            self.clamp(&shifted)
        };
        let ax = |x: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let free = x_of(0.0);
        let r0 = ax(&free) - b;
        if r0 == 0.0 || (self.mode == ConstraintMode::Inequality && r0 < 0.0) {
            return free;
        }
        let (mut lo, mut hi) = if r0 > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
        for _ in 0..2000 {
            if ax(&x_of(hi)) - b <= 0.0 && ax(&x_of(lo)) - b >= 0.0 {
                break;
            }
            if r0 > 0.0 {
                hi *= 2.0;
            } else {
                lo *= 2.0;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if ax(&x_of(mid)) - b > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x_of(0.5 * (lo + hi))
    }

    fn project_dykstra(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let sets = self.a.nrows() + 1;
        let mut x = z.to_vec();
        let mut incr = vec![vec![0.0; n]; sets];
        for _ in 0..DYKSTRA_ITERS {
            let prev = x.clone();
            for s in 0..sets {
                let y: Vec<f64> = x.iter().zip(&incr[s]).map(|(a, b)| a + b).collect();
                let p = if s == 0 {
                    self.clamp(&y)
                } else {
                    let row = self.a.row(s - 1);
                    let r: f64 = row.iter().zip(&y).map(|(a, v)| a * v).sum::<f64>() - self.b[s - 1];
                    let nn = row.norm_squared();
                    let active = match self.mode {
                        ConstraintMode::Inequality => r > 0.0,
                        ConstraintMode::Equality => true,
                    };
                    if active && nn > 0.0 {
                        y.iter().zip(row.iter()).map(|(v, a)| v - r / nn * a).collect()
                    } else {
                        y.clone()
                    }
                };
                incr[s] = y.iter().zip(&p).map(|(a, b)| a - b).collect();
                x = p;
            }
            let change = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if change <= 1e-15 {
                break;
            }
        }
        x
    }
}

/// Minimizes the aggregated primal over the feasible set by projected
/// gradient with Armijo backtracking, then polishes with a shrinking
/// coordinate pattern search starting at width `1e-4`.
pub fn brute_force_primal(problem: &Problem) -> Result<ReferenceSolution> {
    let m = problem.block_dim();
    let n = problem.network().n_clusters() * m;
    if n > MAX_DIM {
        return Err(Error::Unsupported(format!("brute force handles N M <= {MAX_DIM}, got {n}")));
    }
    for (i, cluster) in problem.agents().iter().enumerate() {
        if cluster.iter().any(|a| matches!(a.nonsmooth, ProxTerm::Norm(_))) {
            return Err(Error::Unsupported(format!(
                "brute force handles box and zero nonsmooth terms only (cluster {})",
                i + 1
            )));
        }
    }
    if problem.coupling().rhs.len() == 1 {
        // decides feasibility of box ∩ halfspace exactly
        problem.check_assumptions()?;
    }
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 1..=problem.network().n_clusters() {
        let (l, h) = problem.cluster_domain(i)?;
        lo.extend(l);
        hi.extend(h);
    }
    let set = FeasibleSet {
        lo,
        hi,
        a: problem.coupling().matrix.clone(),
        b: problem.coupling().rhs.clone(),
        mode: problem.mode(),
    };
    let f = Aggregate { problem, m };

    let start: Vec<f64> = set.lo.iter().zip(&set.hi).map(|(l, h)| finite_mid(*l, *h)).collect();
    let mut x = set.project(&start);
    if set.violation(&x) > FEAS_TOL {
        return Err(Error::Infeasible(format!(
            "no point satisfies the box and coupling constraints (violation {:e})",
            set.violation(&x)
        )));
    }
    let mut fx = f.value(&x);
    let mut step = 1.0;
    for _ in 0..PG_MAX_ITERS {
        let g = f.gradient(&x);
        let mut accepted = None;
        for _ in 0..100 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let xn = set.project(&trial);
            let d: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let sq: f64 = d.iter().map(|v| v * v).sum();
            let fn_ = f.value(&xn);
            if fn_ <= fx + lin + sq / (2.0 * step) + 1e-15 * fx.abs().max(1.0) {
                accepted = Some((xn, fn_, sq.sqrt()));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, moved)) = accepted else { break };
        x = xn;
        fx = fn_;
        if moved <= PG_TOL * x.iter().fold(1.0f64, |a, v| a.max(v.abs())) {
            break;
        }
        step *= 2.0;
    }

    pattern_refine(&f, &set, &mut x, &mut fx);
    Ok(ReferenceSolution { x_star: x, objective: fx, method: ReferenceMethod::ProjectedGradient })
}

fn finite_mid(l: f64, h: f64) -> f64 {
    match (l.is_finite(), h.is_finite()) {
        (true, true) => 0.5 * (l + h),
        (true, false) => l,
        (false, true) => h,
        (false, false) => 0.0,
    }
}

fn pattern_refine(f: &Aggregate, set: &FeasibleSet, x: &mut Vec<f64>, fx: &mut f64) {
    let n = x.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for p in 0..n {
        let mut e = vec![0.0; n];
        e[p] = 1.0;
        dirs.push(e);
        for q in p + 1..n {
            let mut e = vec![0.0; n];
            e[p] = 1.0;
            e[q] = -1.0;
            dirs.push(e);
        }
    }
    let mut width = 1e-4;
    while width >= 1e-10 {
        let mut improved = true;
        while improved {
            improved = false;
            for d in &dirs {
                for sign in [1.0, -1.0] {
                    let trial: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + sign * width * b).collect();
                    if set.violation(&trial) > 0.0 {
                        continue;
                    }
                    let ft = f.value(&trial);
                    if ft < *fx {
                        *x = trial;
                        *fx = ft;
                        improved = true;
                    }
                }
            }
        }
        width *= 0.1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// Fixed-point residual of the proximal gradient map on the dual.
    pub stationarity: f64,
    /// `||Z lambda||`.
    pub consensus: f64,
}

/// Residuals of the saddle-point conditions, evaluated with the stacked
/// operators:
/// `||lambda - prox^S_Q[lambda - S (grad P + Z^T omega + Z^T D Z lambda)]||`
/// and `||Z lambda||`.
pub fn kkt_residuals(
    problem: &Problem,
    assembly: &Assembly,
    steps: &StepSizes,
    lambda: &DualState,
    omega: &EdgeMultipliers,
) -> Result<KktResiduals> {
    let lam = lambda.stacked();
    let w = omega.stacked();
    let z = &assembly.z;
    let zl = z * &lam;
    let mut grad = DVector::zeros(assembly.dual_len);
    for ((op, l), &off) in assembly.agents.iter().zip(&lambda.lambda).zip(&assembly.offsets) {
        let g = grad_p(op, &problem.agent(op.cluster, op.index).smooth, l)?;
        grad.rows_mut(off, g.len()).copy_from(&g);
    }
    let full = grad + z.tr_mul(&w) + z.tr_mul(&zl.component_mul(&assembly.penalty));
    let mut stat = 0.0;
    for ((op, &c), &off) in assembly.agents.iter().zip(&steps.c).zip(&assembly.offsets) {
        let d = op.dims;
        let arg: DVector<f64> = lam.rows(off, d.len()) - full.rows(off, d.len()) * c;
        let g = &problem.agent(op.cluster, op.index).nonsmooth;
        let mut p = arg.clone();
        let mu = g.prox_conjugate(arg.rows(0, d.m).as_slice(), c);
        p.rows_mut(0, d.m).copy_from_slice(&mu);
        if problem.mode() == ConstraintMode::Inequality {
            let t = d.theta();
            p.rows_mut(t.start, t.len()).apply(|x| *x = x.max(0.0));
        }
        stat += (lam.rows(off, d.len()) - p).norm_squared();
    }
    Ok(KktResiduals { stationarity: stat.sqrt(), consensus: zl.norm() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRow {
    pub t: usize,
    /// `|Phi(lambda-bar^{T+1}) - Phi(lambda*)|`
    pub objective_gap: f64,
    /// `||omega*|| ||Z lambda-bar^{T+1}||`
    pub consensus_term: f64,
    /// `Theta / (T + 1)`
    pub bound: f64,
    /// `(T + 1) ||Z lambda-bar^{T+1}||`
    pub scaled_residual: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub theta: f64,
    pub rows: Vec<CertificateRow>,
    /// Upper bound on `(T + 1) ||Z lambda-bar^{T+1}||` implied by the
    /// consensus inequality, `Theta / ||omega*||`.
    pub residual_bound: Option<f64>,
    pub residual_bounded: bool,
    /// `T` values at which an inequality fails.
    pub violations: Vec<usize>,
    pub passed: bool,
}

/// `Theta = ||omega*||^2_{4 D^{-1}} + ||omega^0||^2_{D^{-1}}
///        + ||lambda* - lambda^0||^2_{S^{-1}/2 - Z^T D Z / 2}`.
pub fn theta_constant(
    assembly: &Assembly,
    steps: &StepSizes,
    initial: (&DualState, &EdgeMultipliers),
    saddle: (&DualState, &EdgeMultipliers),
) -> f64 {
    let inv_d = assembly.penalty.map(|p| 1.0 / p);
    let w_star = saddle.1.stacked();
    let w0 = initial.1.stacked();
    let dl = saddle.0.stacked() - initial.0.stacked();
    let mut inv_s = DVector::zeros(assembly.dual_len);
    for ((op, &c), &off) in assembly.agents.iter().zip(&steps.c).zip(&assembly.offsets) {
        inv_s.rows_mut(off, op.dims.len()).fill(1.0 / c);
    }
    let zdl = &assembly.z * &dl;
    let quad = 0.5 * dl.dot(&inv_s.component_mul(&dl)) - 0.5 * zdl.dot(&assembly.penalty.component_mul(&zdl));
    4.0 * w_star.dot(&inv_d.component_mul(&w_star)) + w0.dot(&inv_d.component_mul(&w0)) + quad
}

/// Reference saddle point from an extended run: ten times the iteration
/// budget and a hundredth of the tolerance of `base`, stopping only once the
/// dual iterate itself has settled.
pub fn saddle_point(problem: &Problem, base: &SolverConfig) -> Result<RunOutcome> {
    let config = SolverConfig {
        max_iters: base.max_iters.saturating_mul(10),
        tol: base.tol / 100.0,
        dual_tol: Some(base.tol / 100.0),
        min_iters: 0,
        record_every: base.max_iters.saturating_mul(10),
        initial: None,
        ergodic_checkpoints: Vec::new(),
        ..base.clone()
    };
    run(problem, &config)
}

/// Checks both ergodic inequalities at every checkpoint.
pub fn ergodic_certificate(
    problem: &Problem,
    assembly: &Assembly,
    steps: &StepSizes,
    checkpoints: &[ErgodicCheckpoint],
    initial: (&DualState, &EdgeMultipliers),
    saddle: (&DualState, &EdgeMultipliers),
) -> Result<Certificate> {
    let theta = theta_constant(assembly, steps, initial, saddle);
    let phi_star = dual_objective(problem, assembly, saddle.0)?.total();
    let w_norm = saddle.1.stacked().norm();
    let residual_bound = (w_norm > 0.0).then(|| theta / w_norm);
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut residual_bounded = true;
    for cp in checkpoints {
        let phi = dual_objective(problem, assembly, &cp.mean)?;
        let gap = if phi.indicator_violated { f64::INFINITY } else { (phi.total() - phi_star).abs() };
        let zres = (&assembly.z * cp.mean.stacked()).norm();
        let bound = theta / (cp.t + 1) as f64;
        let consensus_term = w_norm * zres;
        let holds = gap <= bound && consensus_term <= bound;
        let scaled = (cp.t + 1) as f64 * zres;
        if let Some(k) = residual_bound {
            residual_bounded &= scaled <= k;
        }
        if !holds {
            violations.push(cp.t);
        }
        rows.push(CertificateRow {
            t: cp.t,
            objective_gap: gap,
            consensus_term,
            bound,
            scaled_residual: scaled,
            holds,
        });
    }
    let passed = violations.is_empty() && residual_bounded && !rows.is_empty();
    Ok(Certificate { theta, rows, residual_bound, residual_bounded, violations, passed })
}
