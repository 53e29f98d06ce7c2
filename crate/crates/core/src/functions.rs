//! Convex function oracles.
//!
//! Smooth parts are strongly convex and expose `argmax_u (v^T u - f(u))`, the
//! gradient of the Fenchel conjugate. Nonsmooth parts expose their proximal
//! mapping; the proximal mapping of the conjugate is obtained through the
//! extended Moreau decomposition, so no conjugate is ever formed explicitly.
//!
//! Every oracle is separable over the `M` coordinates of a block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when deciding membership for indicator-type conjugates.
pub const INDICATOR_TOL: f64 = 1e-12;

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITERS: usize = 200;

/// Serializable description of a catalogued function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `sum_m a_m u_m^2 + b_m u_m`
    Quadratic { a: Vec<f64>, b: Vec<f64> },
    /// `sum_m a_m u_m^2 + b_m u_m + rho1 exp(rho2 u_m) + rho3 u_m`
    QuadExp { a: Vec<f64>, b: Vec<f64>, rho1: f64, rho2: f64, rho3: f64 },
    /// Indicator of `[lower, upper]` (componentwise).
    BoxIndicator { lower: Vec<f64>, upper: Vec<f64> },
    /// `weight * ||u||_order`, order 1 or 2.
    NormPenalty { order: u8, weight: f64 },
    Zero,
}

impl FunctionSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Quadratic { .. } => "quadratic",
            Self::QuadExp { .. } => "quad_exp",
            Self::BoxIndicator { .. } => "box_indicator",
            Self::NormPenalty { .. } => "norm_penalty",
            Self::Zero => "zero",
        }
    }

    /// Validates the entry as a strongly convex smooth part of dimension `dim`.
    pub fn to_smooth(&self, dim: usize) -> Result<SmoothTerm> {
        let check_len = |name: &str, v: &[f64]| {
            if v.len() != dim {
                Err(Error::Validation(format!("{name} has length {}, expected {dim}", v.len())))
            } else {
                Ok(())
            }
        };
        match self {
            Self::Quadratic { a, b } => {
                check_len("a", a)?;
                check_len("b", b)?;
                Ok(SmoothTerm::Quadratic(Quadratic::new(a.clone(), b.clone())?))
            }
            Self::QuadExp { a, b, rho1, rho2, rho3 } => {
                check_len("a", a)?;
                check_len("b", b)?;
                Ok(SmoothTerm::QuadExp(QuadExp::new(a.clone(), b.clone(), *rho1, *rho2, *rho3)?))
            }
            other => Err(Error::Validation(format!(
                "{} cannot serve as the smooth strongly convex part",
                other.kind()
            ))),
        }
    }

    /// Validates the entry as a proximable nonsmooth part of dimension `dim`.
    pub fn to_prox(&self, dim: usize) -> Result<ProxTerm> {
        match self {
            Self::BoxIndicator { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::Validation(format!(
                        "box bounds have lengths {}/{}, expected {dim}",
                        lower.len(),
                        upper.len()
                    )));
                }
                Ok(ProxTerm::Box(BoxIndicator::new(lower.clone(), upper.clone())?))
            }
            Self::NormPenalty { order, weight } => {
                Ok(ProxTerm::Norm(NormPenalty::new(*order, *weight)?))
            }
            Self::Zero => Ok(ProxTerm::Zero),
            other => Err(Error::Validation(format!(
                "{} cannot serve as the proximable part",
                other.kind()
            ))),
        }
    }
}

/// Strongly convex smooth function with a conjugate-argmax oracle.
pub trait SmoothConvex {
    fn eval(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> Vec<f64>;
    /// `argmax_u (v^T u - f(u))`, which equals the gradient of the conjugate at `v`.
    fn conjugate_argmax(&self, v: &[f64]) -> Result<Vec<f64>>;
    /// Strong convexity modulus.
    fn sigma(&self) -> f64;

    /// Fenchel conjugate value `f*(v)`.
    fn conjugate(&self, v: &[f64]) -> Result<f64> {
        let u = self.conjugate_argmax(v)?;
        Ok(dot(v, &u) - self.eval(&u))
    }
}

/// Closed convex function with an inexpensive proximal mapping.
pub trait Proximal {
    /// `argmin_u g(u) + ||u - v||^2 / (2 alpha)`
    fn prox(&self, v: &[f64], alpha: f64) -> Vec<f64>;
    /// Function value; `+inf` outside the domain.
    fn eval(&self, u: &[f64]) -> f64;
    /// Conjugate value `g*(v)`; indicator parts count as zero within
    /// [`INDICATOR_TOL`] and `+inf` beyond it.
    fn conjugate_eval(&self, v: &[f64]) -> f64;

    /// Proximal mapping of the conjugate with step `c`, via Moreau:
    /// `prox^c_{g*}(v) = v - c prox^{1/c}_g(v / c)`.
    fn prox_conjugate(&self, v: &[f64], c: f64) -> Vec<f64> {
        let scaled: Vec<f64> = v.iter().map(|x| x / c).collect();
        let p = self.prox(&scaled, 1.0 / c);
        v.iter().zip(&p).map(|(x, y)| x - c * y).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Validation("quadratic a and b lengths differ".into()));
        }
        if let Some(x) = a.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Validation(format!("quadratic curvature must be > 0, got {x}")));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("quadratic linear term must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a], vec![b])
    }
}

impl SmoothConvex for Quadratic {
    fn eval(&self, u: &[f64]) -> f64 {
        u.iter().zip(self.a.iter().zip(&self.b)).map(|(x, (a, b))| a * x * x + b * x).sum()
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.a.iter().zip(&self.b)).map(|(x, (a, b))| 2.0 * a * x + b).collect()
    }

    fn conjugate_argmax(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.iter().zip(self.a.iter().zip(&self.b)).map(|(x, (a, b))| (x - b) / (2.0 * a)).collect())
    }

    fn sigma(&self) -> f64 {
        2.0 * self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Quadratic plus an exponential term, as used for emission curves.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadExp {
    a: Vec<f64>,
    b: Vec<f64>,
    rho1: f64,
    rho2: f64,
    rho3: f64,
}

impl QuadExp {
    pub fn new(a: Vec<f64>, b: Vec<f64>, rho1: f64, rho2: f64, rho3: f64) -> Result<Self> {
        let quad = Quadratic::new(a, b)?;
        if !(rho1 >= 0.0) || !rho1.is_finite() || !rho2.is_finite() || !rho3.is_finite() {
            return Err(Error::Validation(format!(
                "exponential term needs finite rho and rho1 >= 0, got ({rho1}, {rho2}, {rho3})"
            )));
        }
        Ok(Self { a: quad.a, b: quad.b, rho1, rho2, rho3 })
    }

    fn derivative(&self, m: usize, x: f64) -> f64 {
        2.0 * self.a[m] * x + self.b[m] + self.rho3 + self.rho1 * self.rho2 * (self.rho2 * x).exp()
    }

    fn curvature(&self, m: usize, x: f64) -> f64 {
        2.0 * self.a[m] + self.rho1 * self.rho2 * self.rho2 * (self.rho2 * x).exp()
    }

    /// Solves `f'_m(u) = target` for the strictly increasing scalar derivative.
    fn solve_coordinate(&self, m: usize, target: f64) -> Result<f64> {
        let phi = |x: f64| self.derivative(m, x) - target;
        let ftol = ROOT_TOL * target.abs().max(1.0);
        // Bracket by doubling away from the origin; exp overflow only makes
        // phi infinite with the right sign.
        let (mut lo, mut hi) = if phi(0.0) <= 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
        let mut expansions = 0;
        while phi(lo) > 0.0 || phi(hi) < 0.0 {
            if phi(hi) < 0.0 {
                lo = hi;
                hi *= 2.0;
            } else {
                hi = lo;
                lo *= 2.0;
            }
            expansions += 1;
            if expansions > ROOT_MAX_ITERS {
                return Err(Error::Numerical {
                    context: "conjugate_argmax bracket expansion".into(),
                    residual: phi(lo).abs().min(phi(hi).abs()),
                });
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..ROOT_MAX_ITERS {
            let fx = phi(x);
            if fx.abs() <= ftol {
                return Ok(x);
            }
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= f64::EPSILON * x.abs().max(1.0) {
                return Ok(0.5 * (lo + hi));
            }
            let newton = x - fx / self.curvature(m, x);
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::Numerical { context: "conjugate_argmax root-find".into(), residual: phi(x).abs() })
    }
}

impl SmoothConvex for QuadExp {
    fn eval(&self, u: &[f64]) -> f64 {
        u.iter()
            .enumerate()
            .map(|(m, &x)| {
                self.a[m] * x * x
                    + self.b[m] * x
                    + self.rho1 * (self.rho2 * x).exp()
                    + self.rho3 * x
            })
            .sum()
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(m, &x)| self.derivative(m, x)).collect()
    }

    fn conjugate_argmax(&self, v: &[f64]) -> Result<Vec<f64>> {
        v.iter().enumerate().map(|(m, &t)| self.solve_coordinate(m, t)).collect()
    }

    /// Curvature of the quadratic part only; the exponential term adds
    /// nonnegative curvature everywhere.
    fn sigma(&self) -> f64 {
        2.0 * self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxIndicator {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxIndicator {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Validation("box lower/upper lengths differ".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite()) {
                return Err(Error::Validation("box bounds must be finite".into()));
            }
            if l > u {
                return Err(Error::Validation(format!("box lower {l} exceeds upper {u}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

impl Proximal for BoxIndicator {
    fn prox(&self, v: &[f64], _alpha: f64) -> Vec<f64> {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| x.clamp(*l, *u))
            .collect()
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let inside =
            u.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, h))| x >= l && x <= h);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Support function of the box.
    fn conjugate_eval(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (l * x).max(u * x))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormPenalty {
    order: u8,
    weight: f64,
}

impl NormPenalty {
    pub fn new(order: u8, weight: f64) -> Result<Self> {
        if order != 1 && order != 2 {
            return Err(Error::Validation(format!("norm order must be 1 or 2, got {order}")));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Validation(format!("norm weight must be >= 0, got {weight}")));
        }
        Ok(Self { order, weight })
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl Proximal for NormPenalty {
    fn prox(&self, v: &[f64], alpha: f64) -> Vec<f64> {
        let t = alpha * self.weight;
        match self.order {
            1 => v.iter().map(|x| x.signum() * (x.abs() - t).max(0.0)).collect(),
            _ => {
                let norm = dot(v, v).sqrt();
                if norm <= t {
                    vec![0.0; v.len()]
                } else {
                    let scale = 1.0 - t / norm;
                    v.iter().map(|x| scale * x).collect()
                }
            }
        }
    }

    fn eval(&self, u: &[f64]) -> f64 {
        match self.order {
            1 => self.weight * u.iter().map(|x| x.abs()).sum::<f64>(),
            _ => self.weight * dot(u, u).sqrt(),
        }
    }

    /// Indicator of the dual-norm ball of radius `weight`.
    fn conjugate_eval(&self, v: &[f64]) -> f64 {
        let dual = match self.order {
            1 => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
            _ => dot(v, v).sqrt(),
        };
        if dual <= self.weight + INDICATOR_TOL {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Smooth part of an agent's cost.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothTerm {
    Quadratic(Quadratic),
    QuadExp(QuadExp),
}

impl SmoothTerm {
    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(f) => f.a.len(),
            Self::QuadExp(f) => f.a.len(),
        }
    }
}

impl SmoothConvex for SmoothTerm {
    fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Self::Quadratic(f) => f.eval(u),
            Self::QuadExp(f) => f.eval(u),
        }
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Self::Quadratic(f) => f.gradient(u),
            Self::QuadExp(f) => f.gradient(u),
        }
    }

    fn conjugate_argmax(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Quadratic(f) => f.conjugate_argmax(v),
            Self::QuadExp(f) => f.conjugate_argmax(v),
        }
    }

    fn sigma(&self) -> f64 {
        match self {
            Self::Quadratic(f) => f.sigma(),
            Self::QuadExp(f) => f.sigma(),
        }
    }
}

impl From<&SmoothTerm> for FunctionSpec {
    fn from(term: &SmoothTerm) -> Self {
        match term {
            SmoothTerm::Quadratic(q) => Self::Quadratic { a: q.a.clone(), b: q.b.clone() },
            SmoothTerm::QuadExp(q) => Self::QuadExp {
                a: q.a.clone(),
                b: q.b.clone(),
                rho1: q.rho1,
                rho2: q.rho2,
                rho3: q.rho3,
            },
        }
    }
}

/// Nonsmooth part of an agent's cost.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxTerm {
    Box(BoxIndicator),
    Norm(NormPenalty),
    Zero,
}

impl Proximal for ProxTerm {
    fn prox(&self, v: &[f64], alpha: f64) -> Vec<f64> {
        match self {
            Self::Box(g) => g.prox(v, alpha),
            Self::Norm(g) => g.prox(v, alpha),
            Self::Zero => v.to_vec(),
        }
    }

    fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Self::Box(g) => g.eval(u),
            Self::Norm(g) => g.eval(u),
            Self::Zero => 0.0,
        }
    }

    fn conjugate_eval(&self, v: &[f64]) -> f64 {
        match self {
            Self::Box(g) => g.conjugate_eval(v),
            Self::Norm(g) => g.conjugate_eval(v),
            // conjugate of zero is the indicator of the origin
            Self::Zero => {
                if v.iter().all(|x| x.abs() <= INDICATOR_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

impl From<&ProxTerm> for FunctionSpec {
    fn from(term: &ProxTerm) -> Self {
        match term {
            ProxTerm::Box(b) => {
                Self::BoxIndicator { lower: b.lower.clone(), upper: b.upper.clone() }
            }
            ProxTerm::Norm(n) => Self::NormPenalty { order: n.order, weight: n.weight },
            ProxTerm::Zero => Self::Zero,
        }
    }
}

pub fn conjugate_argmax(f: &impl SmoothConvex, v: &[f64]) -> Result<Vec<f64>> {
    f.conjugate_argmax(v)
}

pub fn prox(g: &impl Proximal, v: &[f64], alpha: f64) -> Vec<f64> {
    g.prox(v, alpha)
}

pub fn prox_conjugate(g: &impl Proximal, v: &[f64], c: f64) -> Vec<f64> {
    g.prox_conjugate(v, c)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
