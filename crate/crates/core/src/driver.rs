//! Outer regularization loop: solve the regularized NLP for `t_k`, warm-start
//! the next solve from its solution, shrink `t` by `rho2`, and stop when any of
//!
//! 1. `t <= t_min`
//! 2. `k = k_max`
//! 3. `|x_k - x_{k-1}| / |x_k| <= eps1`
//! 4. the complementarity measure `<= eps2`
//!
//! holds. The measure in 4 is `max(|g|, comp)` where `g` is the gradient of
//! the Lagrangian of the regularized problem with the regularization rows left
//! out (equivalently the force the regularization rows exert on `x`), and
//! `comp` is the complementarity residual.

use log::{debug, info};
use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::model::{residuals, MpccProblem, NlpProblem, Point, RowOrigin};
use crate::regularize::{build_regularized, RegParam, Scheme};
use crate::sqp::{sqp_solve, NlpResult, NlpStatus, SqpConfig};
use crate::stationarity::MpccMultipliers;

/// Constraint violation allowed in a converged result.
pub const FEASIBILITY_TOL: f64 = 1e-6;
const ELASTIC_RETRY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverConfig {
    pub t0: f64,
    pub rho2: f64,
    pub t_min: f64,
    pub k_max: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub comp_tol: f64,
    pub inner: SqpConfig,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            t0: 0.1,
            rho2: 0.1,
            t_min: 1e-8,
            k_max: 8,
            eps1: 1e-6,
            eps2: 1e-6,
            comp_tol: 1e-4,
            inner: SqpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("rho2 must lie in (0, 1), got {0}")]
    Rho2(f64),
    #[error("need t0 > t_min > 0, got t0 = {t0}, t_min = {t_min}")]
    Schedule { t0: f64, t_min: f64 },
    #[error("k_max must be at least 1")]
    KMax,
    #[error("{0} must be positive")]
    Tolerance(&'static str),
    #[error(transparent)]
    Inner(#[from] crate::sqp::SqpConfigError),
}

impl DriverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.rho2 > 0.0 && self.rho2 < 1.0) {
            return Err(ConfigError::Rho2(self.rho2));
        }
        if !(self.t_min > 0.0 && self.t0 > self.t_min && self.t0.is_finite()) {
            return Err(ConfigError::Schedule {
                t0: self.t0,
                t_min: self.t_min,
            });
        }
        if self.k_max == 0 {
            return Err(ConfigError::KMax);
        }
        for (name, v) in [("eps1", self.eps1), ("eps2", self.eps2), ("comp_tol", self.comp_tol)] {
            if !(v > 0.0) {
                return Err(ConfigError::Tolerance(name));
            }
        }
        self.inner.validate()?;
        Ok(())
    }

    /// `t_k = t0 * rho2^k`.
    pub fn t_at(&self, k: usize) -> f64 {
        self.t0 * self.rho2.powi(k as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TMin,
    KMax,
    RelativeStep,
    LagrangianGradient,
    InnerFailure,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::TMin => "t_min",
            StopReason::KMax => "k_max",
            StopReason::RelativeStep => "relative_step",
            StopReason::LagrangianGradient => "lagrangian_gradient",
            StopReason::InnerFailure => "inner_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::NotConverged => "NC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterIterate {
    pub k: usize,
    pub t: f64,
    pub inner_iterations: usize,
    pub relative_step: f64,
    pub lagrangian_grad_norm: f64,
    pub complementarity: f64,
    pub inner_status: NlpStatus,
    pub elastic_retry: bool,
    pub x: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub problem: String,
    pub scheme: Scheme,
    pub x: Point,
    pub f: f64,
    pub multipliers: MpccMultipliers,
    pub status: SolveStatus,
    pub it_int: usize,
    pub it_ext: usize,
    pub stop_reason: StopReason,
    pub trace: Vec<OuterIterate>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Relative step, falling back to the absolute step when `x_curr = 0`.
pub fn relative_step(x_prev: &[f64], x_curr: &[f64]) -> f64 {
    let diff = x_prev
        .iter()
        .zip(x_curr)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = x_curr.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Returns the first satisfied disjunct of the stop rule, if any.
pub fn stop_criterion(
    t: f64,
    k: usize,
    x_prev: &[f64],
    x_curr: &[f64],
    lagrangian_grad_norm: f64,
    config: &DriverConfig,
) -> Option<StopReason> {
    if t <= config.t_min {
        Some(StopReason::TMin)
    } else if k >= config.k_max {
        Some(StopReason::KMax)
    } else if relative_step(x_prev, x_curr) <= config.eps1 {
        Some(StopReason::RelativeStep)
    } else if lagrangian_grad_norm <= config.eps2 {
        Some(StopReason::LagrangianGradient)
    } else {
        None
    }
}

fn regularization_xi(nlp: &NlpProblem, inner: &NlpResult, scheme: Scheme, q: usize) -> Vec<f64> {
    let mut xi = vec![0.0; q];
    let rows: Box<dyn Iterator<Item = (&RowOrigin, f64)>> = if scheme.is_equality() {
        Box::new(nlp.eq_origin.iter().zip(inner.multipliers.eq.iter().map(|l| -l)))
    } else {
        Box::new(nlp.in_origin.iter().zip(inner.multipliers.ineq.iter().copied()))
    };
    for (origin, v) in rows {
        match *origin {
            RowOrigin::Regularization { pair: Some(j) } => xi[j] = v,
            RowOrigin::Regularization { pair: None } => xi.iter_mut().for_each(|x| *x = v),
            _ => {}
        }
    }
    xi
}

/// Maps the multipliers of a regularized solve onto the MPCC:
/// `nu1_j = mu1_j - xi_j * x2_j`, `nu2_j = mu2_j - xi_j * x1_j`, with `xi` the
/// regularization-row multiplier (sign-flipped for equality schemes so that a
/// positive `xi` always pushes the product down).
pub fn recover_multipliers(scheme: Scheme, problem: &MpccProblem, nlp: &NlpProblem, inner: &NlpResult) -> MpccMultipliers {
    let mut m = MpccMultipliers::zeros(problem);
    let nm = &inner.multipliers;
    let (neq, nin) = (m.lambda_eq.len(), m.lambda_in.len());
    m.lambda_eq.copy_from_slice(&nm.eq[..neq]);
    m.lambda_in.copy_from_slice(&nm.ineq[..nin]);
    let xi = regularization_xi(nlp, inner, scheme, problem.q());
    let x = &inner.x;
    for (j, &(a, b)) in problem.comp_pairs.iter().enumerate() {
        m.nu1[j] = nm.lower[a] - nm.upper[a] - xi[j] * x[b];
        m.nu2[j] = nm.lower[b] - nm.upper[b] - xi[j] * x[a];
    }
    for i in problem.control_indices() {
        m.bounds[i] = nm.lower[i] - nm.upper[i];
    }
    m
}

/// Euclidean norm of the Lagrangian gradient with the regularization rows
/// left out.
fn relaxed_lagrangian_norm(nlp: &NlpProblem, inner: &NlpResult) -> Result<f64, EvalError> {
    let x = &inner.x;
    let nm = &inner.multipliers;
    let (_, mut g) = nlp.objective.eval_grad(x)?;
    let rows = nlp
        .equalities
        .iter()
        .zip(&nlp.eq_origin)
        .zip(&nm.eq)
        .chain(nlp.inequalities.iter().zip(&nlp.in_origin).zip(&nm.ineq));
    for ((expr, origin), &l) in rows {
        if matches!(origin, RowOrigin::Regularization { .. }) || l == 0.0 {
            continue;
        }
        let (_, gr) = expr.eval_grad(x)?;
        for (gi, ri) in g.iter_mut().zip(gr) {
            *gi -= l * ri;
        }
    }
    for (i, gi) in g.iter_mut().enumerate() {
        *gi -= nm.lower[i] - nm.upper[i];
    }
    Ok(g.iter().map(|v| v * v).sum::<f64>().sqrt())
}

pub fn outer_solve(problem: &MpccProblem, scheme: Scheme, config: &DriverConfig) -> SolveResult {
    let mut x = problem.initial_point();
    let mut trace = Vec::new();
    let mut it_int = 0;
    let mut multipliers = MpccMultipliers::zeros(problem);
    let mut k = 0;
    let mut last_converged;

    let stop_reason = loop {
        let t = config.t_at(k);
        let nlp = build_regularized(problem, scheme, RegParam::new(t).expect("t stays finite and positive"));
        let mut inner = sqp_solve(&nlp, &x, &config.inner);
        let mut used = inner.iterations;
        let mut retried = false;
        if inner.status != NlpStatus::Converged {
            debug!(
                "{} {scheme} k={k}: inner solve ended with {:?}, retrying with a stiffer elastic penalty",
                problem.name, inner.status
            );
            let stiff = SqpConfig {
                elastic_weight: config.inner.elastic_weight * ELASTIC_RETRY_FACTOR,
                ..config.inner.clone()
            };
            inner = sqp_solve(&nlp, &x, &stiff);
            used += inner.iterations;
            retried = true;
        }
        it_int += used;
        last_converged = inner.status == NlpStatus::Converged;

        let comp = residuals(problem, &inner.x).map(|r| r.complementarity).unwrap_or(f64::INFINITY);
        let grad_norm = relaxed_lagrangian_norm(&nlp, &inner).unwrap_or(f64::INFINITY);
        let measure = grad_norm.max(comp);
        let rel = relative_step(&x, &inner.x);
        info!(
            "{} {scheme} k={k} t={t:.1e} inner={used} rel_step={rel:.3e} grad={measure:.3e} status={:?}",
            problem.name, inner.status
        );
        trace.push(OuterIterate {
            k,
            t,
            inner_iterations: used,
            relative_step: rel,
            lagrangian_grad_norm: measure,
            complementarity: comp,
            inner_status: inner.status,
            elastic_retry: retried,
            x: inner.x.clone(),
        });
        if !last_converged {
            x = inner.x;
            k += 1;
            break StopReason::InnerFailure;
        }

        multipliers = recover_multipliers(scheme, problem, &nlp, &inner);
        let x_prev = std::mem::replace(&mut x, inner.x);
        k += 1;
        if let Some(reason) = stop_criterion(config.t_at(k), k, &x_prev, &x, measure, config) {
            break reason;
        }
    };

    let f = problem.objective.eval(&x).unwrap_or(f64::NAN);
    let feasible = residuals(problem, &x)
        .map(|r| r.complementarity <= config.comp_tol && r.equality.max(r.inequality) <= FEASIBILITY_TOL)
        .unwrap_or(false);
    let status = if last_converged && feasible && f.is_finite() {
        SolveStatus::Converged
    } else {
        SolveStatus::NotConverged
    };
    SolveResult {
        problem: problem.name.clone(),
        scheme,
        x,
        f,
        multipliers,
        status,
        it_int,
        it_ext: k,
        stop_reason,
        trace,
    }
}
