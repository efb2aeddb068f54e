//! Quasi-Newton SQP for smooth NLPs in the [`NlpProblem`] form.
//!
//! Each iteration solves the QP built from a damped-BFGS model of the
//! Lagrangian Hessian and the linearized constraints (simple bounds enter as
//! ordinary inequality rows), then backtracks on the l1 exact-penalty merit
//! `f + sigma * (sum |c_eq| + sum max(0, -c_in))`. Inconsistent linearizations
//! are retried in elastic mode.

use log::{debug, trace};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::model::{NlpProblem, Point};
use crate::qp::{solve_qp, solve_qp_from, QpInstance, QpStatus};

/// Smallest eigenvalue of the Hessian model allowed relative to the largest.
const MIN_CURVATURE_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqpConfig {
    pub kkt_tol: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub min_step: f64,
    pub damping: f64,
    pub elastic_weight: f64,
    /// Keep a per-iteration trace in [`NlpResult::trace`].
    pub record_trace: bool,
}

impl Default for SqpConfig {
    fn default() -> Self {
        SqpConfig {
            kkt_tol: 1e-8,
            max_iterations: 100,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-12,
            damping: 0.2,
            elastic_weight: 1e6,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid SQP configuration: {0}")]
pub struct SqpConfigError(pub String);

impl SqpConfig {
    pub fn validate(&self) -> Result<(), SqpConfigError> {
        let positive = [
            ("kkt_tol", self.kkt_tol),
            ("armijo", self.armijo),
            ("min_step", self.min_step),
            ("damping", self.damping),
            ("elastic_weight", self.elastic_weight),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SqpConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(SqpConfigError("max_iterations must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SqpConfigError(format!(
                "backtrack must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
    QpInfeasible,
}

/// Multipliers in the convention `grad f = J_eq' eq + J_in' ineq + lower - upper`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpMultipliers {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl NlpMultipliers {
    pub fn zeros(nlp: &NlpProblem) -> Self {
        NlpMultipliers {
            eq: vec![0.0; nlp.equalities.len()],
            ineq: vec![0.0; nlp.inequalities.len()],
            lower: vec![0.0; nlp.num_vars()],
            upper: vec![0.0; nlp.num_vars()],
        }
    }

    fn constraint_amax(&self) -> f64 {
        self.eq
            .iter()
            .chain(&self.ineq)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqpIterate {
    pub iteration: usize,
    pub merit_before: f64,
    pub merit_after: f64,
    pub penalty: f64,
    pub step_length: f64,
    pub kkt_residual: f64,
    pub elastic: bool,
    /// Smallest eigenvalue of the Hessian model after this step's update.
    pub hessian_min_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpResult {
    pub x: Point,
    pub multipliers: NlpMultipliers,
    pub objective: f64,
    pub status: NlpStatus,
    /// Number of accepted steps.
    pub iterations: usize,
    pub trace: Vec<SqpIterate>,
}

struct Evaluation {
    f: f64,
    grad: DVector<f64>,
    c_eq: DVector<f64>,
    j_eq: DMatrix<f64>,
    c_in: DVector<f64>,
    j_in: DMatrix<f64>,
}

fn evaluate(nlp: &NlpProblem, x: &[f64]) -> Result<Evaluation, EvalError> {
    let n = x.len();
    let (f, g) = nlp.objective.eval_grad(x)?;
    let rows = |exprs: &[crate::expr::Expression]| -> Result<(DVector<f64>, DMatrix<f64>), EvalError> {
        let mut c = DVector::zeros(exprs.len());
        let mut j = DMatrix::zeros(exprs.len(), n);
        for (i, e) in exprs.iter().enumerate() {
            let (v, gr) = e.eval_grad(x)?;
            c[i] = v;
            for (k, gk) in gr.into_iter().enumerate() {
                j[(i, k)] = gk;
            }
        }
        Ok((c, j))
    };
    let (c_eq, j_eq) = rows(&nlp.equalities)?;
    let (c_in, j_in) = rows(&nlp.inequalities)?;
    Ok(Evaluation {
        f,
        grad: DVector::from_vec(g),
        c_eq,
        j_eq,
        c_in,
        j_in,
    })
}

impl Evaluation {
    fn violation(&self) -> f64 {
        self.c_eq.iter().map(|v| v.abs()).sum::<f64>()
            + self.c_in.iter().map(|v| (-v).max(0.0)).sum::<f64>()
    }

    fn merit(&self, sigma: f64) -> f64 {
        self.f + sigma * self.violation()
    }

    /// Gradient of `f - eq'c_eq - ineq'c_in` (bounds are linear and omitted).
    fn lagrangian_grad(&self, m: &NlpMultipliers) -> DVector<f64> {
        let mut g = self.grad.clone();
        if !m.eq.is_empty() {
            g -= self.j_eq.transpose() * DVector::from_column_slice(&m.eq);
        }
        if !m.ineq.is_empty() {
            g -= self.j_in.transpose() * DVector::from_column_slice(&m.ineq);
        }
        g
    }
}

fn kkt_from_eval(nlp: &NlpProblem, ev: &Evaluation, x: &[f64], m: &NlpMultipliers) -> f64 {
    let mut stat = ev.lagrangian_grad(m);
    for i in 0..x.len() {
        stat[i] -= m.lower[i] - m.upper[i];
    }
    let mut worst = stat.amax();
    for v in ev.c_eq.iter() {
        worst = worst.max(v.abs());
    }
    for (i, v) in ev.c_in.iter().enumerate() {
        let l = m.ineq[i];
        worst = worst.max(-v).max(-l).max((l * v).abs());
    }
    for (i, &xi) in x.iter().enumerate() {
        let (lo, up) = (nlp.lower[i], nlp.upper[i]);
        worst = worst.max(lo - xi).max(xi - up);
        worst = worst.max(-m.lower[i]).max(-m.upper[i]);
        if lo.is_finite() {
            worst = worst.max((m.lower[i] * (xi - lo)).abs());
        } else {
            worst = worst.max(m.lower[i].abs());
        }
        if up.is_finite() {
            worst = worst.max((m.upper[i] * (up - xi)).abs());
        } else {
            worst = worst.max(m.upper[i].abs());
        }
    }
    worst
}

/// Max of Lagrangian-gradient infinity norm, feasibility violation,
/// multiplier sign violation and complementary-slackness violation.
pub fn kkt_residual(nlp: &NlpProblem, x: &[f64], multipliers: &NlpMultipliers) -> Result<f64, EvalError> {
    let ev = evaluate(nlp, x)?;
    Ok(kkt_from_eval(nlp, &ev, x, multipliers))
}

#[derive(Debug, Clone, Copy)]
enum BoundRow {
    Lower(usize),
    Upper(usize),
}

struct Subproblem {
    d: DVector<f64>,
    multipliers: NlpMultipliers,
    active: Vec<usize>,
    elastic: bool,
}

fn bound_rows(nlp: &NlpProblem) -> Vec<BoundRow> {
    let mut rows = Vec::new();
    for i in 0..nlp.num_vars() {
        if nlp.lower[i].is_finite() {
            rows.push(BoundRow::Lower(i));
        }
        if nlp.upper[i].is_finite() {
            rows.push(BoundRow::Upper(i));
        }
    }
    rows
}

/// Builds and solves the QP at `x`; falls back to elastic mode when the
/// linearization is inconsistent.
fn solve_subproblem(
    nlp: &NlpProblem,
    ev: &Evaluation,
    x: &[f64],
    b: &DMatrix<f64>,
    bounds: &[BoundRow],
    elastic_weight: f64,
    warm: Option<&[usize]>,
) -> Option<Subproblem> {
    let n = x.len();
    let neq = ev.c_eq.len();
    let ncin = ev.c_in.len();
    let nin = ncin + bounds.len();

    let mut a_in = DMatrix::zeros(nin, n);
    let mut b_in = DVector::zeros(nin);
    a_in.view_mut((0, 0), (ncin, n)).copy_from(&ev.j_in);
    for i in 0..ncin {
        b_in[i] = -ev.c_in[i];
    }
    for (k, r) in bounds.iter().enumerate() {
        match *r {
            BoundRow::Lower(i) => {
                a_in[(ncin + k, i)] = 1.0;
                b_in[ncin + k] = nlp.lower[i] - x[i];
            }
            BoundRow::Upper(i) => {
                a_in[(ncin + k, i)] = -1.0;
                b_in[ncin + k] = x[i] - nlp.upper[i];
            }
        }
    }

    let unpack = |lambda_eq: &DVector<f64>, lambda_in: &DVector<f64>| {
        let mut m = NlpMultipliers::zeros(nlp);
        m.eq.copy_from_slice(&lambda_eq.as_slice()[..neq]);
        m.ineq.copy_from_slice(&lambda_in.as_slice()[..ncin]);
        for (k, r) in bounds.iter().enumerate() {
            match *r {
                BoundRow::Lower(i) => m.lower[i] = lambda_in[ncin + k],
                BoundRow::Upper(i) => m.upper[i] = lambda_in[ncin + k],
            }
        }
        m
    };

    let qp = QpInstance::new(b.clone(), ev.grad.clone(), ev.j_eq.clone(), -&ev.c_eq, a_in.clone(), b_in.clone())
        .ok()?;
    let sol = solve_qp(&qp, warm);
    if sol.status == QpStatus::Optimal {
        return Some(Subproblem {
            multipliers: unpack(&sol.lambda_eq, &sol.lambda_in),
            d: sol.d,
            active: sol.active_set,
            elastic: false,
        });
    }

    // elastic mode: z = (d, v+, v-, w) with v, w >= 0 penalized linearly
    let ne = 2 * neq + ncin;
    let nz = n + ne;
    let mut h = DMatrix::identity(nz, nz);
    h.view_mut((0, 0), (n, n)).copy_from(b);
    let mut g = DVector::from_element(nz, elastic_weight);
    g.rows_mut(0, n).copy_from(&ev.grad);
    let mut e_eq = DMatrix::zeros(neq, nz);
    for i in 0..neq {
        for j in 0..n {
            e_eq[(i, j)] = ev.j_eq[(i, j)];
        }
        e_eq[(i, n + i)] = 1.0;
        e_eq[(i, n + neq + i)] = -1.0;
    }
    let mut e_in = DMatrix::zeros(nin + ne, nz);
    let mut e_b = DVector::zeros(nin + ne);
    for i in 0..nin {
        for j in 0..n {
            e_in[(i, j)] = a_in[(i, j)];
        }
        if i < ncin {
            e_in[(i, n + 2 * neq + i)] = 1.0;
        }
        e_b[i] = b_in[i];
    }
    for k in 0..ne {
        e_in[(nin + k, n + k)] = 1.0;
    }
    let qp = QpInstance::new(h, g, e_eq, -&ev.c_eq, e_in, e_b).ok()?;
    // d = 0 with the elastics absorbing the current violations is feasible
    let mut start = DVector::zeros(nz);
    for i in 0..neq {
        start[n + i] = (-ev.c_eq[i]).max(0.0);
        start[n + neq + i] = ev.c_eq[i].max(0.0);
    }
    for i in 0..ncin {
        start[n + 2 * neq + i] = (-ev.c_in[i]).max(0.0);
    }
    let sol = solve_qp_from(&qp, &start, None, qp.default_iteration_limit());
    if sol.status != QpStatus::Optimal {
        return None;
    }
    let lambda_in = sol.lambda_in.rows(0, nin).into_owned();
    Some(Subproblem {
        multipliers: unpack(&sol.lambda_eq, &lambda_in),
        d: sol.d.rows(0, n).into_owned(),
        active: Vec::new(),
        elastic: true,
    })
}

fn linearized_violation(ev: &Evaluation, d: &DVector<f64>) -> f64 {
    let mut v = 0.0;
    if ev.c_eq.len() > 0 {
        v += (&ev.c_eq + &ev.j_eq * d).iter().map(|r| r.abs()).sum::<f64>();
    }
    if ev.c_in.len() > 0 {
        v += (&ev.c_in + &ev.j_in * d).iter().map(|r| (-r).max(0.0)).sum::<f64>();
    }
    v
}

fn min_eigenvalue(b: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(b.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v))
}

fn well_conditioned(b: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(b.clone()).eigenvalues;
    let lo = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = eig.iter().fold(0.0f64, |m, &v| m.max(v));
    lo > MIN_CURVATURE_RATIO * hi.max(1.0)
}

/// Powell-damped BFGS update; keeps `b` symmetric positive definite.
fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, threshold: f64) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 1e-300) {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= threshold * sbs {
        y.clone()
    } else {
        let theta = (1.0 - threshold) * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if !(sr > 0.0) || !sr.is_finite() {
        return;
    }
    let updated = &*b - &bs * bs.transpose() / sbs + &r * r.transpose() / sr;
    if updated.iter().all(|v| v.is_finite()) {
        *b = (&updated + updated.transpose()) * 0.5;
    }
}

pub fn sqp_solve(nlp: &NlpProblem, start: &[f64], config: &SqpConfig) -> NlpResult {
    let n = nlp.num_vars();
    let mut x: Point = start.to_vec();
    nlp.clip(&mut x);
    let bounds = bound_rows(nlp);
    let mut trace = Vec::new();

    let fail = |x: Point, status, iterations, trace| {
        let objective = nlp.objective.eval(&x).unwrap_or(f64::NAN);
        NlpResult {
            x,
            multipliers: NlpMultipliers::zeros(nlp),
            objective,
            status,
            iterations,
            trace,
        }
    };

    let mut ev = match evaluate(nlp, &x) {
        Ok(ev) => ev,
        Err(e) => {
            debug!("sqp: cannot evaluate the start point: {e}");
            return fail(x, NlpStatus::LineSearchFailure, 0, trace);
        }
    };
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut fresh_hessian = true;
    let mut sigma: f64 = 0.0;
    let mut warm: Option<Vec<usize>> = None;
    let mut iterations = 0;
    let mut last_multipliers = NlpMultipliers::zeros(nlp);

    loop {
        let Some(sub) = solve_subproblem(
            nlp,
            &ev,
            &x,
            &b,
            &bounds,
            config.elastic_weight,
            warm.as_deref(),
        ) else {
            debug!("sqp: QP subproblem infeasible even in elastic mode");
            let mut out = fail(x, NlpStatus::QpInfeasible, iterations, trace);
            out.multipliers = last_multipliers;
            return out;
        };
        let kkt = kkt_from_eval(nlp, &ev, &x, &sub.multipliers);
        trace!(
            "sqp it={iterations} f={:.10e} kkt={kkt:.3e} |d|={:.3e} elastic={}",
            ev.f,
            sub.d.amax(),
            sub.elastic
        );
        if kkt <= config.kkt_tol {
            return NlpResult {
                objective: ev.f,
                x,
                multipliers: sub.multipliers,
                status: NlpStatus::Converged,
                iterations,
                trace,
            };
        }
        if iterations >= config.max_iterations {
            return NlpResult {
                objective: ev.f,
                x,
                multipliers: sub.multipliers,
                status: NlpStatus::MaxIterations,
                iterations,
                trace,
            };
        }

        sigma = sigma.max(sub.multipliers.constraint_amax() + 10.0);
        let merit0 = ev.merit(sigma);
        let slope = (ev.grad.dot(&sub.d) + sigma * (linearized_violation(&ev, &sub.d) - ev.violation())).min(0.0);

        let mut alpha = 1.0;
        let mut accepted: Option<(Point, Evaluation, f64)> = None;
        while alpha >= config.min_step {
            let mut trial: Point = x.iter().zip(sub.d.iter()).map(|(xi, di)| xi + alpha * di).collect();
            nlp.clip(&mut trial);
            if let Ok(tev) = evaluate(nlp, &trial) {
                let m = tev.merit(sigma);
                if m <= merit0 + config.armijo * alpha * slope {
                    accepted = Some((trial, tev, m));
                    break;
                }
            }
            alpha *= config.backtrack;
        }

        // a step that cannot move x is no better than a failed search
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let accepted = accepted.filter(|(trial, _, m)| {
            let moved = trial.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            moved > config.min_step * (1.0 + xmax) || *m < merit0
        });
        let Some((x_new, ev_new, merit1)) = accepted else {
            if !fresh_hessian {
                debug!("sqp: line search failed, resetting the Hessian model");
                b = DMatrix::identity(n, n);
                fresh_hessian = true;
                warm = None;
                continue;
            }
            debug!("sqp: line search failed at iteration {iterations}");
            let mut out = fail(x, NlpStatus::LineSearchFailure, iterations, trace);
            out.multipliers = sub.multipliers;
            return out;
        };

        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = ev_new.lagrangian_grad(&sub.multipliers) - ev.lagrangian_grad(&sub.multipliers);
        damped_bfgs(&mut b, &s, &y, config.damping);
        fresh_hessian = false;
        if !well_conditioned(&b) {
            debug!("sqp: Hessian model lost positive definiteness numerically, resetting");
            b = DMatrix::identity(n, n);
            fresh_hessian = true;
        }
        iterations += 1;
        if config.record_trace {
            trace.push(SqpIterate {
                iteration: iterations,
                merit_before: merit0,
                merit_after: merit1,
                penalty: sigma,
                step_length: alpha,
                kkt_residual: kkt,
                elastic: sub.elastic,
                hessian_min_eig: min_eigenvalue(&b),
            });
        }
        warm = if sub.elastic { None } else { Some(sub.active) };
        last_multipliers = sub.multipliers;
        x = x_new;
        ev = ev_new;
    }
}
