//! Dense primal active-set solver for strictly convex quadratic programs
//!
//! ```text
//! min  1/2 d'Hd + g'd   s.t.  A_eq d = b_eq,   A_in d >= b_in
//! ```
//!
//! A feasible start comes from [`solve_phase1`]; each iteration then solves the
//! equality-constrained subproblem on the working set through its KKT matrix.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

/// Violation accepted as feasible.
pub const FEAS_TOL: f64 = 1e-9;
/// Phase-1 auxiliary optimum above which the constraints are declared inconsistent.
pub const INFEASIBILITY_TOL: f64 = 1e-8;

const ZERO_STEP: f64 = 1e-14;
const DEGENERATE_PERTURBATION: f64 = 1e-10;
const PROX_WEIGHT: f64 = 1e-4;
const PHASE1_ROUNDS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct QpInstance {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Hessian is not symmetric (relative asymmetry {0:e})")]
    Asymmetric(f64),
}

impl QpInstance {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = g.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(QpError::Dimension(format!(
                "H is {}x{}, g has {n} entries",
                h.nrows(),
                h.ncols()
            )));
        }
        if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
            return Err(QpError::Dimension("equality rows".into()));
        }
        if a_in.ncols() != n || a_in.nrows() != b_in.len() {
            return Err(QpError::Dimension("inequality rows".into()));
        }
        let scale = h.amax().max(1e-300);
        let asym = (&h - h.transpose()).amax() / scale;
        if asym > 1e-12 {
            return Err(QpError::Asymmetric(asym));
        }
        Ok(QpInstance {
            h,
            g,
            a_eq,
            b_eq,
            a_in,
            b_in,
        })
    }

    /// `min 1/2 d'Hd + g'd` with no constraints.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self, QpError> {
        let n = g.len();
        Self::new(
            h,
            g,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
    }

    pub fn nvars(&self) -> usize {
        self.g.len()
    }

    pub fn nrows(&self) -> usize {
        self.b_eq.len() + self.b_in.len()
    }

    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        0.5 * d.dot(&(&self.h * d)) + self.g.dot(d)
    }

    /// Default iteration limit, `50 * (nvars + nrows)`.
    pub fn default_iteration_limit(&self) -> usize {
        50 * (self.nvars() + self.nrows()).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub d: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub lambda_in: DVector<f64>,
    pub status: QpStatus,
    /// Inequality rows in the working set at termination, ascending.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase1Status {
    Feasible,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Result {
    pub status: Phase1Status,
    pub point: DVector<f64>,
    /// Sum of constraint violations at `point` (the auxiliary objective).
    pub violation_sum: f64,
    pub max_violation: f64,
}

fn violations(
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    d: &DVector<f64>,
) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    if a_eq.nrows() > 0 {
        for r in (a_eq * d - b_eq).iter() {
            sum += r.abs();
            max = max.max(r.abs());
        }
    }
    if a_in.nrows() > 0 {
        for r in (a_in * d - b_in).iter() {
            let v = (-r).max(0.0);
            sum += v;
            max = max.max(v);
        }
    }
    (sum, max)
}

/// Finds a point satisfying the linear constraints, starting from `start`.
///
/// Minimizes the l1 sum of violations through a short sequence of proximal
/// elastic QPs centred at the current point; the sequence stops as soon as the
/// point is feasible within [`FEAS_TOL`] or stalls.
pub fn solve_phase1(
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    start: &DVector<f64>,
) -> Phase1Result {
    let n = start.len();
    let neq = a_eq.nrows();
    let nin = a_in.nrows();
    let result = |status, point: DVector<f64>| {
        let (violation_sum, max_violation) = violations(a_eq, b_eq, a_in, b_in, &point);
        Phase1Result {
            status,
            point,
            violation_sum,
            max_violation,
        }
    };
    let (_, start_max) = violations(a_eq, b_eq, a_in, b_in, start);
    if start_max <= FEAS_TOL {
        return result(Phase1Status::Feasible, start.clone());
    }

    // z = (d, s+, s-, w)
    let nz = n + 2 * neq + nin;
    let h = DMatrix::<f64>::identity(nz, nz) * PROX_WEIGHT;
    let mut e_rows = DMatrix::<f64>::zeros(neq, nz);
    for i in 0..neq {
        for j in 0..n {
            e_rows[(i, j)] = a_eq[(i, j)];
        }
        e_rows[(i, n + i)] = 1.0;
        e_rows[(i, n + neq + i)] = -1.0;
    }
    let mut i_rows = DMatrix::<f64>::zeros(2 * nin + 2 * neq, nz);
    let mut i_rhs = DVector::<f64>::zeros(2 * nin + 2 * neq);
    for i in 0..nin {
        for j in 0..n {
            i_rows[(i, j)] = a_in[(i, j)];
        }
        i_rows[(i, n + 2 * neq + i)] = 1.0;
        i_rhs[i] = b_in[i];
    }
    for k in 0..(2 * neq + nin) {
        i_rows[(nin + k, n + k)] = 1.0;
    }

    let mut center = start.clone();
    let mut last_sum = f64::INFINITY;
    for _ in 0..PHASE1_ROUNDS {
        let mut g = DVector::<f64>::from_element(nz, 1.0);
        for j in 0..n {
            g[j] = -PROX_WEIGHT * center[j];
        }
        let mut z0 = DVector::<f64>::zeros(nz);
        z0.rows_mut(0, n).copy_from(&center);
        if neq > 0 {
            let r = b_eq - a_eq * &center;
            for i in 0..neq {
                z0[n + i] = r[i].max(0.0);
                z0[n + neq + i] = (-r[i]).max(0.0);
            }
        }
        if nin > 0 {
            let r = b_in - a_in * &center;
            for i in 0..nin {
                z0[n + 2 * neq + i] = r[i].max(0.0);
            }
        }
        let limit = 50 * (nz + neq + i_rows.nrows());
        let inner = active_set(&h, &g, &e_rows, &b_eq.clone(), &i_rows, &i_rhs, z0, &[], limit);
        let d = inner.x.rows(0, n).into_owned();
        let (sum, max) = violations(a_eq, b_eq, a_in, b_in, &d);
        if max <= FEAS_TOL {
            return result(Phase1Status::Feasible, d);
        }
        let moved = (&d - &center).amax();
        let stalled = moved <= 1e-12 * (1.0 + d.amax()) || sum >= last_sum * (1.0 - 1e-9);
        if inner.status != QpStatus::Optimal {
            return result(Phase1Status::IterationLimit, d);
        }
        if stalled {
            let status = if sum > INFEASIBILITY_TOL {
                Phase1Status::Infeasible
            } else {
                Phase1Status::Feasible
            };
            return result(status, d);
        }
        last_sum = sum;
        center = d;
    }
    let (sum, _) = violations(a_eq, b_eq, a_in, b_in, &center);
    let status = if sum > INFEASIBILITY_TOL {
        Phase1Status::Infeasible
    } else {
        Phase1Status::IterationLimit
    };
    result(status, center)
}

/// Solves the QP from scratch, seeding the working set with the rows of
/// `warm_start_active_set` that are active at the phase-1 point.
pub fn solve_qp(instance: &QpInstance, warm_start_active_set: Option<&[usize]>) -> QpSolution {
    solve_qp_with_limit(
        instance,
        warm_start_active_set,
        instance.default_iteration_limit(),
    )
}

pub fn solve_qp_with_limit(
    instance: &QpInstance,
    warm_start_active_set: Option<&[usize]>,
    max_iterations: usize,
) -> QpSolution {
    let start = DVector::zeros(instance.nvars());
    solve_qp_from(instance, &start, warm_start_active_set, max_iterations)
}

/// Like [`solve_qp_with_limit`], with phase 1 started from `start`. A feasible
/// `start` skips phase 1 entirely.
pub fn solve_qp_from(
    instance: &QpInstance,
    start: &DVector<f64>,
    warm_start_active_set: Option<&[usize]>,
    max_iterations: usize,
) -> QpSolution {
    let phase1 = solve_phase1(
        &instance.a_eq,
        &instance.b_eq,
        &instance.a_in,
        &instance.b_in,
        start,
    );
    let failed = |status| QpSolution {
        d: phase1.point.clone(),
        lambda_eq: DVector::zeros(instance.b_eq.len()),
        lambda_in: DVector::zeros(instance.b_in.len()),
        status,
        active_set: Vec::new(),
        iterations: 0,
    };
    match phase1.status {
        Phase1Status::Feasible => {}
        Phase1Status::Infeasible => return failed(QpStatus::Infeasible),
        Phase1Status::IterationLimit => return failed(QpStatus::IterationLimit),
    }
    let out = active_set(
        &instance.h,
        &instance.g,
        &instance.a_eq,
        &instance.b_eq,
        &instance.a_in,
        &instance.b_in,
        phase1.point.clone(),
        warm_start_active_set.unwrap_or(&[]),
        max_iterations,
    );
    QpSolution {
        d: out.x,
        lambda_eq: out.lambda_eq,
        lambda_in: out.lambda_in,
        status: out.status,
        active_set: out.active,
        iterations: out.iterations,
    }
}

struct ActiveSetOutput {
    x: DVector<f64>,
    lambda_eq: DVector<f64>,
    lambda_in: DVector<f64>,
    status: QpStatus,
    active: Vec<usize>,
    iterations: usize,
}

/// Orthonormal basis used to keep working-set rows linearly independent.
struct RowBasis {
    q: Vec<DVector<f64>>,
}

impl RowBasis {
    fn new() -> Self {
        RowBasis { q: Vec::new() }
    }

    /// Component of `row` orthogonal to the basis, if it is not negligible.
    fn residual(&self, row: &DVector<f64>) -> Option<DVector<f64>> {
        let norm = row.norm();
        if norm == 0.0 {
            return None;
        }
        let mut v = row.clone();
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let r = v.norm();
        (r > 1e-9 * norm).then(|| v / r)
    }

    fn try_add(&mut self, row: DVector<f64>) -> bool {
        match self.residual(&row) {
            Some(v) => {
                self.q.push(v);
                true
            }
            None => false,
        }
    }
}

/// Solves the equality-constrained subproblem on the working set.
/// Returns the minimizer and the multipliers of `rows` (in order).
fn solve_eqp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    rows: &[(DVector<f64>, f64)],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = g.len();
    let w = rows.len();
    let mut k = DMatrix::<f64>::zeros(n + w, n + w);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    let mut rhs = DVector::<f64>::zeros(n + w);
    for j in 0..n {
        rhs[j] = -g[j];
    }
    for (r, (a, b)) in rows.iter().enumerate() {
        for j in 0..n {
            k[(n + r, j)] = a[j];
            k[(j, n + r)] = a[j];
        }
        rhs[n + r] = *b;
    }
    let sol = k.lu().solve(&rhs)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let lambda = -sol.rows(n, w).into_owned();
    Some((x, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WRow {
    Eq(usize),
    In(usize),
}

#[allow(clippy::too_many_arguments)]
fn active_set(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in_original: &DVector<f64>,
    mut x: DVector<f64>,
    warm: &[usize],
    max_iterations: usize,
) -> ActiveSetOutput {
    let neq = a_eq.nrows();
    let nin = a_in.nrows();
    let mut b_in = b_in_original.clone();
    let eq_row = |i: usize| a_eq.row(i).transpose();
    let in_row = |i: usize| a_in.row(i).transpose();

    let initial_working_set = |x: &DVector<f64>, b_in: &DVector<f64>, warm: &[usize]| {
        let mut basis = RowBasis::new();
        let mut ws = Vec::new();
        for i in 0..neq {
            if basis.try_add(eq_row(i)) {
                ws.push(WRow::Eq(i));
            }
        }
        let active = |i: usize| (a_in.row(i) * x)[0] - b_in[i] <= FEAS_TOL;
        let mut order: Vec<usize> = warm.iter().copied().filter(|&i| i < nin).collect();
        order.extend(0..nin);
        for i in order {
            if active(i) && !ws.contains(&WRow::In(i)) && basis.try_add(in_row(i)) {
                ws.push(WRow::In(i));
            }
        }
        ws
    };

    let mut ws = initial_working_set(&x, &b_in, warm);
    let mut zero_steps: Vec<usize> = Vec::new();
    let mut perturbed = false;
    let mut iterations = 0;

    let finish = |x: DVector<f64>, ws: &[WRow], lambda: &DVector<f64>, status, iterations| {
        let mut lambda_eq = DVector::zeros(neq);
        let mut lambda_in = DVector::zeros(nin);
        let mut active = Vec::new();
        for (k, r) in ws.iter().enumerate() {
            match *r {
                WRow::Eq(i) => lambda_eq[i] = lambda.get(k).copied().unwrap_or(0.0),
                WRow::In(i) => {
                    lambda_in[i] = lambda.get(k).copied().unwrap_or(0.0);
                    active.push(i);
                }
            }
        }
        active.sort_unstable();
        ActiveSetOutput {
            x,
            lambda_eq,
            lambda_in,
            status,
            active,
            iterations,
        }
    };

    while iterations < max_iterations {
        iterations += 1;
        let rows: Vec<(DVector<f64>, f64)> = ws
            .iter()
            .map(|r| match *r {
                WRow::Eq(i) => (eq_row(i), b_eq[i]),
                WRow::In(i) => (in_row(i), b_in[i]),
            })
            .collect();
        let Some((target, lambda)) = solve_eqp(h, g, &rows) else {
            return finish(x, &ws, &DVector::zeros(0), QpStatus::IterationLimit, iterations);
        };
        let p = &target - &x;
        let scale = 1.0 + x.amax().max(target.amax());
        if p.amax() <= 1e-11 * scale {
            x = target;
            let lscale = lambda.amax().max(1.0);
            let mut drop: Option<(usize, f64)> = None;
            for (k, r) in ws.iter().enumerate() {
                if let WRow::In(_) = r {
                    if lambda[k] < -1e-12 * lscale && drop.map_or(true, |(_, v)| lambda[k] < v) {
                        drop = Some((k, lambda[k]));
                    }
                }
            }
            match drop {
                None => return finish(x, &ws, &lambda, QpStatus::Optimal, iterations),
                Some((k, _)) => {
                    ws.remove(k);
                }
            }
            continue;
        }

        // ratio test; ties go to the smallest row index. Rows that depend on
        // the working set are skipped: they cannot change along p.
        let mut basis = RowBasis::new();
        for r in &rows {
            basis.try_add(r.0.clone());
        }
        let pnorm = p.norm();
        let mut alpha = 1.0;
        let mut blocking: Option<usize> = None;
        for i in 0..nin {
            if ws.contains(&WRow::In(i)) {
                continue;
            }
            let a = a_in.row(i);
            let ap = (a * &p)[0];
            if ap < -1e-12 * a.norm() * pnorm && basis.residual(&in_row(i)).is_some() {
                let slack = ((a * &x)[0] - b_in[i]).max(0.0);
                let step = slack / -ap;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        x.axpy(alpha, &p, 1.0);
        match blocking {
            Some(i) => {
                ws.push(WRow::In(i));
                if alpha < ZERO_STEP {
                    zero_steps.push(i);
                } else {
                    zero_steps.clear();
                }
            }
            None => zero_steps.clear(),
        }

        if zero_steps.len() >= 3 && !perturbed {
            // loosen the offending rows and start over from the current point
            for &i in &zero_steps {
                b_in[i] -= DEGENERATE_PERTURBATION;
            }
            perturbed = true;
            zero_steps.clear();
            ws = initial_working_set(&x, &b_in, &[]);
            ws.retain(|r| matches!(r, WRow::Eq(_)));
        }
    }
    let rows = ws.len();
    finish(x, &ws, &DVector::zeros(rows), QpStatus::IterationLimit, iterations)
}

/// KKT residual of a QP solution: stationarity, primal feasibility,
/// complementary slackness and multiplier signs, as a max.
pub fn qp_kkt_residual(instance: &QpInstance, sol: &QpSolution) -> f64 {
    let d = &sol.d;
    let mut grad = &instance.h * d + &instance.g;
    if instance.a_eq.nrows() > 0 {
        grad -= instance.a_eq.transpose() * &sol.lambda_eq;
    }
    if instance.a_in.nrows() > 0 {
        grad -= instance.a_in.transpose() * &sol.lambda_in;
    }
    let mut worst = grad.amax();
    if instance.a_eq.nrows() > 0 {
        worst = worst.max((&instance.a_eq * d - &instance.b_eq).amax());
    }
    if instance.a_in.nrows() > 0 {
        let r = &instance.a_in * d - &instance.b_in;
        for i in 0..r.len() {
            worst = worst
                .max(-r[i])
                .max((r[i] * sol.lambda_in[i]).abs())
                .max(-sol.lambda_in[i]);
        }
    }
    worst
}
