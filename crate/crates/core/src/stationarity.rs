//! Strong stationarity and MPCC-LICQ checks at a candidate point.
//!
//! Multipliers follow the sign convention
//! `grad f = sum lambda_i grad r_i + sum nu1_j e_{x1j} + sum nu2_j e_{x2j} + sum beta_i e_i`
//! where `r_i` are the normalized rows of [`MpccProblem::equality_rows`] and
//! [`MpccProblem::inequality_rows`] and `beta` holds the net bound multipliers
//! (lower minus upper) of variables outside the complementarity pairs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::model::{residuals, MpccProblem};

pub const ACTIVITY_TOL: f64 = 1e-6;
const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpccMultipliers {
    pub lambda_eq: Vec<f64>,
    pub lambda_in: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    /// Net bound multipliers per variable; zero on paired variables.
    pub bounds: Vec<f64>,
}

impl MpccMultipliers {
    pub fn zeros(problem: &MpccProblem) -> Self {
        MpccMultipliers {
            lambda_eq: vec![0.0; problem.equality_rows().len()],
            lambda_in: vec![0.0; problem.inequality_rows().len()],
            nu1: vec![0.0; problem.q()],
            nu2: vec![0.0; problem.q()],
            bounds: vec![0.0; problem.num_vars()],
        }
    }

    fn check_dims(&self, problem: &MpccProblem) -> Result<(), StationarityError> {
        let expect = Self::zeros(problem);
        let pairs = [
            ("lambda_eq", self.lambda_eq.len(), expect.lambda_eq.len()),
            ("lambda_in", self.lambda_in.len(), expect.lambda_in.len()),
            ("nu1", self.nu1.len(), expect.nu1.len()),
            ("nu2", self.nu2.len(), expect.nu2.len()),
            ("bounds", self.bounds.len(), expect.bounds.len()),
        ];
        for (what, got, want) in pairs {
            if got != want {
                return Err(StationarityError::Dimension { what, got, want });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationarityError {
    #[error("{what} has length {got}, expected {want}")]
    Dimension {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveSets {
    /// Pair indices with `x1j` at zero.
    pub x1: Vec<usize>,
    pub x2: Vec<usize>,
    pub degenerate: Vec<usize>,
    /// Indices into [`MpccProblem::inequality_rows`] that hold with equality.
    pub active_inequalities: Vec<usize>,
}

pub fn active_sets(problem: &MpccProblem, x: &[f64], tol: f64) -> Result<ActiveSets, EvalError> {
    let mut sets = ActiveSets {
        x1: Vec::new(),
        x2: Vec::new(),
        degenerate: Vec::new(),
        active_inequalities: Vec::new(),
    };
    for (j, &(a, b)) in problem.comp_pairs.iter().enumerate() {
        let z1 = x[a].abs() <= tol;
        let z2 = x[b].abs() <= tol;
        if z1 {
            sets.x1.push(j);
        }
        if z2 {
            sets.x2.push(j);
        }
        if z1 && z2 {
            sets.degenerate.push(j);
        }
    }
    for (k, row) in problem.inequality_rows().iter().enumerate() {
        let (r, _) = problem.row_eval_grad(row, x)?;
        if r.abs() <= tol {
            sets.active_inequalities.push(k);
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub is_feasible: bool,
    pub is_strongly_stationary: bool,
    pub stationarity: f64,
    pub feasibility: f64,
    pub sign: f64,
    pub slackness: f64,
    pub degenerate_sign: f64,
    pub licq_holds: bool,
}

/// Stationarity-row residual `grad f - sum(multiplier * normal)`.
pub fn stationarity_row(
    problem: &MpccProblem,
    x: &[f64],
    m: &MpccMultipliers,
) -> Result<Vec<f64>, StationarityError> {
    m.check_dims(problem)?;
    if x.len() != problem.num_vars() {
        return Err(StationarityError::Dimension {
            what: "point",
            got: x.len(),
            want: problem.num_vars(),
        });
    }
    let (_, mut g) = problem.objective.eval_grad(x)?;
    let rows = problem.equality_rows().into_iter().zip(&m.lambda_eq);
    let rows = rows.chain(problem.inequality_rows().into_iter().zip(&m.lambda_in));
    for (row, &l) in rows {
        let (_, gr) = problem.row_eval_grad(&row, x)?;
        for (gi, ri) in g.iter_mut().zip(gr) {
            *gi -= l * ri;
        }
    }
    for (j, &(a, b)) in problem.comp_pairs.iter().enumerate() {
        g[a] -= m.nu1[j];
        g[b] -= m.nu2[j];
    }
    for (gi, b) in g.iter_mut().zip(&m.bounds) {
        *gi -= b;
    }
    Ok(g)
}

pub fn check_strong_stationarity(
    problem: &MpccProblem,
    x: &[f64],
    m: &MpccMultipliers,
    tol: f64,
) -> Result<StationarityReport, StationarityError> {
    let row = stationarity_row(problem, x, m)?;
    let stationarity = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let feasibility = residuals(problem, x)?.max();

    let mut sign: f64 = 0.0;
    let mut slackness: f64 = 0.0;
    for (row, &l) in problem.inequality_rows().iter().zip(&m.lambda_in) {
        let (r, _) = problem.row_eval_grad(row, x)?;
        sign = sign.max(-l);
        slackness = slackness.max((r * l).abs());
    }
    for (j, &(a, b)) in problem.comp_pairs.iter().enumerate() {
        slackness = slackness.max((x[a] * m.nu1[j]).abs()).max((x[b] * m.nu2[j]).abs());
    }
    for (i, v) in problem.variables.iter().enumerate() {
        let beta = m.bounds[i];
        if beta > 0.0 {
            let gap = if v.lower.is_finite() { x[i] - v.lower } else { f64::INFINITY };
            slackness = slackness.max(if gap.is_finite() { (beta * gap).abs() } else { beta });
        } else if beta < 0.0 {
            let gap = if v.upper.is_finite() { v.upper - x[i] } else { f64::INFINITY };
            slackness = slackness.max(if gap.is_finite() { (beta * gap).abs() } else { -beta });
        }
    }
    let mut degenerate_sign: f64 = 0.0;
    for j in active_sets(problem, x, ACTIVITY_TOL)?.degenerate {
        degenerate_sign = degenerate_sign.max(-m.nu1[j]).max(-m.nu2[j]);
    }

    let is_feasible = feasibility <= tol;
    let is_strongly_stationary = is_feasible
        && stationarity <= tol
        && sign <= tol
        && slackness <= tol
        && degenerate_sign <= tol;
    Ok(StationarityReport {
        is_feasible,
        is_strongly_stationary,
        stationarity,
        feasibility,
        sign,
        slackness,
        degenerate_sign,
        licq_holds: check_mpcc_licq(problem, x, tol),
    })
}

/// Active constraint normals of the relaxed NLP as columns, paired with a
/// label saying which multiplier each column belongs to.
fn active_normals(problem: &MpccProblem, x: &[f64], tol: f64) -> Result<Vec<(Normal, Vec<f64>)>, EvalError> {
    let n = problem.num_vars();
    let unit = |i: usize| {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        e
    };
    let mut cols = Vec::new();
    for (k, row) in problem.equality_rows().iter().enumerate() {
        cols.push((Normal::Eq(k), problem.row_eval_grad(row, x)?.1));
    }
    for (k, row) in problem.inequality_rows().iter().enumerate() {
        let (r, g) = problem.row_eval_grad(row, x)?;
        if r.abs() <= tol {
            cols.push((Normal::In(k), g));
        }
    }
    let mut paired = vec![false; n];
    for (j, &(a, b)) in problem.comp_pairs.iter().enumerate() {
        paired[a] = true;
        paired[b] = true;
        if x[a].abs() <= tol {
            cols.push((Normal::Nu1(j), unit(a)));
        }
        if x[b].abs() <= tol {
            cols.push((Normal::Nu2(j), unit(b)));
        }
    }
    for (i, v) in problem.variables.iter().enumerate() {
        if paired[i] {
            continue;
        }
        if (v.lower.is_finite() && x[i] - v.lower <= tol) || (v.upper.is_finite() && v.upper - x[i] <= tol) {
            cols.push((Normal::Bound(i), unit(i)));
        }
    }
    Ok(cols)
}

#[derive(Debug, Clone, Copy)]
enum Normal {
    Eq(usize),
    In(usize),
    Nu1(usize),
    Nu2(usize),
    Bound(usize),
}

fn normal_matrix(n: usize, cols: &[(Normal, Vec<f64>)]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i])
}

/// Rank test on the active normals of the relaxed NLP at `x`.
pub fn check_mpcc_licq(problem: &MpccProblem, x: &[f64], tol: f64) -> bool {
    let Ok(cols) = active_normals(problem, x, tol) else {
        return false;
    };
    let n = problem.num_vars();
    if cols.is_empty() {
        return true;
    }
    if cols.len() > n {
        return false;
    }
    let sv = normal_matrix(n, &cols).singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return false;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count() == cols.len()
}

/// Least-squares multipliers over the active normals at `x`, for points
/// supplied without multipliers.
pub fn estimate_multipliers(problem: &MpccProblem, x: &[f64], tol: f64) -> Result<MpccMultipliers, EvalError> {
    let mut m = MpccMultipliers::zeros(problem);
    let cols = active_normals(problem, x, tol)?;
    if cols.is_empty() {
        return Ok(m);
    }
    let a = normal_matrix(problem.num_vars(), &cols);
    let g = DVector::from_vec(problem.objective.eval_grad(x)?.1);
    let Ok(sol) = a.svd(true, true).solve(&g, 1e-12) else {
        return Ok(m);
    };
    for ((which, _), v) in cols.iter().zip(sol.iter()) {
        match *which {
            Normal::Eq(k) => m.lambda_eq[k] = *v,
            Normal::In(k) => m.lambda_in[k] = *v,
            Normal::Nu1(j) => m.nu1[j] = *v,
            Normal::Nu2(j) => m.nu2[j] = *v,
            Normal::Bound(i) => m.bounds[i] = *v,
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_problem;

    fn p1() -> MpccProblem {
        load_problem("name: p1\nvars:\n x1 0 inf 1\n x2 0 inf 1\nobjective: x1+x2\npairs: x1 x2\n").unwrap()
    }

    fn p3() -> MpccProblem {
        load_problem(
            "name: p3\nvars:\n x0 -inf inf 0\n x1 0 inf 1\n x2 0 inf 1\nobjective: (x0-2)^2+x1^2+x2^2\n\
             constraints:\n 1 <= x0 + x1 - x2 <= 1\npairs: x1 x2\n",
        )
        .unwrap()
    }

    fn nu(p: &MpccProblem, a: f64, b: f64) -> MpccMultipliers {
        let mut m = MpccMultipliers::zeros(p);
        m.nu1[0] = a;
        m.nu2[0] = b;
        m
    }

    #[test]
    fn p1_origin_is_strongly_stationary() {
        let p = p1();
        let r = check_strong_stationarity(&p, &[0.0, 0.0], &nu(&p, 1.0, 1.0), 1e-6).unwrap();
        assert!(r.is_strongly_stationary);
        assert!(r.licq_holds);
        assert_eq!(r.stationarity, 0.0);
    }

    #[test]
    fn negative_biactive_multiplier_fails() {
        let p = p1();
        let r = check_strong_stationarity(&p, &[0.0, 0.0], &nu(&p, -1.0, 1.0), 1e-6).unwrap();
        assert!(!r.is_strongly_stationary);
        assert_eq!(r.stationarity, 2.0);
        assert_eq!(r.degenerate_sign, 1.0);
    }

    #[test]
    fn infeasible_point() {
        let p = p1();
        let r = check_strong_stationarity(&p, &[1.0, 1.0], &nu(&p, 1.0, 1.0), 1e-6).unwrap();
        assert!(!r.is_feasible);
        assert!(!r.is_strongly_stationary);
    }

    #[test]
    fn p3_solution() {
        let p = p3();
        let x = [1.5, 0.0, 0.5];
        assert!(check_mpcc_licq(&p, &x, 1e-6));
        // grad f = (-1, 0, 1) = lambda (1, 1, -1) + nu1 e1  =>  lambda = -1, nu1 = 1
        let mut m = nu(&p, 1.0, 0.0);
        m.lambda_eq[0] = -1.0;
        let r = check_strong_stationarity(&p, &x, &m, 1e-9).unwrap();
        assert!(r.is_strongly_stationary, "{r:?}");
        let est = estimate_multipliers(&p, &x, 1e-6).unwrap();
        assert!((est.lambda_eq[0] + 1.0).abs() < 1e-12);
        assert!((est.nu1[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_equality_breaks_licq() {
        let p = load_problem(
            "name: d\nvars:\n x0 -inf inf 0\n x1 0 inf 0\n x2 0 inf 1\nobjective: x0^2\n\
             constraints:\n 0 <= x0 <= 0\n 0 <= x0 <= 0\npairs: x1 x2\n",
        )
        .unwrap();
        assert!(!check_mpcc_licq(&p, &[0.0, 0.0, 1.0], 1e-6));
    }

    #[test]
    fn dimension_errors() {
        let p = p1();
        let mut m = nu(&p, 1.0, 1.0);
        m.nu1.push(0.0);
        assert!(matches!(
            check_strong_stationarity(&p, &[0.0, 0.0], &m, 1e-6),
            Err(StationarityError::Dimension { .. })
        ));
    }
}
