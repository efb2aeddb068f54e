#![allow(dead_code)]

use mpcc_core::expr::{BinOp, Expression, Func};
use mpcc_core::qp::QpInstance;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dense Gaussian elimination with partial pivoting; `None` when singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Strictly convex QP that is feasible by construction: rows pass through
/// or below a random point.
pub fn random_qp<R: Rng>(rng: &mut R) -> QpInstance {
    let n: usize = rng.gen_range(1..=10);
    let total: usize = rng.gen_range(0..=15);
    let neq = rng.gen_range(0..=total.min(n.saturating_sub(1)));
    let nin = total - neq;
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let h = (&h + h.transpose()) * 0.5;
    let g = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let z = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let a_eq = DMatrix::from_fn(neq, n, |_, _| rng.gen_range(-1.0..1.0));
    let b_eq = &a_eq * &z;
    let a_in = DMatrix::from_fn(nin, n, |_, _| rng.gen_range(-1.0..1.0));
    let slack = DVector::from_fn(nin, |_, _| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) });
    let b_in = &a_in * &z - slack;
    QpInstance::new(h, g, a_eq, b_eq, a_in, b_in).unwrap()
}

pub struct OracleSolution {
    pub d: Vec<f64>,
    pub objective: f64,
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Enumerates working sets by increasing size, solves each equality-constrained
/// KKT system, and returns the first candidate that is primal feasible with
/// nonnegative inequality multipliers (a KKT point, hence the minimizer).
pub fn qp_enumeration_oracle(qp: &QpInstance) -> Option<OracleSolution> {
    let n = qp.h.nrows();
    let neq = qp.a_eq.nrows();
    let nin = qp.a_in.nrows();
    let feas_tol = 1e-9;
    for k in 0..=nin.min(n.saturating_sub(neq)) {
        let mut sets = Vec::new();
        combinations(nin, k, 0, &mut Vec::new(), &mut sets);
        for set in sets {
            let w = neq + set.len();
            let dim = n + w;
            let mut a = vec![vec![0.0; dim]; dim];
            let mut b = vec![0.0; dim];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = qp.h[(i, j)];
                }
                b[i] = -qp.g[i];
            }
            let rows: Vec<(Vec<f64>, f64)> = (0..neq)
                .map(|r| (qp.a_eq.row(r).iter().copied().collect(), qp.b_eq[r]))
                .chain(set.iter().map(|&r| (qp.a_in.row(r).iter().copied().collect(), qp.b_in[r])))
                .collect();
            for (r, (row, rhs)) in rows.iter().enumerate() {
                for j in 0..n {
                    a[n + r][j] = row[j];
                    a[j][n + r] = -row[j];
                }
                b[n + r] = *rhs;
            }
            // H d - A' l = -g, A d = b
            let Some(sol) = gauss_solve(a, b) else { continue };
            let d = DVector::from_column_slice(&sol[..n]);
            let feasible = (0..nin).all(|r| (qp.a_in.row(r) * &d)[0] - qp.b_in[r] >= -feas_tol);
            let signs = (neq..w).all(|r| sol[n + r] >= -1e-9);
            if feasible && signs {
                return Some(OracleSolution {
                    objective: qp.objective(&d),
                    d: d.iter().copied().collect(),
                });
            }
        }
    }
    None
}

/// Random expression over `nvars` variables whose value and derivatives stay
/// finite and moderate on `[-1, 1]^nvars`.
pub fn random_expression<R: Rng>(rng: &mut R, nvars: usize, depth: usize) -> Expression {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            Expression::var(rng.gen_range(0..nvars))
        } else {
            Expression::constant((rng.gen_range(-3.0f64..3.0) * 4.0).round() / 4.0)
        };
    }
    let sub = |rng: &mut R| random_expression(rng, nvars, depth - 1);
    // 1 + e^2 keeps arguments of log, sqrt, division and real powers positive
    let positive = |rng: &mut R| {
        let e = random_expression(rng, nvars, depth - 1);
        Expression::add(
            Expression::constant(1.0),
            Expression::binary(BinOp::Pow, e, Expression::constant(2.0)),
        )
    };
    match rng.gen_range(0..11) {
        0 => Expression::add(sub(rng), sub(rng)),
        1 => Expression::sub(sub(rng), sub(rng)),
        2 => Expression::mul(sub(rng), sub(rng)),
        3 => Expression::binary(BinOp::Div, sub(rng), positive(rng)),
        4 => Expression::neg(sub(rng)),
        5 => Expression::Call(Func::Sin, Box::new(sub(rng))),
        6 => Expression::Call(Func::Cos, Box::new(sub(rng))),
        7 => Expression::Call(Func::Exp, Box::new(Expression::Call(Func::Sin, Box::new(sub(rng))))),
        8 => Expression::Call(Func::Log, Box::new(positive(rng))),
        9 => Expression::Call(Func::Sqrt, Box::new(positive(rng))),
        _ => {
            if rng.gen_bool(0.5) {
                let k = rng.gen_range(2..=3) as f64;
                Expression::binary(BinOp::Pow, sub(rng), Expression::constant(k))
            } else {
                let e = Expression::Call(Func::Sin, Box::new(sub(rng)));
                Expression::binary(BinOp::Pow, positive(rng), e)
            }
        }
    }
}

pub fn central_fd(e: &Expression, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            (e.eval(&xp).unwrap() - e.eval(&xm).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// `|grad - fd|_inf / (1 + |grad|_inf)`.
pub fn ad_fd_error(e: &Expression, x: &[f64]) -> f64 {
    let g = e.grad(x).unwrap();
    let fd = central_fd(e, x, 1e-6);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / (1.0 + gmax)
}
