//! The four regularized NLP formulations of an MPCC.
//!
//! | scheme       | rows added after the original constraints          |
//! |--------------|----------------------------------------------------|
//! | `Reg`        | `t - x1j*x2j >= 0`, one per pair                   |
//! | `RegOne`     | `t - sum_j x1j*x2j >= 0`                           |
//! | `RegEq`      | `x1j*x2j - t = 0`, one per pair                    |
//! | `RegEqOne`   | `sum_j x1j*x2j - t = 0`                            |
//!
//! Every scheme also carries `x1 >= 0`, `x2 >= 0` as simple bounds.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::expr::Expression;
use crate::model::{MpccProblem, NlpProblem, Provenance, RowOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Scheme {
    Reg,
    RegOne,
    RegEq,
    RegEqOne,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Reg, Scheme::RegOne, Scheme::RegEq, Scheme::RegEqOne];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Reg => "reg",
            Scheme::RegOne => "reg-one",
            Scheme::RegEq => "reg-eq",
            Scheme::RegEqOne => "reg-eq-one",
        }
    }

    /// Whether the scheme uses a single aggregated row for all pairs.
    pub fn is_aggregated(self) -> bool {
        matches!(self, Scheme::RegOne | Scheme::RegEqOne)
    }

    pub fn is_equality(self) -> bool {
        matches!(self, Scheme::RegEq | Scheme::RegEqOne)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown scheme '{0}' (expected reg, reg-one, reg-eq or reg-eq-one)")]
pub struct UnknownScheme(pub String);

impl FromStr for Scheme {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reg" => Ok(Scheme::Reg),
            "reg-one" | "regone" | "reg_one" => Ok(Scheme::RegOne),
            "reg-eq" | "regeq" | "reg_eq" => Ok(Scheme::RegEq),
            "reg-eq-one" | "regeqone" | "reg_eq_one" => Ok(Scheme::RegEqOne),
            other => Err(UnknownScheme(other.to_string())),
        }
    }
}

/// Regularization parameter `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct RegParam(f64);

#[derive(Debug, Clone, PartialEq, Error)]
#[error("regularization parameter must be finite and nonnegative, got {0}")]
pub struct InvalidRegParam(pub f64);

impl RegParam {
    pub fn new(t: f64) -> Result<Self, InvalidRegParam> {
        if t.is_finite() && t >= 0.0 {
            Ok(RegParam(t))
        } else {
            Err(InvalidRegParam(t))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn pair_product(i: usize, j: usize) -> Expression {
    Expression::mul(Expression::var(i), Expression::var(j))
}

pub fn build_regularized(problem: &MpccProblem, scheme: Scheme, t: RegParam) -> NlpProblem {
    let t = t.value();
    let mut nlp = problem.base_nlp(Provenance::Regularized { scheme, t });
    let pairs = &problem.comp_pairs;
    let tc = || Expression::constant(t);
    match scheme {
        Scheme::Reg => {
            for (k, &(i, j)) in pairs.iter().enumerate() {
                nlp.push_inequality(
                    Expression::sub(tc(), pair_product(i, j)),
                    RowOrigin::Regularization { pair: Some(k) },
                );
            }
        }
        Scheme::RegEq => {
            for (k, &(i, j)) in pairs.iter().enumerate() {
                nlp.push_equality(
                    Expression::sub(pair_product(i, j), tc()),
                    RowOrigin::Regularization { pair: Some(k) },
                );
            }
        }
        Scheme::RegOne | Scheme::RegEqOne if !pairs.is_empty() => {
            let sum = Expression::sum(pairs.iter().map(|&(i, j)| pair_product(i, j)));
            let origin = RowOrigin::Regularization { pair: None };
            if scheme == Scheme::RegOne {
                nlp.push_inequality(Expression::sub(tc(), sum), origin);
            } else {
                nlp.push_equality(Expression::sub(sum, tc()), origin);
            }
        }
        _ => {}
    }
    nlp
}

/// The NLP with `x1j*x2j <= 0`, identical to `Reg` at `t = 0`.
pub fn build_equivalent_nlp(problem: &MpccProblem) -> NlpProblem {
    build_regularized(problem, Scheme::Reg, RegParam(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_problem;

    fn three_pairs() -> MpccProblem {
        load_problem(
            "name: q3\nvars:\n a1 0 inf 1\n b1 0 inf 1\n a2 0 inf 1\n b2 0 inf 1\n a3 0 inf 1\n b3 0 inf 1\n\
             objective: a1+b1+a2+b2+a3+b3\nconstraints:\n 1 <= a1 + a2 <= inf\npairs:\n a1 b1\n a2 b2\n a3 b3\n",
        )
        .unwrap()
    }

    fn bare() -> MpccProblem {
        load_problem("name: b\nvars:\n x1 0 inf 1\n x2 0 inf 1\nobjective: x1+x2\npairs: x1 x2\n")
            .unwrap()
    }

    fn t(v: f64) -> RegParam {
        RegParam::new(v).unwrap()
    }

    #[test]
    fn row_counts_per_scheme() {
        let p = three_pairs();
        let base = p.inequality_rows().len();
        let reg = build_regularized(&p, Scheme::Reg, t(0.1));
        assert_eq!(reg.inequalities.len(), base + 3);
        let one = build_regularized(&p, Scheme::RegOne, t(0.1));
        assert_eq!(one.inequalities.len(), base + 1);
        let eq = build_regularized(&p, Scheme::RegEq, t(0.1));
        assert_eq!(eq.equalities.len(), 3);
        assert_eq!(eq.inequalities.len(), base);
        let eqone = build_regularized(&p, Scheme::RegEqOne, t(0.1));
        assert_eq!(eqone.equalities.len(), 1);
        // pair order is preserved
        assert_eq!(
            reg.in_origin[base..].to_vec(),
            (0..3)
                .map(|k| RowOrigin::Regularization { pair: Some(k) })
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn reg_zero_is_complementarity() {
        let nlp = build_regularized(&bare(), Scheme::Reg, t(0.0));
        assert!(nlp.is_feasible(&[0.0, 0.0], 0.0).unwrap());
        assert!(!nlp.is_feasible(&[1.0, 1.0], 0.0).unwrap());
    }

    #[test]
    fn equivalent_nlp_matches_reg_zero() {
        let p = bare();
        let eq = build_equivalent_nlp(&p);
        assert_eq!(eq, build_regularized(&p, Scheme::Reg, t(0.0)));
        // x1 >= 0, x2 >= 0 as bounds and -x1*x2 >= 0
        assert_eq!(eq.lower, vec![0.0, 0.0]);
        assert_eq!(eq.inequalities.len(), 1);
        assert_eq!(eq.inequalities[0].eval(&[2.0, 3.0]).unwrap(), -6.0);
        assert!(eq.is_feasible(&[0.0, 5.0], 0.0).unwrap());
    }

    #[test]
    fn reg_eq_excludes_zero_members() {
        let p = three_pairs();
        let nlp = build_regularized(&p, Scheme::RegEq, t(0.01));
        let x = [0.0, 1.0, 0.1, 0.1, 0.1, 0.1];
        assert!(nlp.equalities[0].eval(&x).unwrap() != 0.0);
    }

    #[test]
    fn scheme_names_parse() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("reg-two".parse::<Scheme>().is_err());
        assert!(RegParam::new(-1e-3).is_err());
        assert!(RegParam::new(f64::NAN).is_err());
    }
}
