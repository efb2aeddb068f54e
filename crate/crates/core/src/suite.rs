//! Built-in test problems and the branch-enumeration oracle.
//!
//! A complementarity pair holds iff `x1j = 0` or `x2j = 0`, so an MPCC with
//! `q` pairs is the union of `2^q` ordinary NLPs. Solving all of them and
//! keeping the best gives a reference value that never touches the
//! regularized formulations.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::Expression;
use crate::model::{load_problem, MpccProblem, NlpProblem, Point, Provenance, RowOrigin};
use crate::regularize::Scheme;
use crate::sqp::{sqp_solve, NlpStatus, SqpConfig};

pub const MAX_ORACLE_PAIRS: usize = 12;

/// Reference data for one built-in problem.
#[derive(Debug, Clone)]
pub struct SuiteProblem {
    pub problem: MpccProblem,
    pub oracle_f: f64,
    /// How `oracle_f` was obtained.
    pub oracle_source: &'static str,
    /// Whether the default driver is expected to converge, in [`Scheme::ALL`] order.
    pub expected: [bool; 4],
}

impl SuiteProblem {
    pub fn expected_for(&self, scheme: Scheme) -> bool {
        let k = Scheme::ALL.iter().position(|&s| s == scheme).unwrap();
        self.expected[k]
    }
}

const CLOSED_FORM: &str = "closed-form minimum over branches";
const NUMERICAL: &str = "branch minima from an independent NLP solver";

struct Entry {
    file: &'static str,
    text: &'static str,
    oracle_f: f64,
    source: &'static str,
    expected: [bool; 4],
}

macro_rules! entry {
    ($file:literal, $f:expr, $src:expr, $exp:expr) => {
        Entry {
            file: $file,
            text: include_str!(concat!("../data/suite/", $file)),
            oracle_f: $f,
            source: $src,
            expected: $exp,
        }
    };
}

const ENTRIES: &[Entry] = &[
    entry!("p1.mpcc", 0.0, CLOSED_FORM, [true, true, true, true]),
    entry!("p2.mpcc", 1.0, CLOSED_FORM, [true, true, true, true]),
    entry!("p3.mpcc", 0.5, CLOSED_FORM, [true, true, true, true]),
    entry!("corner.mpcc", 2.0, CLOSED_FORM, [true, true, true, true]),
    entry!("bilevel.mpcc", 1.0, CLOSED_FORM, [true, true, true, true]),
    entry!("ctrl2.mpcc", 1.5, CLOSED_FORM, [true, true, true, true]),
    entry!("pairs3.mpcc", 3.0, CLOSED_FORM, [true, true, false, false]),
    entry!("linear4.mpcc", 2.25, CLOSED_FORM, [true, true, true, true]),
    entry!("pairs5.mpcc", 2.25, CLOSED_FORM, [true, true, true, true]),
    entry!("nonlin.mpcc", 0.861_992_206_6, NUMERICAL, [true, true, true, true]),
    entry!("expobj.mpcc", 0.839_484_301_0, NUMERICAL, [true, true, true, false]),
    entry!("stack.mpcc", 0.8, CLOSED_FORM, [true, true, true, true]),
];

/// File names and contents of the built-in problems.
pub fn builtin_files() -> Vec<(&'static str, &'static str)> {
    ENTRIES.iter().map(|e| (e.file, e.text)).collect()
}

pub fn builtin_suite() -> Vec<SuiteProblem> {
    ENTRIES
        .iter()
        .map(|e| SuiteProblem {
            problem: load_problem(e.text).unwrap_or_else(|err| panic!("built-in {}: {err}", e.file)),
            oracle_f: e.oracle_f,
            oracle_source: e.source,
            expected: e.expected,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("branch enumeration is limited to {MAX_ORACLE_PAIRS} pairs, problem has {0}")]
    TooManyPairs(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchResult {
    /// Bit `j` set means `x2j` is fixed to zero, clear means `x1j`.
    pub mask: u64,
    pub status: NlpStatus,
    pub f: f64,
    pub x: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Index into `branches` of the best converged branch; `None` when the
    /// oracle is unavailable because every branch failed.
    pub best: Option<usize>,
    pub branches: Vec<BranchResult>,
}

impl OracleResult {
    pub fn best_f(&self) -> Option<f64> {
        self.best.map(|i| self.branches[i].f)
    }

    pub fn best_x(&self) -> Option<&Point> {
        self.best.map(|i| &self.branches[i].x)
    }
}

/// The smooth NLP of one branch: fixed members become equality rows `x = 0`.
pub fn branch_nlp(problem: &MpccProblem, mask: u64) -> NlpProblem {
    let mut nlp = problem.base_nlp(Provenance::Branch { mask });
    for (j, &(a, b)) in problem.comp_pairs.iter().enumerate() {
        let fixed = if mask >> j & 1 == 1 { b } else { a };
        nlp.push_equality(Expression::var(fixed), RowOrigin::BranchFix { variable: fixed });
        nlp.initial[fixed] = 0.0;
    }
    nlp
}

pub fn enumerate_branches(problem: &MpccProblem, config: &SqpConfig) -> Result<OracleResult, OracleError> {
    let q = problem.q();
    if q > MAX_ORACLE_PAIRS {
        return Err(OracleError::TooManyPairs(q));
    }
    let branches: Vec<BranchResult> = (0..1u64 << q)
        .into_par_iter()
        .map(|mask| {
            let nlp = branch_nlp(problem, mask);
            let r = sqp_solve(&nlp, &nlp.initial, config);
            BranchResult {
                mask,
                status: r.status,
                f: r.objective,
                x: r.x,
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, b) in branches.iter().enumerate() {
        if b.status == NlpStatus::Converged && best.map_or(true, |k| b.f < branches[k].f) {
            best = Some(i);
        }
    }
    Ok(OracleResult { best, branches })
}
