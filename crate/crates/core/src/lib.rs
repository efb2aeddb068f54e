//! Solver for mathematical programs with complementarity constraints (MPCC).
//!
//! Complementarity `0 <= x1 _|_ x2 >= 0` is replaced by one of four regularized
//! NLP formulations ([`regularize`]); each regularized problem is solved by a
//! quasi-Newton SQP method ([`sqp`]) built on a dense active-set QP solver
//! ([`qp`]), inside an outer loop that drives the regularization parameter to
//! zero ([`driver`]).

pub mod bench;
pub mod driver;
pub mod expr;
pub mod model;
pub mod qp;
pub mod regularize;
pub mod sqp;
pub mod stationarity;
pub mod suite;

pub use driver::{outer_solve, DriverConfig, SolveResult, SolveStatus, StopReason};
pub use expr::{parse_expression, Expression};
pub use model::{load_problem, residuals, MpccProblem, NlpProblem, Point};
pub use regularize::{build_equivalent_nlp, build_regularized, RegParam, Scheme};
pub use sqp::{kkt_residual, sqp_solve, NlpMultipliers, NlpResult, NlpStatus, SqpConfig};
pub use stationarity::{check_mpcc_licq, check_strong_stationarity, MpccMultipliers, StationarityReport};
pub use suite::{builtin_suite, enumerate_branches, SuiteProblem};
pub use bench::{performance_profile, run_bench, BenchConfig, BenchReport};
