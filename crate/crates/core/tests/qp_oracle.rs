mod common;

use common::{qp_enumeration_oracle, random_qp};
use mpcc_core::qp::{qp_kkt_residual, solve_qp, QpInstance, QpStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MATCH_TOL: f64 = 1e-7;

#[test]
fn matches_enumeration_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut active_cases = 0;
    for case in 0..200 {
        let qp = random_qp(&mut rng);
        let sol = solve_qp(&qp, None);
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        assert!(qp_kkt_residual(&qp, &sol) <= 1e-8, "case {case}");
        let oracle = qp_enumeration_oracle(&qp).unwrap_or_else(|| panic!("case {case}: oracle found nothing"));
        let dd = sol.d.iter().zip(&oracle.d).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dd <= MATCH_TOL, "case {case}: step differs by {dd:e}");
        let df = (qp.objective(&sol.d) - oracle.objective).abs();
        assert!(df <= MATCH_TOL, "case {case}: objective differs by {df:e}");
        if !sol.active_set.is_empty() {
            active_cases += 1;
        }
    }
    assert!(active_cases >= 50, "only {active_cases} instances had active inequalities");
}

#[test]
fn inactive_constraint_leaves_solution_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let n: usize = rng.gen_range(1..=8);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(n, n);
        let h = (&h + h.transpose()) * 0.5;
        let g = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let free = QpInstance::unconstrained(h.clone(), g.clone()).unwrap();
        let base = solve_qp(&free, None);
        // a' d >= a' d_unc - margin
        let a = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let margin = rng.gen_range(0.1..2.0);
        let b = a.dot(&base.d) - margin;
        let cons = QpInstance::new(
            h,
            g,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, n, a.as_slice()),
            DVector::from_element(1, b),
        )
        .unwrap();
        let sol = solve_qp(&cons, None);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((&sol.d - &base.d).amax() <= 1e-9, "case {case}");
        assert!(sol.active_set.is_empty());
    }
}

#[test]
fn deterministic_with_and_without_warm_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let qp = random_qp(&mut rng);
        let a = solve_qp(&qp, None);
        let b = solve_qp(&qp, None);
        assert_eq!(a, b);
        let warm = solve_qp(&qp, Some(&a.active_set));
        assert_eq!(warm.status, QpStatus::Optimal);
        assert!((&warm.d - &a.d).amax() <= 1e-9);
    }
}
