use mpcc_core::model::Provenance;
use mpcc_core::{kkt_residual, load_problem, sqp_solve, NlpProblem, NlpStatus, SqpConfig};

struct Case {
    text: &'static str,
    optimum: &'static [f64],
}

const CASES: &[Case] = &[
    Case {
        text: "name: shift\nvars:\n x -inf inf 0\n y -inf inf 0\nobjective: (x-2)^2 + (y+1)^2\n",
        optimum: &[2.0, -1.0],
    },
    Case {
        text: "name: line\nvars:\n x -inf inf 3\n y -inf inf -1\nobjective: x^2 + y^2\nconstraints:\n 1 <= x + y <= 1\n",
        optimum: &[0.5, 0.5],
    },
    Case {
        text: "name: halfplane\nvars:\n x -inf inf 0\n y -inf inf 0\nobjective: x^2 + y^2\nconstraints:\n 2 <= x + y <= inf\n",
        optimum: &[1.0, 1.0],
    },
    Case {
        text: "name: box\nvars:\n x 0 1 0.5\nobjective: (x-3)^2\n",
        optimum: &[1.0],
    },
    Case {
        text: "name: disc\nvars:\n x -inf inf 0\n y -inf inf 0\nobjective: x + y\nconstraints:\n -inf <= x^2 + y^2 <= 2\n",
        optimum: &[-1.0, -1.0],
    },
    Case {
        text: "name: plane3\nvars:\n x -inf inf 0\n y -inf inf 0\n z -inf inf 0\n\
               objective: (x-1)^2 + (y-2)^2 + (z-3)^2\nconstraints:\n 3 <= x + y + z <= 3\n",
        optimum: &[0.0, 1.0, 2.0],
    },
    Case {
        text: "name: expo\nvars:\n x -inf inf 1\n y -inf inf 0\nobjective: exp(x) - x + (y-1)^2\n",
        optimum: &[0.0, 1.0],
    },
    Case {
        text: "name: quarter\nvars:\n x 0 inf 0.2\n y 0 inf 0.1\nobjective: -x - y\nconstraints:\n -inf <= x^2 + y^2 <= 1\n",
        optimum: &[std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    },
    Case {
        text: "name: cap\nvars:\n x -inf inf 0.5\n y -inf inf 3\nobjective: x^2 + (y-2)^2\nconstraints:\n -inf <= y + x^2 <= 1\n",
        optimum: &[0.0, 1.0],
    },
    Case {
        text: "name: quartic\nvars:\n x -inf inf 2\n y -inf inf 1\nobjective: x^4 + y^2 - 4*x\n",
        optimum: &[1.0, 0.0],
    },
];

fn nlp(text: &str) -> NlpProblem {
    load_problem(text).unwrap().base_nlp(Provenance::Plain)
}

#[test]
fn convex_problems_reach_closed_form_optima() {
    let cfg = SqpConfig::default();
    for case in CASES {
        let p = nlp(case.text);
        let r = sqp_solve(&p, &p.initial, &cfg);
        let name = case.text.lines().next().unwrap();
        assert_eq!(r.status, NlpStatus::Converged, "{name}");
        assert!(r.iterations <= 50, "{name}: {} iterations", r.iterations);
        let err = r.x.iter().zip(case.optimum).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-6, "{name}: |x - x*| = {err:e}");
        assert!(kkt_residual(&p, &r.x, &r.multipliers).unwrap() <= cfg.kkt_tol, "{name}");
        let nm = &r.multipliers;
        assert!(nm.ineq.iter().chain(&nm.lower).chain(&nm.upper).all(|&v| v >= -1e-10), "{name}");
    }
}

#[test]
fn trace_invariants() {
    let cfg = SqpConfig {
        record_trace: true,
        ..SqpConfig::default()
    };
    for case in CASES {
        let p = nlp(case.text);
        let r = sqp_solve(&p, &p.initial, &cfg);
        assert_eq!(r.trace.len(), r.iterations);
        for it in &r.trace {
            assert!(it.hessian_min_eig > 0.0);
            assert!(it.merit_after <= it.merit_before + 1e-12 * it.merit_before.abs().max(1.0));
        }
    }
}

#[test]
fn replay_is_identical() {
    let cfg = SqpConfig::default();
    for case in CASES {
        let p = nlp(case.text);
        let a = sqp_solve(&p, &p.initial, &cfg);
        let b = sqp_solve(&p, &p.initial, &cfg);
        assert_eq!(a, b);
    }
}

#[test]
fn regularized_corner_matches_grid_search() {
    let p = nlp("name: c\nvars:\n x1 0 inf 0.5\n x2 0 inf 0.5\nobjective: x1 + x2\nconstraints:\n -inf <= x1*x2 <= 0.01\n");
    let r = sqp_solve(&p, &p.initial, &SqpConfig::default());
    assert_eq!(r.status, NlpStatus::Converged);
    let mut best = f64::INFINITY;
    for i in 0..=1000 {
        for j in 0..=1000 {
            let (a, b) = (i as f64 * 1e-3, j as f64 * 1e-3);
            if a * b <= 0.01 {
                best = best.min(a + b);
            }
        }
    }
    assert!((r.objective - best).abs() < 1e-8);
}
