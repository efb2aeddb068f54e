mod common;

use common::{ad_fd_error, random_expression};
use mpcc_core::{parse_expression, Expression};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NVARS: usize = 3;

fn names() -> Vec<String> {
    (1..=NVARS).map(|i| format!("x{i}")).collect()
}

fn case(seed: u64) -> (Expression, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = random_expression(&mut rng, NVARS, 4);
    let x = (0..NVARS).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (e, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let (e, x) = case(seed);
        let err = ad_fd_error(&e, &x);
        prop_assert!(err <= 1e-6, "{} at {:?}: {:e}", e.to_text(&names()), x, err);
    }

    #[test]
    fn serialize_parse_round_trip_is_exact(seed in any::<u64>()) {
        let (e, x) = case(seed);
        let text = e.to_text(&names());
        let back = parse_expression(&text, &names()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for p in std::iter::once(x).chain((0..4).map(|_| (0..NVARS).map(|_| rng.gen_range(-1.0..1.0)).collect())) {
            let a = e.eval(&p).unwrap();
            let b = back.eval(&p).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits(), "{}", text);
        }
    }

    #[test]
    fn constants_and_variables(c in -1e3f64..1e3, i in 0..NVARS, x in prop::collection::vec(-10.0f64..10.0, NVARS)) {
        let g = Expression::constant(c).grad(&x).unwrap();
        prop_assert!(g.iter().all(|&v| v == 0.0));
        let g = Expression::var(i).grad(&x).unwrap();
        for (k, &v) in g.iter().enumerate() {
            prop_assert_eq!(v, if k == i { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn worked_gradients() {
    let n = names();
    let e = parse_expression("sin(x1)+x1*exp(x2)", &n).unwrap();
    let g = e.grad(&[0.0, 0.0, 0.0]).unwrap();
    assert!((g[0] - 2.0).abs() < 1e-15 && g[1] == 0.0);
    let fd = common::central_fd(&e, &[0.0, 0.0, 0.0], 1e-6);
    assert!((fd[0] - 2.0).abs() < 1e-9 && fd[1].abs() < 1e-9);
    let e = parse_expression("x1*x2", &n).unwrap();
    assert_eq!(&e.grad(&[2.0, 3.0, 0.0]).unwrap()[..2], &[3.0, 2.0]);
}
