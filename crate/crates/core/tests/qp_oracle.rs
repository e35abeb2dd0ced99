mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use semfilter::filter::{solve_qp, QpError, QpProblem};

fn problem(n: usize, m: usize, seed: Vec<f64>, boxed: bool) -> QpProblem {
    let mut it = seed.into_iter().cycle();
    let mut next = move || it.next().unwrap();
    let l = DMatrix::from_fn(n, n, |_, _| next());
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
    let f = DVector::from_fn(n, |_, _| 3.0 * next());
    let a = DMatrix::from_fn(m, n, |_, _| next());
    let b = DVector::from_fn(m, |_, _| next());
    let (lo, hi) = if boxed {
        (DVector::from_fn(n, |_, _| -0.5 - next().abs()), DVector::from_fn(n, |_, _| 0.5 + next().abs()))
    } else {
        (DVector::from_element(n, f64::NEG_INFINITY), DVector::from_element(n, f64::INFINITY))
    };
    QpProblem { h, f, a, b, box_lo: lo, box_hi: hi }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_enumeration(n in 1usize..5, m in 0usize..7, boxed in any::<bool>(),
                           seed in prop::collection::vec(-1.0f64..1.0, 64)) {
        let n = if boxed { n.min(3) } else { n };
        let p = problem(n, m, seed, boxed);
        let reference = common::brute_force_qp(&p);
        match (solve_qp(&p), reference) {
            (Ok(sol), Some((_, obj))) => {
                prop_assert!((sol.objective - obj).abs() <= 1e-6 * (1.0 + obj.abs()), "{} vs {}", sol.objective, obj);
                // complementarity rounding grows like |lambda| |x|, which gets
                // large when random rows are nearly parallel
                let lam = sol.active.iter().map(|a| a.1.abs()).fold(0.0, f64::max);
                let scale = (1.0 + lam) * (1.0 + sol.x.amax());
                prop_assert!(sol.kkt_residual <= 1e-6 + 1e-10 * scale, "kkt {} at scale {}", sol.kkt_residual, scale);
            }
            (Err(QpError::Infeasible), None) => {}
            (got, want) => prop_assert!(false, "solver {:?} reference {:?}", got.map(|s| s.objective), want.map(|w| w.1)),
        }
    }

    #[test]
    fn deterministic(n in 1usize..6, m in 0usize..8, seed in prop::collection::vec(-1.0f64..1.0, 80)) {
        let p = problem(n, m, seed, true);
        let a = solve_qp(&p);
        let b = solve_qp(&p);
        prop_assert_eq!(a, b);
    }
}
