mod common;

use proptest::prelude::*;
use rand::Rng;
use revstack_core::calculus::{fd_gradient, gradient, hessian, strict_convexity_probe};
use revstack_core::model::{quadratic_to_expr, validate, DecisionPoint, Dims, Expr, GameProblem, Objective};
use revstack_core::sampling::rng;

use common::*;

fn random_point<R: Rng>(g: &mut R, dims: &Dims, r: f64) -> DecisionPoint {
    DecisionPoint::new(dims.sizes().iter().map(|&m| (0..m).map(|_| g.gen_range(-r..r)).collect()).collect())
}

fn dims_strategy() -> impl Strategy<Value = Dims> {
    prop::collection::vec(1usize..=3, 2..=4).prop_map(|s| Dims::new(s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quadratic_to_expr_preserves_values(dims in dims_strategy(), seed in any::<u64>()) {
        let mut g = rng(seed);
        let q = random_pd_quadratic(&mut g, &dims, 1.0).with_constant(g.gen_range(-3.0..3.0));
        let e = quadratic_to_expr(&q);
        for _ in 0..100 {
            let p = random_point(&mut g, &dims, 5.0);
            let a = q.evaluate(&p).unwrap();
            let b = e.evaluate(&p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn evaluate_is_bitwise_deterministic(seed in any::<u64>()) {
        let mut g = rng(seed);
        let dims = Dims::new(vec![2, 1, 1]).unwrap();
        let obj = random_expression(&mut g);
        let p = random_point(&mut g, &dims, 4.0);
        let a = obj.evaluate(&p).unwrap();
        let b = obj.evaluate(&p).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn analytic_gradient_matches_central_differences(seed in any::<u64>()) {
        let mut g = rng(seed);
        let dims = Dims::new(vec![2, 1, 1]).unwrap();
        let objs = [Objective::Quadratic(random_pd_quadratic(&mut g, &dims, 1.0)), random_expression(&mut g)];
        for obj in &objs {
            let p = random_point(&mut g, &dims, 3.0);
            let a = gradient(obj, &p).unwrap();
            let f = fd_gradient(obj, &p, 1e-5).unwrap();
            let diff: f64 = a.to_flat().iter().zip(f.to_flat()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(diff <= 1e-6 * (1.0 + a.norm()), "diff {diff:e}");
        }
    }

    #[test]
    fn hessian_symmetric_and_constant_for_quadratics(dims in dims_strategy(), seed in any::<u64>()) {
        let mut g = rng(seed);
        let obj = Objective::Quadratic(random_pd_quadratic(&mut g, &dims, 1.0));
        let h1 = hessian(&obj, &random_point(&mut g, &dims, 5.0)).unwrap();
        let h2 = hessian(&obj, &random_point(&mut g, &dims, 5.0)).unwrap();
        prop_assert_eq!(h1.asymmetry(), 0.0);
        prop_assert_eq!(h1, h2);
    }

    #[test]
    fn expression_hessian_is_exactly_symmetric(seed in any::<u64>()) {
        let mut g = rng(seed);
        let dims = Dims::new(vec![2, 1, 1]).unwrap();
        let h = hessian(&random_expression(&mut g), &random_point(&mut g, &dims, 3.0)).unwrap();
        prop_assert_eq!(h.asymmetry(), 0.0);
    }

    #[test]
    fn validate_accepts_whatever_evaluate_accepts(dims in dims_strategy(), seed in any::<u64>(), flip in any::<bool>()) {
        let mut g = rng(seed);
        let objectives: Vec<Objective> = (0..dims.levels())
            .map(|_| {
                let q = random_pd_quadratic(&mut g, &dims, 1.0);
                let q = if flip { negate(q) } else { q };
                Objective::Quadratic(q)
            })
            .collect();
        let p = GameProblem::new(dims.clone(), objectives, None).unwrap();
        let x = random_point(&mut g, &dims, 1.0);
        prop_assert!(p.objectives.iter().all(|o| o.evaluate(&x).is_ok()));
        prop_assert!(!validate(&p).has_errors());
    }
}

fn negate(mut q: revstack_core::model::QuadraticObjective) -> revstack_core::model::QuadraticObjective {
    let n = q.dims.levels();
    for j in 1..=n {
        for k in j..=n {
            let b = q.block(j, k).scale(-1.0);
            q.set_block(j, k, b);
        }
    }
    q
}

#[test]
fn example1_gradients_and_hessian() {
    let p = example1();
    let d = example1_d();
    assert_eq!(gradient(p.objective(2), &d).unwrap().to_flat(), vec![2.0, 2.0, 6.0]);
    assert_eq!(gradient(p.objective(3), &d).unwrap().to_flat(), vec![4.0, -2.0, 6.0]);
    let h = hessian(p.objective(2), &d).unwrap();
    assert_eq!(h.to_rows(), vec![vec![2.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 2.0]]);
    assert!(strict_convexity_probe(p.objective(2), &d, 1e-8).unwrap().is_certified());
    let fd = fd_gradient(p.objective(2), &d, 1e-5).unwrap().to_flat();
    for (a, b) in fd.iter().zip([2.0, 2.0, 6.0]) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn example3_follower_value_by_hand() {
    let p = example3();
    let d = example3_d();
    // 25/4 + 9/4 + 1/4 + 1/4 − 3/2
    let want = 6.25 + 2.25 + 0.25 + 0.25 - 1.5;
    assert!((p.objective(2).evaluate(&d).unwrap() - want).abs() <= 1e-14);
}

#[test]
fn quartic_and_saddle() {
    let quartic = Objective::from(Expr::var(1, 1).pow(4));
    let at1 = sp(&[1.0, 0.0]);
    let g = fd_gradient(&quartic, &at1, 1e-4).unwrap().to_flat();
    assert!((g[0] - 4.0).abs() <= 1e-6);
    let saddle = Objective::from(Expr::var(1, 1).pow(2) - Expr::var(2, 1).pow(2));
    assert!(!strict_convexity_probe(&saddle, &sp(&[0.3, 0.1]), 1e-8).unwrap().is_certified());
    let linear = Objective::from(Expr::Constant(2.0) * Expr::var(1, 1) + Expr::var(2, 1));
    assert!(hessian(&linear, &at1).unwrap().is_zero());
    assert!(!strict_convexity_probe(&linear, &at1, 1e-8).unwrap().is_certified());
}
