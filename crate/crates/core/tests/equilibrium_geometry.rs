mod common;

use proptest::prelude::*;
use rand::Rng;
use revstack_core::calculus::gradient;
use revstack_core::equilibrium::{
    desired_equilibrium, team_optimum_constrained, team_optimum_descent, team_optimum_quadratic, Method,
};
use revstack_core::geometry::{
    exposed_point_probe, leader_existence_check, supporting_hyperplane_at, SublevelProbe,
};
use revstack_core::linalg::{dot, Matrix};
use revstack_core::model::{DecisionPoint, Dims, Expr, GameProblem, LinearConstraints, Objective};
use revstack_core::sampling::{rng, BallSampler};
use revstack_core::EquilibriumError;

use common::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn descent_agrees_with_linear_solve_on_random_games() {
    for seed in 0..20 {
        let dims = Dims::new(vec![2, 1, 2]).unwrap();
        let p = random_quadratic_game(100 + seed, &dims);
        let a = team_optimum_quadratic(&p).unwrap();
        let b = team_optimum_descent(&p, &[DecisionPoint::zeros(&dims)], 1e-10, 500_000).unwrap();
        assert_eq!(b.method, Method::Descent);
        let e = dist(&a.point.to_flat(), &b.point.to_flat());
        assert!(e <= 1e-6, "seed {seed}: {e:e}");
        assert!(a.kkt_residual <= 1e-9 * (1.0 + a.point.norm()));

        // Independent oracle: the stationarity system solved by hand-rolled elimination.
        let full = match p.objective(1) {
            Objective::Quadratic(q) => q.to_full().unwrap(),
            _ => unreachable!(),
        };
        let rhs: Vec<f64> = full.linear.iter().map(|v| -v).collect();
        let x = gauss_solve(&full.hessian.to_rows(), &rhs);
        assert!(dist(&x, &a.point.to_flat()) <= 1e-9);
    }
}

#[test]
fn worked_example_equilibria() {
    let e1 = team_optimum_quadratic(&example1_quadratic()).unwrap();
    assert!(dist(&e1.point.to_flat(), &[2.0, 1.0, 3.0]) <= 1e-12);
    let e1x = desired_equilibrium(&example1(), 0).unwrap();
    assert!(dist(&e1x.point.to_flat(), &[2.0, 1.0, 3.0]) <= 1e-6);
    let e3 = desired_equilibrium(&example3(), 0).unwrap();
    assert!(dist(&e3.point.to_flat(), &example3_d().to_flat()) <= 1e-6);
}

#[test]
fn two_basin_quartic() {
    let dims = Dims::new(vec![1, 1]).unwrap();
    let j = (Expr::var(1, 1).pow(2) - Expr::Constant(1.0)).pow(2) + Expr::var(2, 1).pow(2);
    let p = GameProblem::new(dims, vec![j.clone().into(), j.into()], None).unwrap();
    let r = team_optimum_descent(&p, &[sp(&[2.0, 0.5]), sp(&[-2.0, 0.5])], 1e-9, 100_000).unwrap();
    assert!((r.point.level(1)[0].abs() - 1.0).abs() <= 1e-8);
    assert!(r.kkt_residual <= 1e-9);
}

#[test]
fn constrained_examples() {
    let base = example1_quadratic();
    let dims = base.dims.clone();
    let boxed = GameProblem {
        constraints: Some(LinearConstraints::boxes(&dims, &[(1, -10.0, 10.0), (2, -10.0, 10.0), (3, -10.0, 10.0)])),
        ..base.clone()
    };
    let r = team_optimum_constrained(&boxed).unwrap();
    assert!(dist(&r.point.to_flat(), &[2.0, 1.0, 3.0]) <= 1e-12);
    assert!(r.active_set.is_empty());

    let mut cap = LinearConstraints::empty(&dims);
    cap.push_row(&dims, &[0.0, 0.0, 1.0], 2.0);
    let capped = GameProblem { constraints: Some(cap), ..base.clone() };
    let r = team_optimum_constrained(&capped).unwrap();
    assert!(dist(&r.point.to_flat(), &[2.0, 1.0, 2.0]) <= 1e-12);
    assert_eq!(r.active_set, vec![0]);

    let mut bad = LinearConstraints::empty(&dims);
    bad.push_row(&dims, &[1.0, 0.0, 0.0], 0.0);
    bad.push_row(&dims, &[-1.0, 0.0, 0.0], -1.0);
    let infeasible = GameProblem { constraints: Some(bad), ..base };
    assert!(matches!(team_optimum_constrained(&infeasible), Err(EquilibriumError::Infeasible)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Active-set answers are feasible and beat every sampled feasible point.
    #[test]
    fn active_set_is_feasible_and_optimal(seed in any::<u64>(), rows in 1usize..6) {
        let dims = Dims::new(vec![2, 1]).unwrap();
        let mut p = random_quadratic_game(seed, &dims);
        let mut g = rng(seed ^ 0x5eed);
        let interior: Vec<f64> = (0..3).map(|_| g.gen_range(-1.0..1.0)).collect();
        let mut cons = LinearConstraints::empty(&dims);
        for _ in 0..rows {
            let a: Vec<f64> = (0..3).map(|_| g.gen_range(-1.0..1.0)).collect();
            cons.push_row(&dims, &a, dot(&a, &interior) + g.gen_range(0.0..0.5));
        }
        p.constraints = Some(cons.clone());
        let r = team_optimum_constrained(&p).unwrap();
        prop_assert!(cons.max_violation(&r.point) <= 1e-9);
        let f = p.objective(1).flatten(&dims).unwrap();
        for _ in 0..2000 {
            let x: Vec<f64> = interior.iter().map(|c| c + g.gen_range(-4.0..4.0)).collect();
            let xp = DecisionPoint::from_flat(&dims, &x);
            if cons.max_violation(&xp) <= 0.0 {
                prop_assert!(r.objective_value <= f.value(&x) + 1e-9);
            }
        }
    }

    /// Convex sublevel sets lie on the non-positive side of the gradient plane.
    #[test]
    fn convex_sublevel_sets_are_one_sided(seed in any::<u64>()) {
        let dims = Dims::new(vec![1, 2, 1]).unwrap();
        let mut g = rng(seed);
        let obj = Objective::Quadratic(random_pd_quadratic(&mut g, &dims, 0.5));
        let p = DecisionPoint::from_flat(&dims, &(0..4).map(|_| g.gen_range(-2.0..2.0)).collect::<Vec<_>>());
        let plane = supporting_hyperplane_at(&obj, &p, None).unwrap();
        let n = plane.normal.to_flat();
        let f = obj.flatten(&dims).unwrap();
        let level = f.value(&p.to_flat());
        let anchor = p.to_flat();
        for _ in 0..10_000 {
            let x: Vec<f64> = anchor.iter().map(|a| a + g.gen_range(-3.0..3.0)).collect();
            if f.value(&x) <= level {
                let off: Vec<f64> = x.iter().zip(&anchor).map(|(a, b)| a - b).collect();
                prop_assert!(dot(&n, &off) <= 1e-9);
            }
        }
    }

    #[test]
    fn leader_check_is_scale_equivariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let dims = Dims::new(vec![1, 1, 1]).unwrap();
        let p = random_quadratic_game(seed, &dims);
        let d = team_optimum_quadratic(&p).unwrap().point;
        let v = leader_existence_check(&p, &d, Some(0.0)).unwrap();
        let mut scaled = p.clone();
        scaled.objectives[1] = match &p.objectives[1] {
            Objective::Quadratic(q) => {
                let mut q = q.clone();
                for m in q.a.iter_mut() {
                    *m = m.scale(c);
                }
                for l in q.l.iter_mut() {
                    l.iter_mut().for_each(|x| *x *= c);
                }
                Objective::Quadratic(q)
            }
            _ => unreachable!(),
        };
        let w = leader_existence_check(&scaled, &d, Some(0.0)).unwrap();
        prop_assert_eq!(v.passed, w.passed);
    }
}

#[test]
fn hyperplane_residual_at_point_is_zero() {
    let p = example1();
    let d = example1_d();
    for lvl in [2, 3] {
        let plane = supporting_hyperplane_at(p.objective(lvl), &d, None).unwrap();
        assert_eq!(plane.residual(&d), 0.0);
    }
    let plane = supporting_hyperplane_at(p.objective(2), &d, None).unwrap();
    assert_eq!(plane.normal.to_flat(), gradient(p.objective(2), &d).unwrap().to_flat());
    let bowl = Objective::from(Expr::var(1, 1).pow(2) + Expr::var(2, 1).pow(2));
    assert!(supporting_hyperplane_at(&bowl, &sp(&[0.0, 0.0]), None).is_err());
}

#[test]
fn exposed_point_probes() {
    let p = example1();
    let d = example1_d();
    let plane = supporting_hyperplane_at(p.objective(2), &d, None).unwrap();
    let probe = SublevelProbe::new(p.objective(2).clone(), d.clone()).unwrap();
    assert!(exposed_point_probe(&probe, &plane, BallSampler::new(10_000, 5.0, 0)).unwrap().is_consistent());

    let cap = Objective::from(-(Expr::var(1, 1).pow(2) + Expr::var(2, 1).pow(2) + Expr::var(3, 1).pow(2)));
    let plane = supporting_hyperplane_at(&cap, &d, None).unwrap();
    let probe = SublevelProbe::new(cap, d).unwrap();
    assert!(!exposed_point_probe(&probe, &plane, BallSampler::new(1000, 1.0, 0)).unwrap().is_consistent());
}

#[test]
fn leader_check_fails_without_leader_sensitivity() {
    let dims = Dims::new(vec![1, 1, 1]).unwrap();
    let j = Expr::var(2, 1).pow(2) + Expr::var(3, 1).pow(2);
    let p = GameProblem::new(dims, vec![j.clone().into(), j.clone().into(), j.into()], None).unwrap();
    let v = leader_existence_check(&p, &sp(&[1.0, 1.0, 1.0]), None).unwrap();
    assert!(!v.passed);
    let _ = Matrix::identity(1);
}
