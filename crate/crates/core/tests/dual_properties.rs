//! Properties of the dual machinery checked against brute force.

mod common;

use common::{association, feasible, frank_wolfe_bound, full_grid_2x2, objective, random_table, rng};
use d2d_core::baseline::RateTable;
use d2d_core::dual::{
    best_response_multi, best_response_single, dual_subgradient, dual_value, recover_feasible,
    run_dual, solve_distributed, subgradient_bound, violation, Association, AssociationMode,
    DualOptions, Prices,
};
use d2d_core::reference::{solve_centralized_relaxed, CentralizedOptions};
use proptest::prelude::*;
use rand::Rng;

fn random_prices(rng: &mut impl Rng, m: usize) -> Prices {
    Prices {
        p1: (0..m).map(|_| rng.random_range(0.0..3.0)).collect(),
        p2: (0..m).map(|_| rng.random_range(0.0..3.0)).collect(),
    }
}

fn dual_at(table: &RateTable, prices: &Prices, mode: AssociationMode) -> f64 {
    let payoffs: Vec<f64> = (0..table.n_d2d())
        .map(|i| match mode {
            AssociationMode::Single => best_response_single(i, prices, table).payoff,
            AssociationMode::Multi => best_response_multi(i, prices, table).payoff,
        })
        .collect();
    dual_value(prices, table, &payoffs)
}

fn random_x(rng: &mut impl Rng, n: usize, m: usize, mode: AssociationMode) -> Association {
    let mut x = Association::zeros(n, m, mode);
    for row in &mut x.x {
        match mode {
            AssociationMode::Multi => row.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0)),
            AssociationMode::Single => {
                if rng.random_bool(0.8) {
                    row[rng.random_range(0..m)] = rng.random_range(0.0..1.0);
                }
            }
        }
    }
    x
}

#[test]
fn weak_duality_on_random_feasible_points() {
    let mut r = rng(21);
    for _ in 0..200 {
        let (n, m) = (r.random_range(1..6), r.random_range(1..5));
        let t = random_table(&mut r, n, m);
        let p = random_prices(&mut r, m);
        for mode in [AssociationMode::Single, AssociationMode::Multi] {
            let x = recover_feasible(&random_x(&mut r, n, m, mode), &t);
            assert!(feasible(&t, &x.x, 1e-12));
            let d = dual_at(&t, &p, mode);
            let f = objective(&t, &x.x);
            assert!(d >= f - 1e-9 * f.abs().max(1.0), "D {d} < f {f}");
        }
        // The single-channel dual is the smaller of the two.
        assert!(dual_at(&t, &p, AssociationMode::Single) <= dual_at(&t, &p, AssociationMode::Multi) + 1e-9);
    }
}

#[test]
fn dual_function_is_midpoint_convex() {
    let mut r = rng(22);
    for _ in 0..300 {
        let (n, m) = (r.random_range(1..6), r.random_range(1..5));
        let t = random_table(&mut r, n, m);
        let (a, b) = (random_prices(&mut r, m), random_prices(&mut r, m));
        let mid = Prices {
            p1: a.p1.iter().zip(&b.p1).map(|(x, y)| 0.5 * (x + y)).collect(),
            p2: a.p2.iter().zip(&b.p2).map(|(x, y)| 0.5 * (x + y)).collect(),
        };
        for mode in [AssociationMode::Single, AssociationMode::Multi] {
            let (da, db, dm) = (dual_at(&t, &a, mode), dual_at(&t, &b, mode), dual_at(&t, &mid, mode));
            assert!(dm <= 0.5 * (da + db) + 1e-9, "{mode:?}: {dm} > mean of {da}, {db}");
        }
    }
}

#[test]
fn demand_falls_with_own_price() {
    let mut r = rng(23);
    for _ in 0..300 {
        let (n, m) = (r.random_range(1..5), r.random_range(1..5));
        let t = random_table(&mut r, n, m);
        let p = random_prices(&mut r, m);
        let j = r.random_range(0..m);
        let mut q = p.clone();
        if r.random_bool(0.5) {
            q.p1[j] += r.random_range(0.01..2.0);
        } else {
            q.p2[j] += r.random_range(0.01..2.0);
        }
        for i in 0..n {
            let (before, after) = (best_response_multi(i, &p, &t), best_response_multi(i, &q, &t));
            assert!(after.x[j] <= before.x[j] + 1e-12, "multi {} -> {}", before.x[j], after.x[j]);
            let take = |s: d2d_core::dual::SingleResponse| if s.channel == Some(j) { s.x } else { 0.0 };
            let (before, after) = (best_response_single(i, &p, &t), best_response_single(i, &q, &t));
            assert!(take(after) <= take(before) + 1e-12);
        }
    }
}

#[test]
fn subgradient_never_exceeds_its_bound() {
    let mut r = rng(24);
    for _ in 0..300 {
        let (n, m) = (r.random_range(1..8), r.random_range(1..6));
        let t = random_table(&mut r, n, m);
        let bound = subgradient_bound(&t);
        let x = random_x(&mut r, n, m, AssociationMode::Multi);
        assert!(dual_subgradient(&t, &x).norm_sq().sqrt() <= bound + 1e-12);
    }
    let t = random_table(&mut r, 6, 4);
    let rep = run_dual(&t, &DualOptions::default(), AssociationMode::Single).unwrap();
    assert!(rep.max_subgrad_norm <= rep.subgrad_bound + 1e-12);
}

#[test]
fn multi_response_matches_three_channel_grid() {
    let mut r = rng(25);
    for _ in 0..30 {
        let t = random_table(&mut r, 1, 3);
        let p = random_prices(&mut r, 3);
        let resp = best_response_multi(0, &p, &t);
        let cost: Vec<f64> = (0..3).map(|j| t.coef(0, j) * p.p1[j] + p.p2[j]).collect();
        let mut grid = f64::NEG_INFINITY;
        for a in 0..=100 {
            for b in 0..=100 {
                for c in 0..=100 {
                    let x = [a as f64 * 0.01, b as f64 * 0.01, c as f64 * 0.01];
                    let rate: f64 = (0..3).map(|j| x[j] * t.rate[0][j]).sum();
                    let spent: f64 = (0..3).map(|j| x[j] * cost[j]).sum();
                    grid = grid.max(t.curve.eval(rate) - spent);
                }
            }
        }
        assert!(resp.payoff >= grid - 1e-12, "{} < grid {grid}", resp.payoff);
        // Payoff is Lipschitz in x, so a 0.01 grid lands close.
        assert!(resp.payoff - grid < 0.2, "{} vs grid {grid}", resp.payoff);
    }
}

#[test]
fn centralized_matches_full_grid_on_two_by_two() {
    let mut r = rng(26);
    for _ in 0..10 {
        let t = random_table(&mut r, 2, 2);
        let (g, gx) = full_grid_2x2(&t, 0.02);
        let cen = solve_centralized_relaxed(&t, &CentralizedOptions::default()).unwrap();
        let slack = frank_wolfe_bound(&t, &gx);
        assert!(cen.objective >= g - 1e-9, "centralized {} below grid {g}", cen.objective);
        assert!(cen.objective <= g + slack + 1e-9);
        assert!(feasible(&t, &cen.final_x.x, 1e-9));
        // The grid point is itself no better than the certified optimum.
        assert!(frank_wolfe_bound(&t, &cen.final_x.x) <= slack + 1e-6);
        let _ = association(gx);
    }
}

#[test]
fn polyak_steps_reach_the_minimum_of_a_toy_dual() {
    // No interference, so only the two occupancy prices matter.
    let t = RateTable::from_parts(
        vec![vec![3.0, 5.0], vec![6.0, 2.0], vec![4.0, 4.0]],
        vec![0.0; 3],
        vec![1.0; 2],
    );
    let d = |a: f64, b: f64| {
        dual_at(
            &t,
            &Prices {
                p1: vec![0.0; 2],
                p2: vec![a, b],
            },
            AssociationMode::Multi,
        )
    };
    let (mut ca, mut cb, mut half, mut step): (f64, f64, f64, f64) = (2.5, 2.5, 2.5, 0.01);
    let mut best = f64::INFINITY;
    for _ in 0..4 {
        let (lo_a, lo_b) = ((ca - half).max(0.0), (cb - half).max(0.0));
        let k = (2.0 * half / step).round() as usize;
        for u in 0..=k {
            for v in 0..=k {
                let (a, b) = (lo_a + u as f64 * step, lo_b + v as f64 * step);
                let val = d(a, b);
                if val < best {
                    (best, ca, cb) = (val, a, b);
                }
            }
        }
        half = 5.0 * step;
        step /= 10.0;
    }
    let rep = run_dual(
        &t,
        &DualOptions {
            polish_iters: 0,
            ..DualOptions::default()
        },
        AssociationMode::Multi,
    )
    .unwrap();
    assert!(rep.best_dual >= best - 1e-9, "{} below grid minimum {best}", rep.best_dual);
    assert!(rep.best_dual - best < 1e-3, "{} vs {best}", rep.best_dual);
}

#[test]
fn distributed_on_scenario_instances() {
    for inst in common::scenario_instances(8, 5, 5, 27) {
        let t = &inst.table;
        let rep = solve_distributed(t, &DualOptions::default()).unwrap();
        let cen = solve_centralized_relaxed(t, &CentralizedOptions::default()).unwrap();
        assert!(rep.violation <= 1e-9 && feasible(t, &rep.final_x.x, 1e-9));
        assert!(rep.final_x.is_single());
        assert!(rep.best_primal <= cen.objective + 1e-9 * cen.objective.abs().max(1.0));
        assert!(rep.gap <= 0.05, "gap {} on drop {}", rep.gap, inst.topology.drop_index);
    }
}

#[test]
fn solvers_are_deterministic() {
    let t = random_table(&mut rng(28), 6, 4);
    let a = solve_distributed(&t, &DualOptions::default()).unwrap();
    let b = solve_distributed(&t, &DualOptions::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let a = solve_centralized_relaxed(&t, &CentralizedOptions::default()).unwrap();
    let b = solve_centralized_relaxed(&t, &CentralizedOptions::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

fn table_and_x() -> impl Strategy<Value = (RateTable, Association)> {
    (1usize..7, 1usize..6, any::<u64>(), 0.0f64..3.0).prop_map(|(n, m, seed, spread)| {
        let mut r = rng(seed);
        let t = random_table(&mut r, n, m);
        let mut x = Association::zeros(n, m, AssociationMode::Multi);
        x.x.iter_mut()
            .flatten()
            .for_each(|v| *v = (r.random_range(0.0..1.0) * spread).min(1.0));
        (t, x)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn recovery_is_feasible_and_only_shrinks((t, x) in table_and_x()) {
        let y = recover_feasible(&x, &t);
        prop_assert!(violation(&y, &t) <= 1e-12);
        for (a, b) in y.x.iter().flatten().zip(x.x.iter().flatten()) {
            prop_assert!(*a <= *b && *a >= 0.0);
        }
        // Already feasible input comes back untouched.
        prop_assert_eq!(recover_feasible(&y, &t), y);
    }
}
