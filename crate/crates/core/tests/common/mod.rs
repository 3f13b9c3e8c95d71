//! Brute-force references shared by the integration tests. Nothing here
//! calls into the solvers under test.

#![allow(dead_code)]

use d2d_core::baseline::RateTable;
use d2d_core::dual::{Association, AssociationMode};
use d2d_core::harness::{build_instance, Instance};
use d2d_core::model::SystemParams;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hand-rolled random table in solver-friendly ranges.
pub fn random_table(rng: &mut impl Rng, n: usize, m: usize) -> RateTable {
    let rate = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0.5..8.0)).collect())
        .collect();
    let h = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
    let budget = (0..m).map(|_| rng.random_range(0.1..1.5)).collect();
    RateTable::from_parts(rate, h, budget)
}

/// The first `count` generated drops at this size whose baseline is feasible.
pub fn scenario_instances(n_cellular: usize, n_d2d: usize, count: usize, seed: u64) -> Vec<Instance> {
    let params = SystemParams {
        n_cellular,
        n_d2d,
        ..Default::default()
    };
    let mut out = Vec::new();
    let mut k = 0;
    while out.len() < count {
        if let Ok(inst) = build_instance(&params, seed, k) {
            out.push(inst);
        }
        k += 1;
        assert!(k < 100 * count as u64, "too many infeasible baselines");
    }
    out
}

pub fn objective(table: &RateTable, x: &[Vec<f64>]) -> f64 {
    x.iter()
        .zip(&table.rate)
        .map(|(row, rates)| table.curve.eval(row.iter().zip(rates).map(|(a, r)| a * r).sum()))
        .sum()
}

/// Both constraint families in physical units, with slack `tol` relative
/// to the budget.
pub fn feasible(table: &RateTable, x: &[Vec<f64>], tol: f64) -> bool {
    (0..table.n_channels()).all(|j| {
        let occ: f64 = x.iter().map(|row| row[j]).sum();
        let intf: f64 = x.iter().zip(&table.h).map(|(row, h)| row[j] * h).sum();
        occ <= 1.0 + tol && intf <= table.budget[j] * (1.0 + tol)
    }) && x.iter().flatten().all(|&v| (0.0..=1.0).contains(&v))
}

/// Coordinate ascent over the lattice `step * Z` inside the feasible set.
/// Moves: one entry up or down by `k` steps, or `k` steps handed from one
/// pair to another on the same channel.
pub fn lattice_ascent(table: &RateTable, step: f64) -> Vec<Vec<f64>> {
    let (n, m) = (table.n_d2d(), table.n_channels());
    let levels = (1.0 / step).round() as i64;
    let mut q = vec![vec![0i64; m]; n];
    let to_x = |q: &[Vec<i64>]| -> Vec<Vec<f64>> {
        q.iter()
            .map(|row| row.iter().map(|&k| k as f64 / levels as f64).collect())
            .collect()
    };
    let mut best = objective(table, &to_x(&q));
    let jumps: Vec<i64> = [levels, levels / 4, levels / 10, 5, 1]
        .into_iter()
        .filter(|&k| k >= 1)
        .collect();
    loop {
        let mut improved = false;
        for &k in &jumps {
            for j in 0..m {
                for a in 0..n {
                    for dir in [k, -k] {
                        let mut cand = q.clone();
                        cand[a][j] += dir;
                        if !(0..=levels).contains(&cand[a][j]) {
                            continue;
                        }
                        let x = to_x(&cand);
                        if feasible(table, &x, 1e-12) {
                            let v = objective(table, &x);
                            if v > best + 1e-13 {
                                best = v;
                                q = cand;
                                improved = true;
                            }
                        }
                    }
                    for b in 0..n {
                        if a == b || q[a][j] < k || q[b][j] + k > levels {
                            continue;
                        }
                        let mut cand = q.clone();
                        cand[a][j] -= k;
                        cand[b][j] += k;
                        let x = to_x(&cand);
                        if feasible(table, &x, 1e-12) {
                            let v = objective(table, &x);
                            if v > best + 1e-13 {
                                best = v;
                                q = cand;
                                improved = true;
                            }
                        }
                    }
                }
            }
        }
        if !improved {
            return to_x(&q);
        }
    }
}

/// Every lattice point of the `2 x 2` relaxed problem.
pub fn full_grid_2x2(table: &RateTable, step: f64) -> (f64, Vec<Vec<f64>>) {
    assert_eq!((table.n_d2d(), table.n_channels()), (2, 2));
    let levels = (1.0 / step).round() as i64;
    let v = |k: i64| k as f64 / levels as f64;
    let mut best = (f64::NEG_INFINITY, vec![vec![0.0; 2]; 2]);
    for a in 0..=levels {
        for b in 0..=(levels - a) {
            for c in 0..=levels {
                for d in 0..=(levels - c) {
                    let x = vec![vec![v(a), v(c)], vec![v(b), v(d)]];
                    if feasible(table, &x, 1e-12) {
                        let o = objective(table, &x);
                        if o > best.0 {
                            best = (o, x);
                        }
                    }
                }
            }
        }
    }
    best
}

/// Frank-Wolfe certificate: for concave `f` and feasible `x`,
/// `max f - f(x) <= max_y grad f(x) . (y - x)` over the feasible set. Each
/// channel's linear program has three or fewer variables here, so its
/// optimum is found by trying every vertex.
pub fn frank_wolfe_bound(table: &RateTable, x: &[Vec<f64>]) -> f64 {
    let (n, m) = (table.n_d2d(), table.n_channels());
    assert!(n <= 3, "vertex enumeration sized for at most three pairs");
    let grad: Vec<Vec<f64>> = x
        .iter()
        .zip(&table.rate)
        .map(|(row, rates)| {
            let r: f64 = row.iter().zip(rates).map(|(a, b)| a * b).sum();
            let slope = table.curve.marginal(r);
            rates.iter().map(|rr| slope * rr).collect()
        })
        .collect();
    let mut bound = 0.0;
    for j in 0..m {
        let g: Vec<f64> = (0..n).map(|i| grad[i][j]).collect();
        let cur: f64 = (0..n).map(|i| g[i] * x[i][j]).sum();
        let best = channel_lp_max(&g, &table.h, table.budget[j]);
        bound += (best - cur).max(0.0);
    }
    bound
}

/// `max g . y` over `{0 <= y <= 1, sum y <= 1, h . y <= b}` by vertex
/// enumeration.
fn channel_lp_max(g: &[f64], h: &[f64], b: f64) -> f64 {
    let n = g.len();
    // Physical interference densities are ~1e-20; rescale before pivoting.
    let scale = h.iter().cloned().fold(b, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let h: Vec<f64> = h.iter().map(|v| v / scale).collect();
    let b = b / scale;
    // Constraints as rows a . y <= c.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        rows.push((e.clone(), 1.0));
        e[i] = -1.0;
        rows.push((e, 0.0));
    }
    rows.push((vec![1.0; n], 1.0));
    rows.push((h, b));
    let mut best = f64::NEG_INFINITY;
    for combo in combinations(rows.len(), n) {
        let a: Vec<Vec<f64>> = combo.iter().map(|&r| rows[r].0.clone()).collect();
        let c: Vec<f64> = combo.iter().map(|&r| rows[r].1).collect();
        if let Some(y) = solve_linear(a, c) {
            if rows
                .iter()
                .all(|(row, rhs)| row.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9)
            {
                best = best.max(g.iter().zip(&y).map(|(p, q)| p * q).sum());
            }
        }
    }
    best
}

fn combinations(total: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, total: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for s in start..total {
            cur.push(s);
            rec(s + 1, total, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, total, k, &mut Vec::new(), &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut c: Vec<f64>) -> Option<Vec<f64>> {
    let n = c.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        c.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                c[r] -= f * c[col];
            }
        }
    }
    Some((0..n).map(|i| c[i] / a[i][i]).collect())
}

pub fn association(x: Vec<Vec<f64>>) -> Association {
    Association {
        x,
        mode: AssociationMode::Multi,
    }
}
