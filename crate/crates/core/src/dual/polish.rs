//! Projection onto the per-channel feasible sets and a projected gradient
//! polish of recovered allocations.

use crate::baseline::RateTable;

use super::feasibility::{d2d_objective, recover_feasible};
use super::Association;

/// Euclidean projection onto one channel's feasible set
/// `{0 <= x <= 1, sum x <= 1, sum h x <= budget}`.
///
/// The minimizer is `clamp(y - mu - nu h, 0, 1)` for multipliers
/// `mu, nu >= 0`. For fixed `nu`, `mu` is found exactly from the
/// piecewise-linear occupancy; `nu` is found by bisection on the
/// (monotone) interference of the resulting point.
pub fn project_channel(y: &[f64], h: &[f64], budget: f64) -> Vec<f64> {
    let point = |mu: f64, nu: f64| -> Vec<f64> {
        y.iter()
            .zip(h)
            .map(|(yi, hi)| (yi - mu - nu * hi).clamp(0.0, 1.0))
            .collect()
    };
    let interference = |x: &[f64]| x.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
    let at = |nu: f64| point(occupancy_multiplier(y, h, nu), nu);

    let x0 = at(0.0);
    if interference(&x0) <= budget {
        return x0;
    }
    let mut lo = 0.0;
    let mut hi = y
        .iter()
        .zip(h)
        .filter(|(_, &hi)| hi > 0.0)
        .map(|(yi, hi)| yi.max(0.0) / hi)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if interference(&at(mid)) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Smallest `mu >= 0` with `sum clamp(y - nu h - mu, 0, 1) <= 1`.
fn occupancy_multiplier(y: &[f64], h: &[f64], nu: f64) -> f64 {
    let z: Vec<f64> = y.iter().zip(h).map(|(yi, hi)| yi - nu * hi).collect();
    let occ = |mu: f64| z.iter().map(|zi| (zi - mu).clamp(0.0, 1.0)).sum::<f64>();
    if occ(0.0) <= 1.0 {
        return 0.0;
    }
    // occ is piecewise linear and non-increasing with kinks at z_i - 1, z_i.
    let mut kinks: Vec<f64> = z
        .iter()
        .flat_map(|&zi| [zi - 1.0, zi])
        .filter(|&k| k > 0.0)
        .collect();
    kinks.push(0.0);
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    let mut prev = 0.0;
    for &k in &kinks {
        let o = occ(k);
        if o <= 1.0 {
            let o_prev = occ(prev);
            if o_prev == o {
                return k;
            }
            return prev + (o_prev - 1.0) / (o_prev - o) * (k - prev);
        }
        prev = k;
    }
    prev
}

fn project(table: &RateTable, x: &mut Association) {
    for j in 0..table.n_channels() {
        let col: Vec<f64> = x.x.iter().map(|row| row[j]).collect();
        let h: Vec<f64> = (0..table.n_d2d()).map(|i| table.coef(i, j)).collect();
        let p = project_channel(&col, &h, table.supply(j));
        for (row, v) in x.x.iter_mut().zip(p) {
            row[j] = v;
        }
    }
}

fn gradient(table: &RateTable, x: &Association) -> Vec<Vec<f64>> {
    x.x.iter()
        .zip(&table.rate)
        .map(|(row, rates)| {
            let r: f64 = row.iter().zip(rates).map(|(a, b)| a * b).sum();
            let m = table.curve.marginal(r);
            rates.iter().map(|rr| m * rr).collect()
        })
        .collect()
}

/// Projected gradient ascent with backtracking on the relaxed objective,
/// starting from `start` made feasible.
///
/// With a `support` mask only the marked entries move; the rest stay at
/// zero, so a fixed channel choice per pair is kept.
pub fn polish(
    table: &RateTable,
    start: Association,
    support: Option<&[Vec<bool>]>,
    iters: usize,
) -> Association {
    let mut x = recover_feasible(&start, table);
    if let Some(mask) = support {
        for (row, mrow) in x.x.iter_mut().zip(mask) {
            for (v, &keep) in row.iter_mut().zip(mrow) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
    }
    if table.n_d2d() == 0 {
        return x;
    }
    let mut f = d2d_objective(&x, table);
    let mut step = 1e-3;
    for _ in 0..iters {
        let mut g = gradient(table, &x);
        if let Some(mask) = support {
            for (grow, mrow) in g.iter_mut().zip(mask) {
                for (gv, &keep) in grow.iter_mut().zip(mrow) {
                    if !keep {
                        *gv = 0.0;
                    }
                }
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = x.clone();
            for (row, grow) in cand.x.iter_mut().zip(&g) {
                for (v, gv) in row.iter_mut().zip(grow) {
                    *v += step * gv;
                }
            }
            project(table, &mut cand);
            let cand = recover_feasible(&cand, table);
            let fc = d2d_objective(&cand, table);
            let mut lin = 0.0;
            let mut dist_sq = 0.0;
            for ((crow, xrow), grow) in cand.x.iter().zip(&x.x).zip(&g) {
                for ((c, v), gv) in crow.iter().zip(xrow).zip(grow) {
                    lin += gv * (c - v);
                    dist_sq += (c - v) * (c - v);
                }
            }
            if dist_sq == 0.0 {
                return x;
            }
            if fc >= f + lin - dist_sq / (2.0 * step) && fc >= f {
                let moved = fc - f;
                x = cand;
                f = fc;
                accepted = true;
                step *= 2.0;
                if moved <= 1e-15 * f.abs().max(1.0) && dist_sq < 1e-24 {
                    return x;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_of_feasible_point_is_identity() {
        let y = [0.2, 0.3, 0.1];
        let p = project_channel(&y, &[1.0, 1.0, 1.0], 5.0);
        assert_eq!(p, y.to_vec());
    }

    #[test]
    fn projection_onto_simplex_face() {
        let p = project_channel(&[1.0, 1.0], &[0.0, 0.0], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_budget_face() {
        // Only the interference constraint binds: x = y - nu h with h.x = b.
        let p = project_channel(&[0.4, 0.4], &[1.0, 3.0], 0.5);
        let nu = (0.4 + 1.2 - 0.5) / 10.0;
        assert!((p[0] - (0.4 - nu)).abs() < 1e-9);
        assert!((p[1] - (0.4 - 3.0 * nu)).abs() < 1e-9);
    }
}
