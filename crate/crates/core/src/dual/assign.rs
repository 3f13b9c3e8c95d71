//! Primal recovery for single association: with each pair's channel fixed,
//! the best fractions separate by channel, and a local search moves pairs
//! between channels while that raises the sum utility.

use crate::baseline::RateTable;

use super::response::channel_best_fraction;
use super::{Association, AssociationMode};

const BISECTION_STEPS: usize = 100;
const MAX_PASSES: usize = 50;

/// Best fractions for the pairs sharing channel `j`:
/// `max sum U(x_i R_ij)` subject to `sum x_i <= 1` and `sum coef_ij x_i <= supply_j`.
///
/// Returns the fractions (aligned with `members`) and their utility sum.
pub fn channel_fractions(table: &RateTable, j: usize, members: &[usize]) -> (Vec<f64>, f64) {
    let curve = &table.curve;
    let rate: Vec<f64> = members.iter().map(|&i| table.rate[i][j]).collect();
    let coef: Vec<f64> = members.iter().map(|&i| table.coef(i, j)).collect();
    let supply = table.supply(j);
    let respond = |mu: f64, nu: f64| -> Vec<f64> {
        rate.iter()
            .zip(&coef)
            .map(|(&r, &a)| channel_best_fraction(curve, r, mu + nu * a).0)
            .collect()
    };
    let occupancy = |x: &[f64]| x.iter().sum::<f64>();
    let interference = |x: &[f64]| x.iter().zip(&coef).map(|(v, a)| v * a).sum::<f64>();

    // Occupancy price for a given interference price, as a bracket whose
    // upper end is feasible for occupancy.
    let mu_bracket = |nu: f64| -> (f64, f64) {
        if occupancy(&respond(0.0, nu)) <= 1.0 {
            return (0.0, 0.0);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while occupancy(&respond(hi, nu)) > 1.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if occupancy(&respond(mid, nu)) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi)
    };
    let fits = |nu: f64| interference(&respond(mu_bracket(nu).1, nu)) <= supply;

    let (nu_lo, nu_hi) = if fits(0.0) {
        (0.0, 0.0)
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while !fits(hi) {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if fits(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi)
    };
    let (mu_lo, mu_hi) = mu_bracket(nu_hi);
    let mut x = respond(mu_hi, nu_hi);

    // Responses jump where a pair's cost crosses the slope of the linear
    // tail; hand out the slack left at the feasible end of the bracket to
    // pairs that would take more at the other end.
    let wants = respond(mu_lo, nu_lo);
    for k in 0..x.len() {
        if wants[k] <= x[k] {
            continue;
        }
        let occ_room = 1.0 - occupancy(&x);
        let intf_room = supply - interference(&x);
        let mut grow = (wants[k] - x[k]).min(occ_room.max(0.0));
        if coef[k] > 0.0 {
            grow = grow.min(intf_room.max(0.0) / coef[k]);
        }
        x[k] += grow.max(0.0);
    }
    // Guard against rounding in the last step.
    let occ = occupancy(&x);
    if occ > 1.0 {
        x.iter_mut().for_each(|v| *v /= occ);
    }
    let intf = interference(&x);
    if intf > supply {
        let s = if intf > 0.0 { supply / intf } else { 0.0 };
        x.iter_mut().for_each(|v| *v *= s * (1.0 - 4.0 * f64::EPSILON));
    }
    let value = x.iter().zip(&rate).map(|(v, r)| curve.eval(v * r)).sum();
    (x, value)
}

/// Allocation with the given channel per pair and the best fractions on
/// each channel. `None` leaves a pair silent.
pub fn allocate_choice(table: &RateTable, choice: &[Option<usize>]) -> Association {
    let (n, m) = (table.n_d2d(), table.n_channels());
    let mut x = Association::zeros(n, m, AssociationMode::Single);
    for j in 0..m {
        let members: Vec<usize> = (0..n).filter(|&i| choice[i] == Some(j)).collect();
        if members.is_empty() {
            continue;
        }
        let (frac, _) = channel_fractions(table, j, &members);
        for (&i, v) in members.iter().zip(frac) {
            x.x[i][j] = v;
        }
    }
    x
}

/// First-improvement local search over single-channel choices, starting
/// from `choice`. A move takes one pair to another channel; fractions on the
/// two channels involved are re-optimized exactly.
pub fn improve_choice(table: &RateTable, mut choice: Vec<Option<usize>>) -> Vec<Option<usize>> {
    let (n, m) = (table.n_d2d(), table.n_channels());
    let silent = table.curve.at_zero();
    let members_of = |choice: &[Option<usize>], j: usize| -> Vec<usize> {
        (0..n).filter(|&i| choice[i] == Some(j)).collect()
    };
    let mut value: Vec<f64> = (0..m)
        .map(|j| channel_fractions(table, j, &members_of(&choice, j)).1)
        .collect();

    for _ in 0..MAX_PASSES {
        let mut moved = false;
        for i in 0..n {
            let from = choice[i];
            let (base_from, value_without) = match from {
                Some(a) => {
                    let rest: Vec<usize> = members_of(&choice, a).into_iter().filter(|&k| k != i).collect();
                    (value[a], channel_fractions(table, a, &rest).1)
                }
                None => (silent, 0.0),
            };
            let mut best: Option<(usize, f64, f64)> = None;
            for b in 0..m {
                if Some(b) == from || !(table.rate[i][b] > 0.0) {
                    continue;
                }
                let mut with = members_of(&choice, b);
                with.push(i);
                with.sort_unstable();
                let value_with = channel_fractions(table, b, &with).1;
                let gain = value_without + value_with - base_from - value[b];
                let threshold = 1e-9 * (base_from.abs() + value[b].abs()).max(1.0);
                if gain > threshold && best.is_none_or(|(_, g, _)| gain > g) {
                    best = Some((b, gain, value_with));
                }
            }
            if let Some((b, _, value_with)) = best {
                if let Some(a) = from {
                    value[a] = value_without;
                }
                value[b] = value_with;
                choice[i] = Some(b);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    choice
}
