//! Per-pair best responses to broadcast prices.

use crate::baseline::RateTable;
use crate::model::UtilityCurve;

use super::Prices;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleResponse {
    /// `None` when staying silent beats every channel.
    pub channel: Option<usize>,
    pub x: f64,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiResponse {
    pub x: Vec<f64>,
    pub payoff: f64,
}

/// Best reuse fraction of one channel with rate `rate` (Mbps) at unit cost
/// `cost`: maximizes `U(x rate) - cost x` over `[0, 1]`.
///
/// On the log branch stationarity gives `x = r0/rate + b/cost`; the payoff
/// is concave in `x`, so the clamped stationary point, 0 and 1 cover every
/// possible maximizer.
pub fn channel_best_fraction(curve: &UtilityCurve, rate: f64, cost: f64) -> (f64, f64) {
    let payoff = |x: f64| curve.eval(x * rate) - cost * x;
    let silent = (0.0, payoff(0.0));
    if !(rate > 0.0) {
        return silent;
    }
    let stationary = if cost > 0.0 {
        (curve.r0 / rate + curve.b / cost).clamp(0.0, 1.0)
    } else {
        1.0
    };
    [stationary, 1.0]
        .into_iter()
        .map(|x| (x, payoff(x)))
        .fold(silent, |best, cand| if cand.1 > best.1 { cand } else { best })
}

fn cost(table: &RateTable, i: usize, j: usize, prices: &Prices) -> f64 {
    table.coef(i, j) * prices.p1[j] + prices.p2[j]
}

/// Pair `i` picks one channel and a fraction of it. Ties go to the lowest
/// channel index.
pub fn best_response_single(i: usize, prices: &Prices, table: &RateTable) -> SingleResponse {
    let curve = &table.curve;
    let silent = curve.at_zero();
    let mut best = SingleResponse {
        channel: None,
        x: 0.0,
        payoff: silent,
    };
    for (j, &rate) in table.rate[i].iter().enumerate() {
        let (x, payoff) = channel_best_fraction(curve, rate, cost(table, i, j, prices));
        if payoff > best.payoff && x > 0.0 {
            best = SingleResponse {
                channel: Some(j),
                x,
                payoff,
            };
        }
    }
    best
}

/// Exact maximizer of `U(sum_j x_j R_j) - sum_j c_j x_j` over the unit box.
///
/// For a fixed total rate the cheapest way to buy it is to fill channels in
/// increasing order of cost per Mbps. The greedy keeps filling while the
/// marginal utility of the running total exceeds that unit cost and stops
/// partway through the first channel where they meet.
pub fn best_response_multi(i: usize, prices: &Prices, table: &RateTable) -> MultiResponse {
    let curve = &table.curve;
    let rates = &table.rate[i];
    let costs: Vec<f64> = (0..rates.len()).map(|j| cost(table, i, j, prices)).collect();

    let mut order: Vec<usize> = (0..rates.len()).filter(|&j| rates[j] > 0.0).collect();
    // Stable sort keeps lower indices first among equal unit costs.
    order.sort_by(|&a, &b| (costs[a] / rates[a]).total_cmp(&(costs[b] / rates[b])));

    let mut x = vec![0.0; rates.len()];
    let mut total = 0.0;
    for j in order {
        let unit_cost = costs[j] / rates[j];
        if curve.marginal(total) <= unit_cost {
            break;
        }
        let Some(target) = curve.marginal_inverse(unit_cost) else {
            break;
        };
        if target >= total + rates[j] {
            x[j] = 1.0;
            total += rates[j];
        } else {
            x[j] = ((target - total) / rates[j]).clamp(0.0, 1.0);
            break;
        }
    }
    let spent: f64 = x.iter().zip(&costs).map(|(a, c)| a * c).sum();
    let rate: f64 = x.iter().zip(rates).map(|(a, r)| a * r).sum();
    MultiResponse {
        payoff: curve.eval(rate) - spent,
        x,
    }
}
