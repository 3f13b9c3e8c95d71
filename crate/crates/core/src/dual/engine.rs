//! Synchronous BS/D2D round engine.
//!
//! One round: every pair computes its best response to the current prices
//! (read-only, so the responses are independent), then the BS evaluates the
//! dual function, takes a projected subgradient step and broadcasts the new
//! prices.

use crate::baseline::RateTable;
use crate::error::Result;

use super::feasibility::{channel_interference, d2d_objective, recover_feasible, violation};
use super::assign::{allocate_choice, improve_choice};
use super::polish::polish;
use super::response::{best_response_multi, best_response_single, channel_best_fraction};
use super::step::{step_size, target_of, StepBranch, StepState};
use super::{relative_gap, Association, AssociationMode, Prices, SolveReport, StepRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct DualOptions {
    pub max_iters: usize,
    /// Relative improvement of the best dual value counted as progress.
    pub tol: f64,
    /// Consecutive rounds without progress before stopping.
    pub patience: usize,
    pub initial_price: f64,
    pub step: StepState,
    /// Also stop once the relative duality gap falls to this level.
    pub stop_gap: Option<f64>,
    /// Projected gradient rounds spent re-balancing the recovered allocation
    /// once the prices have settled (0 disables).
    pub polish_iters: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            max_iters: 5000,
            tol: 1e-6,
            patience: 500,
            initial_price: 1.0,
            step: StepState::default(),
            stop_gap: None,
            polish_iters: 300,
        }
    }
}

/// Components of `dD/dp1` and `dD/dp2`: supply minus demand on each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgradient {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl Subgradient {
    pub fn norm_sq(&self) -> f64 {
        self.g1.iter().chain(&self.g2).map(|g| g * g).sum()
    }
}

/// `D(p) = sum_i f_i(p) + sum_j p1_j budget_j + sum_j p2_j`, with `payoffs`
/// holding the optimal subproblem values `f_i(p)`.
pub fn dual_value(prices: &Prices, table: &RateTable, payoffs: &[f64]) -> f64 {
    let supply: f64 = (0..table.n_channels())
        .map(|j| prices.p1[j] * table.supply(j) + prices.p2[j])
        .sum();
    payoffs.iter().sum::<f64>() + supply
}

pub fn dual_subgradient(table: &RateTable, x: &Association) -> Subgradient {
    let m = table.n_channels();
    Subgradient {
        g1: (0..m)
            .map(|j| table.supply(j) - channel_interference(x, table, j))
            .collect(),
        g2: (0..m).map(|j| 1.0 - x.occupancy(j)).collect(),
    }
}

/// Bound on the subgradient norm over all of `[0,1]^{n x m}`.
pub fn subgradient_bound(table: &RateTable) -> f64 {
    let occ = (table.n_d2d() as f64 - 1.0).max(1.0);
    (0..table.n_channels())
        .map(|j| {
            let total: f64 = (0..table.n_d2d()).map(|i| table.coef(i, j)).sum();
            table.supply(j).max(total).powi(2) + occ * occ
        })
        .sum::<f64>()
        .sqrt()
}

/// Prices move against the subgradient and are projected onto `p >= 0`:
/// they rise exactly where demand exceeds supply.
pub fn update_prices(prices: &Prices, sub: &Subgradient, gamma1: f64, gamma2: f64) -> Prices {
    Prices {
        p1: prices
            .p1
            .iter()
            .zip(&sub.g1)
            .map(|(p, g)| (p - gamma1 * g).max(0.0))
            .collect(),
        p2: prices
            .p2
            .iter()
            .zip(&sub.g2)
            .map(|(p, g)| (p - gamma2 * g).max(0.0))
            .collect(),
    }
}

/// Best responses of every pair plus their optimal payoffs.
pub(crate) fn responses(prices: &Prices, table: &RateTable, mode: AssociationMode) -> (Association, Vec<f64>) {
    let mut x = Association::zeros(table.n_d2d(), table.n_channels(), mode);
    let mut payoffs = Vec::with_capacity(table.n_d2d());
    for i in 0..table.n_d2d() {
        match mode {
            AssociationMode::Single => {
                let r = best_response_single(i, prices, table);
                if let Some(j) = r.channel {
                    x.x[i][j] = r.x;
                }
                payoffs.push(r.payoff);
            }
            AssociationMode::Multi => {
                let r = best_response_multi(i, prices, table);
                x.x[i] = r.x;
                payoffs.push(r.payoff);
            }
        }
    }
    (x, payoffs)
}

/// Running average of iterates, restarted at every power of two so that it
/// forgets the transient.
struct TailAverage {
    sum: Vec<Vec<f64>>,
    count: usize,
}

impl TailAverage {
    fn new(n: usize, m: usize) -> Self {
        TailAverage {
            sum: vec![vec![0.0; m]; n],
            count: 0,
        }
    }

    fn push(&mut self, t: usize, x: &Association) -> Association {
        if t.is_power_of_two() {
            self.sum.iter_mut().flatten().for_each(|v| *v = 0.0);
            self.count = 0;
        }
        for (acc, row) in self.sum.iter_mut().zip(&x.x) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        self.count += 1;
        let k = self.count as f64;
        Association {
            x: self
                .sum
                .iter()
                .map(|row| row.iter().map(|v| (v / k).clamp(0.0, 1.0)).collect())
                .collect(),
            mode: x.mode,
        }
    }
}

/// Projected subgradient iteration on the dual with target-level steps.
///
/// Every round's responses are made feasible with [`recover_feasible`] and
/// the best feasible allocation seen is reported. In multi-association mode
/// a tail average of the iterates is also recovered, since averaged dual
/// responses converge to a primal optimum of the relaxation.
pub fn run_dual(table: &RateTable, opts: &DualOptions, mode: AssociationMode) -> Result<SolveReport> {
    table.validate()?;
    let (n, m) = (table.n_d2d(), table.n_channels());
    let mut prices = Prices::uniform(m, opts.initial_price);
    let mut state = opts.step;
    let bound = subgradient_bound(table);

    let mut dual_trace = Vec::new();
    let mut primal_trace = Vec::new();
    let mut step_trace = Vec::new();
    let mut best_dual = f64::INFINITY;
    let mut best_prices = prices.clone();
    let mut best_primal = f64::NEG_INFINITY;
    let mut best_x = Association::zeros(n, m, mode);
    let mut max_norm: f64 = 0.0;
    let mut average = TailAverage::new(n, m);
    let mut stalled = 0;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=opts.max_iters {
        iterations = t;
        let (x, payoffs) = responses(&prices, table, mode);
        let d = dual_value(&prices, table, &payoffs);
        dual_trace.push(d);
        if d < best_dual {
            best_dual = d;
            best_prices = prices.clone();
        }

        let recovered = recover_feasible(&x, table);
        let value = d2d_objective(&recovered, table);
        primal_trace.push(value);
        if value > best_primal {
            best_primal = value;
            best_x = recovered;
        }
        if mode == AssociationMode::Multi {
            let avg = recover_feasible(&average.push(t, &x), table);
            let value = d2d_objective(&avg, table);
            if value > best_primal {
                best_primal = value;
                best_x = avg;
            }
        }

        let sub = dual_subgradient(table, &x);
        let norm_sq = sub.norm_sq();
        max_norm = max_norm.max(norm_sq.sqrt());
        let target = target_of(&state, d);
        let (gamma, next, branch) = step_size(state, d, norm_sq);
        step_trace.push(StepRecord {
            gamma,
            eps: state.eps_t,
            target,
            branch,
        });
        if branch == StepBranch::Optimal {
            converged = true;
            break;
        }
        let improvement = if state.d_best.is_finite() {
            (state.d_best - next.d_best) / next.d_best.abs().max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        stalled = if improvement < opts.tol { stalled + 1 } else { 0 };
        state = next;
        prices = update_prices(&prices, &sub, gamma, gamma);

        if stalled >= opts.patience {
            converged = true;
            break;
        }
        if let Some(g) = opts.stop_gap {
            if relative_gap(best_dual, best_primal) <= g {
                converged = true;
                break;
            }
        }
    }

    if opts.polish_iters > 0 && n > 0 {
        for x in refine(table, &best_x, &best_prices, mode, opts.polish_iters) {
            let value = d2d_objective(&x, table);
            if value > best_primal {
                best_primal = value;
                best_x = x;
            }
        }
    }
    if n == 0 || iterations == 0 {
        best_primal = best_primal.max(0.0);
    }
    let best_dual = if best_dual.is_finite() { best_dual } else { 0.0 };
    Ok(SolveReport {
        method: match mode {
            AssociationMode::Single => "distributed".into(),
            AssociationMode::Multi => "centralized".into(),
        },
        gap: relative_gap(best_dual, best_primal),
        violation: violation(&best_x, table),
        dual_trace,
        primal_trace,
        step_trace,
        final_x: best_x,
        final_prices: best_prices,
        best_dual,
        best_primal,
        iterations,
        converged,
        subgrad_bound: bound,
        max_subgrad_norm: max_norm,
    })
}

/// Channel each pair would pick at `prices`. A pair whose best response is
/// silence is pointed at the channel with the cheapest rate instead: any
/// positive share beats `U(0)` in the primal.
fn channel_choice(table: &RateTable, prices: &Prices) -> Vec<Option<usize>> {
    (0..table.n_d2d())
        .map(|i| {
            best_response_single(i, prices, table).channel.or_else(|| {
                let rates = &table.rate[i];
                (0..rates.len())
                    .filter(|&j| rates[j] > 0.0)
                    .map(|j| {
                        let cost = table.coef(i, j) * prices.p1[j] + prices.p2[j];
                        let (_, payoff) = channel_best_fraction(&table.curve, rates[j], cost);
                        (j, payoff, rates[j] / cost.max(f64::MIN_POSITIVE))
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)))
                    .map(|(j, _, _)| j)
            })
        })
        .collect()
}

/// Final improvement of the recovered allocation. Multi mode polishes the
/// best point by projected gradient. Single mode keeps one channel per pair
/// and runs a local search over channel choices, started from the best
/// allocation seen (silent pairs borrow their choice at the best prices)
/// and from the choices at the best prices.
fn refine(
    table: &RateTable,
    best_x: &Association,
    prices: &Prices,
    mode: AssociationMode,
    polish_iters: usize,
) -> Vec<Association> {
    if mode == AssociationMode::Multi {
        return vec![polish(table, best_x.clone(), None, polish_iters)];
    }
    let at_prices = channel_choice(table, prices);
    let kept: Vec<Option<usize>> = best_x
        .x
        .iter()
        .zip(&at_prices)
        .map(|(row, fallback)| row.iter().position(|&v| v > 0.0).or(*fallback))
        .collect();
    let mut starts = vec![kept];
    if starts[0] != at_prices {
        starts.push(at_prices);
    }
    starts
        .into_iter()
        .map(|c| allocate_choice(table, &improve_choice(table, c)))
        .collect()
}

/// The distributed scheme: single-channel best responses.
pub fn solve_distributed(table: &RateTable, opts: &DualOptions) -> Result<SolveReport> {
    run_dual(table, opts, AssociationMode::Single)
}
