//! Reference solutions used to judge the distributed scheme.
//!
//! * [`solve_centralized_relaxed`]: optimum of the relaxed problem where a pair
//!   may reuse any number of channels fractionally. A dual run with full
//!   best responses gives the upper bound; the recovered primal is then
//!   polished by projected gradient ascent over the feasible polytope.
//! * [`solve_binary_oracle`]: exhaustive search over 0/1 reuse, each channel
//!   given to at most one pair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::RateTable;
use crate::dual::{
    d2d_objective, polish, relative_gap, run_dual, violation, Association, AssociationMode,
    DualOptions, SolveReport,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    CentralizedRelaxed,
    BinaryEnum,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub method: OracleMethod,
    pub objective: f64,
    pub final_x: Association,
    /// Relative duality gap of the returned point (centralized only).
    pub gap: Option<f64>,
    /// Number of assignments or grid points examined.
    pub enumerated: Option<u64>,
    pub certified: bool,
    pub violation: f64,
    /// The dual run behind a centralized result.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual: Option<SolveReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedOptions {
    pub dual: DualOptions,
    /// Relative gap below which the result counts as certified.
    pub gap_tol: f64,
    pub polish_iters: usize,
}

impl Default for CentralizedOptions {
    fn default() -> Self {
        CentralizedOptions {
            dual: DualOptions {
                stop_gap: Some(1e-4),
                polish_iters: 0,
                ..DualOptions::default()
            },
            gap_tol: 1e-4,
            polish_iters: 3000,
        }
    }
}

pub fn solve_centralized_relaxed(table: &RateTable, opts: &CentralizedOptions) -> Result<OracleResult> {
    let report = run_dual(table, &opts.dual, AssociationMode::Multi)?;
    let mut x = report.final_x.clone();
    x.mode = AssociationMode::Multi;
    let x = polish(table, x, None, opts.polish_iters);
    let objective = d2d_objective(&x, table);
    let (objective, x) = if objective >= report.best_primal {
        (objective, x)
    } else {
        (report.best_primal, report.final_x.clone())
    };
    let gap = relative_gap(report.best_dual, objective);
    Ok(OracleResult {
        method: OracleMethod::CentralizedRelaxed,
        objective,
        violation: violation(&x, table),
        final_x: x,
        gap: Some(gap),
        enumerated: None,
        certified: gap <= opts.gap_tol,
        dual: Some(report),
    })
}


/// Default cap on the number of 0/1 assignments the oracle will visit.
pub const ENUMERATION_CAP: u64 = 10_000_000;

pub fn solve_binary_oracle(table: &RateTable) -> Result<OracleResult> {
    solve_binary_oracle_capped(table, ENUMERATION_CAP)
}

pub fn solve_binary_oracle_capped(table: &RateTable, cap: u64) -> Result<OracleResult> {
    table.validate()?;
    let (n, m) = (table.n_d2d(), table.n_channels());
    let size = (n as u64 + 1).checked_pow(m as u32).filter(|&s| s <= cap);
    let Some(size) = size else {
        return Err(Error::TooLarge(format!(
            "{} pairs on {m} channels exceeds the enumeration cap of {cap}",
            n
        )));
    };
    // Options per channel: stay empty, or one pair whose full-power
    // interference fits the budget.
    let options: Vec<Vec<Option<usize>>> = (0..m)
        .map(|j| {
            std::iter::once(None)
                .chain((0..n).filter(|&i| table.h[i] <= table.budget[j]).map(Some))
                .collect()
        })
        .collect();

    let search = |first: Option<usize>| -> (f64, Vec<Option<usize>>) {
        let mut assign = vec![None; m];
        let mut rates = vec![0.0; n];
        let mut best = (f64::NEG_INFINITY, vec![None; m]);
        if m == 0 {
            return (n as f64 * table.curve.at_zero(), assign);
        }
        assign[0] = first;
        if let Some(i) = first {
            rates[i] += table.rate[i][0];
        }
        enumerate(table, &options, 1, &mut assign, &mut rates, &mut best);
        best
    };
    let firsts: Vec<Option<usize>> = if m == 0 { vec![None] } else { options[0].clone() };
    let best = firsts
        .into_par_iter()
        .map(search)
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::NEG_INFINITY, vec![None; m]), |acc, cand| if cand.0 > acc.0 { cand } else { acc });

    let mut x = Association::zeros(n, m, AssociationMode::Multi);
    for (j, a) in best.1.iter().enumerate() {
        if let Some(i) = a {
            x.x[*i][j] = 1.0;
        }
    }
    Ok(OracleResult {
        method: OracleMethod::BinaryEnum,
        objective: best.0,
        violation: violation(&x, table),
        final_x: x,
        gap: None,
        enumerated: Some(size),
        certified: true,
        dual: None,
    })
}

fn enumerate(
    table: &RateTable,
    options: &[Vec<Option<usize>>],
    j: usize,
    assign: &mut Vec<Option<usize>>,
    rates: &mut Vec<f64>,
    best: &mut (f64, Vec<Option<usize>>),
) {
    if j == options.len() {
        let value: f64 = rates.iter().map(|&r| table.curve.eval(r)).sum();
        if value > best.0 {
            *best = (value, assign.clone());
        }
        return;
    }
    for &opt in &options[j] {
        assign[j] = opt;
        if let Some(i) = opt {
            rates[i] += table.rate[i][j];
        }
        enumerate(table, options, j + 1, assign, rates, best);
        if let Some(i) = opt {
            rates[i] -= table.rate[i][j];
        }
    }
    assign[j] = None;
}
