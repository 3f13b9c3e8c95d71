use serde::{Deserialize, Serialize};

use crate::baseline::RateTable;
use crate::error::{Error, Result};
use crate::model::{rate_cellular_interfered, SystemParams};
use crate::scenario::LinkGains;

use super::Association;

/// Slack allowed when checking an allocation handed in from outside.
const FEASIBILITY_TOL: f64 = 1e-9;

/// Aggregate D2D interference on channel `j`, in solver units.
pub(crate) fn channel_interference(x: &Association, table: &RateTable, j: usize) -> f64 {
    x.x.iter()
        .enumerate()
        .map(|(i, row)| table.coef(i, j) * row[j])
        .sum()
}

/// Largest residual over both coupling constraint families.
pub fn violation(x: &Association, table: &RateTable) -> f64 {
    (0..table.n_channels())
        .map(|j| {
            let occ = x.occupancy(j) - 1.0;
            let intf = channel_interference(x, table, j) - table.supply(j);
            occ.max(intf).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Scales each channel's column down until occupancy and interference both
/// fit. Entries never grow.
pub fn recover_feasible(x: &Association, table: &RateTable) -> Association {
    let mut out = x.clone();
    for j in 0..table.n_channels() {
        let occ = out.occupancy(j);
        if occ > 1.0 {
            let s = 1.0 / occ;
            out.x.iter_mut().for_each(|row| row[j] *= s);
        }
        let budget = table.supply(j);
        let intf = channel_interference(&out, table, j);
        if intf > budget {
            let s = budget / intf;
            out.x.iter_mut().for_each(|row| row[j] *= s);
        }
        // One ulp of overshoot can survive the division; trim it.
        for _ in 0..4 {
            let occ = out.occupancy(j);
            let intf = channel_interference(&out, table, j);
            if occ <= 1.0 && intf <= budget {
                break;
            }
            let s = (1.0 - 4.0 * f64::EPSILON).min(if intf > budget { budget / intf } else { 1.0 });
            out.x.iter_mut().for_each(|row| row[j] *= s);
        }
    }
    out
}

/// Sum of D2D utilities; a pair reusing nothing scores `U(0)`.
pub fn d2d_objective(x: &Association, table: &RateTable) -> f64 {
    x.x.iter()
        .zip(&table.rate)
        .map(|(row, rates)| {
            let r: f64 = row.iter().zip(rates).map(|(a, r)| a * r).sum();
            table.curve.eval(r)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub d2d_utility: Vec<f64>,
    pub cellular_utility: Vec<f64>,
    pub cellular_clean_utility: Vec<f64>,
    pub degradation: Vec<f64>,
    pub d2d_sum: f64,
    pub cellular_sum: f64,
    pub max_occupancy: f64,
}

pub fn evaluate_allocation(
    x: &Association,
    table: &RateTable,
    gains: &LinkGains,
    params: &SystemParams,
) -> Result<Evaluation> {
    let v = violation(x, table);
    if v > FEASIBILITY_TOL {
        return Err(Error::Contract(format!("allocation violates constraints by {v:e}")));
    }
    let curve = &table.curve;
    let d2d_utility: Vec<f64> = x
        .x
        .iter()
        .zip(&table.rate)
        .map(|(row, rates)| curve.eval(row.iter().zip(rates).map(|(a, r)| a * r).sum()))
        .collect();
    let (pc, pn) = (params.p_cell_density(), params.noise_density());
    let mut cellular_utility = Vec::with_capacity(table.n_channels());
    let mut cellular_clean_utility = Vec::with_capacity(table.n_channels());
    let mut degradation = Vec::with_capacity(table.n_channels());
    for j in 0..table.n_channels() {
        let intf: f64 = x.x.iter().zip(&table.h).map(|(row, h)| h * row[j]).sum();
        let clean = curve.eval(table.r_c[j]);
        let with = curve.eval(rate_cellular_interfered(table.w_hz[j], pc, gains.g_c[j], intf, pn));
        cellular_clean_utility.push(clean);
        cellular_utility.push(with);
        degradation.push(clean - with);
    }
    Ok(Evaluation {
        d2d_sum: d2d_utility.iter().sum(),
        cellular_sum: cellular_utility.iter().sum(),
        max_occupancy: (0..table.n_channels()).map(|j| x.occupancy(j)).fold(0.0, f64::max),
        d2d_utility,
        cellular_utility,
        cellular_clean_utility,
        degradation,
    })
}
