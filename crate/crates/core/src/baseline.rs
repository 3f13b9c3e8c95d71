//! Cellular bandwidth split by utility water-filling, and the rate table
//! every solver reads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    interference_budget, rate_cellular_clean, rate_d2d, shannon_mbps, SystemParams, UtilityCurve,
};
use crate::scenario::LinkGains;

/// Bandwidth of each cellular UE's channel (one channel per UE, no spare spectrum).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAlloc {
    pub w_hz: Vec<f64>,
    /// Common marginal utility per Hz at the optimum.
    pub lambda: f64,
}

/// Everything the allocation problem needs about one drop.
///
/// `h` and `budget` are interference power densities in mW/Hz. Solvers
/// measure each channel's interference in units of that channel's own budget
/// (see [`RateTable::interference_scale`]), so every interference price lives
/// on the same footing as the occupancy prices whatever the path losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub w_hz: Vec<f64>,
    pub r_c: Vec<f64>,
    /// D2D rate of pair i on channel j in Mbps, `rate[i][j]`.
    pub rate: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub budget: Vec<f64>,
    #[serde(default = "unit")]
    pub interference_unit: f64,
    #[serde(default)]
    pub curve: UtilityCurve,
}

const ZERO_BUDGET_FLOOR: f64 = 1e-6;

fn unit() -> f64 {
    1.0
}

impl RateTable {
    pub fn n_d2d(&self) -> usize {
        self.rate.len()
    }

    pub fn n_channels(&self) -> usize {
        self.budget.len()
    }

    /// Unit (mW/Hz) of channel `j`'s interference constraint inside the
    /// solvers: its budget, floored at a millionth of `interference_unit` so
    /// that a zero budget still gives finite coefficients.
    pub fn interference_scale(&self, j: usize) -> f64 {
        self.budget[j].max(ZERO_BUDGET_FLOOR * self.interference_unit)
    }

    /// Interference pair `i` causes on channel `j` per unit of reuse, in
    /// solver units.
    pub fn coef(&self, i: usize, j: usize) -> f64 {
        self.h[i] / self.interference_scale(j)
    }

    /// Budget of channel `j` in solver units: 1, or 0 for a closed channel.
    pub fn supply(&self, j: usize) -> f64 {
        self.budget[j] / self.interference_scale(j)
    }

    /// Table built directly from solver-unit values, mostly for tests and
    /// hand-made instances. Cellular rates are left at zero.
    pub fn from_parts(rate: Vec<Vec<f64>>, h: Vec<f64>, budget: Vec<f64>) -> Self {
        let n = budget.len();
        RateTable {
            w_hz: vec![1.0; n],
            r_c: vec![0.0; n],
            rate,
            h,
            budget,
            interference_unit: 1.0,
            curve: UtilityCurve::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_channels();
        if self.w_hz.len() != n || self.r_c.len() != n {
            return Err(Error::Contract("channel vectors disagree in length".into()));
        }
        if self.h.len() != self.rate.len() {
            return Err(Error::Contract("interference coefficients and rate rows disagree".into()));
        }
        if self.rate.iter().any(|row| row.len() != n) {
            return Err(Error::Contract("rate row length differs from channel count".into()));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !self.rate.iter().flatten().all(|&r| finite_nonneg(r))
            || !self.h.iter().all(|&v| finite_nonneg(v))
            || !self.budget.iter().all(|&v| finite_nonneg(v))
        {
            return Err(Error::Contract("rate table entries must be finite and >= 0".into()));
        }
        if !(self.interference_unit > 0.0) {
            return Err(Error::Contract("interference unit must be positive".into()));
        }
        Ok(())
    }
}

/// Clean spectral efficiency of each cellular UE in Mbps per Hz.
pub fn clean_efficiency(gains: &LinkGains, params: &SystemParams) -> Vec<f64> {
    let snr_scale = params.p_cell_density() / params.noise_density();
    gains.g_c.iter().map(|&g| shannon_mbps(1.0, snr_scale * g)).collect()
}

/// Closed form of `max sum_j U(W_j c_j)` subject to `sum_j W_j = W_total`:
/// stationarity gives `W_j = r0/c_j + b/lambda` with
/// `lambda = b N / (W_total - r0 sum_j 1/c_j)`.
pub fn waterfill_closed_form(eff: &[f64], total_hz: f64, curve: &UtilityCurve) -> Result<ChannelAlloc> {
    if eff.is_empty() {
        return Err(Error::Empty("no cellular UEs to allocate".into()));
    }
    if eff.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::InfeasibleBaseline("a cellular UE has zero spectral efficiency".into()));
    }
    let floor_hz: f64 = eff.iter().map(|&c| curve.r0 / c).sum();
    let headroom = total_hz - floor_hz;
    if !(headroom > 0.0) {
        return Err(Error::InfeasibleBaseline(format!(
            "{total_hz} Hz cannot lift every UE above {} Mbps (needs {floor_hz:.1} Hz)",
            curve.r0
        )));
    }
    let lambda = curve.b * eff.len() as f64 / headroom;
    let w_hz = eff.iter().map(|&c| curve.r0 / c + curve.b / lambda).collect();
    Ok(ChannelAlloc { w_hz, lambda })
}

pub fn waterfill_bandwidth(gains: &LinkGains, params: &SystemParams) -> Result<ChannelAlloc> {
    waterfill_closed_form(
        &clean_efficiency(gains, params),
        params.total_bandwidth_hz,
        &params.utility_curve(),
    )
}

pub fn build_rate_table(alloc: &ChannelAlloc, gains: &LinkGains, params: &SystemParams) -> Result<RateTable> {
    let n = gains.n_cellular();
    if alloc.w_hz.len() != n {
        return Err(Error::Contract(format!(
            "allocation covers {} channels, gains {n}",
            alloc.w_hz.len()
        )));
    }
    let curve = params.utility_curve();
    let (pc, pd, pn) = (params.p_cell_density(), params.p_d2d_density(), params.noise_density());
    let r_c: Vec<f64> = alloc
        .w_hz
        .iter()
        .zip(&gains.g_c)
        .map(|(&w, &g)| rate_cellular_clean(w, pc, g, pn))
        .collect();
    let rate = gains
        .g_d2d
        .iter()
        .zip(&gains.g_c2d)
        .map(|(&gd, row)| {
            alloc
                .w_hz
                .iter()
                .zip(row)
                .map(|(&w, &gx)| rate_d2d(w, pd, gd, pc, gx, pn))
                .collect()
        })
        .collect();
    let h = gains.g_d2c.iter().map(|&g| pd * g).collect();
    let budget = (0..n)
        .map(|j| {
            interference_budget(
                &curve,
                alloc.w_hz[j],
                pc,
                gains.g_c[j],
                pn,
                r_c[j],
                params.qos_margin_beta,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable {
        w_hz: alloc.w_hz.clone(),
        r_c,
        rate,
        h,
        budget,
        interference_unit: pn,
        curve,
    })
}
