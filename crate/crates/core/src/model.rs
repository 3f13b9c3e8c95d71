//! Physical layer and utility primitives.
//!
//! Every formula used by the solvers lives here: log-distance pathloss with
//! log-normal shadowing, Shannon rates for the cellular uplink and for D2D
//! pairs reusing it, the best-effort utility curve and the transform of a
//! utility-degradation margin into an interference budget.
//!
//! Rates cross the utility boundary in Mbps. Bandwidths are in Hz and power
//! spectral densities are linear mW/Hz unless a name says `_db`/`_dbm`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bits per second in one Mbps. The only place rates change unit.
pub const BPS_PER_MBPS: f64 = 1e6;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// All physical and algorithmic constants of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    pub cell_radius_m: f64,
    pub cluster_radius_m: f64,
    pub d2d_max_dist_m: f64,
    pub n_cellular: usize,
    pub n_d2d: usize,
    pub total_bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub pathloss_exp: f64,
    /// Attenuation at the 1 m reference distance.
    pub pathloss_const_db: f64,
    pub shadow_sigma_cell_db: f64,
    pub shadow_sigma_d2d_db: f64,
    pub p_cell_density_dbm_hz: f64,
    pub p_d2d_density_dbm_hz: f64,
    /// Largest utility drop a cellular UE may suffer from D2D interference.
    pub qos_margin_beta: f64,
    pub utility_floor_mbps: f64,
    /// Offset of the linear-extension knot above the utility floor.
    pub utility_eps_mbps: f64,
}

impl Default for SystemParams {
    /// Desk-scale defaults: 20 cellular UEs, 10 pairs, 20 m pairs.
    fn default() -> Self {
        SystemParams {
            cell_radius_m: 500.0,
            cluster_radius_m: 100.0,
            d2d_max_dist_m: 20.0,
            n_cellular: 20,
            n_d2d: 10,
            total_bandwidth_hz: 5e6,
            noise_density_dbm_hz: -174.0,
            pathloss_exp: 4.0,
            pathloss_const_db: 24.0,
            shadow_sigma_cell_db: 8.0,
            shadow_sigma_d2d_db: 6.0,
            // Cellular: 23 dBm over one UE's 250 kHz share of the band.
            // D2D: -7 dBm over 5 MHz, about 24 dB median SNR at 20 m.
            p_cell_density_dbm_hz: -31.0,
            p_d2d_density_dbm_hz: -74.0,
            qos_margin_beta: 0.5,
            utility_floor_mbps: 0.3,
            utility_eps_mbps: 0.001,
        }
    }
}

impl SystemParams {
    /// Full-scale cell: 50 cellular UEs and 50 pairs.
    pub fn full_scale() -> Self {
        SystemParams {
            n_cellular: 50,
            n_d2d: 50,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_radius_m", self.cell_radius_m),
            ("cluster_radius_m", self.cluster_radius_m),
            ("d2d_max_dist_m", self.d2d_max_dist_m),
            ("total_bandwidth_hz", self.total_bandwidth_hz),
            ("pathloss_exp", self.pathloss_exp),
            ("utility_eps_mbps", self.utility_eps_mbps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_cellular == 0 {
            return Err(Error::Config("n_cellular must be at least 1".into()));
        }
        if self.n_d2d == 0 {
            return Err(Error::Config("n_d2d must be at least 1".into()));
        }
        if !(self.qos_margin_beta >= 0.0 && self.qos_margin_beta.is_finite()) {
            return Err(Error::Config(format!(
                "qos_margin_beta must be >= 0, got {}",
                self.qos_margin_beta
            )));
        }
        if self.shadow_sigma_cell_db < 0.0 || self.shadow_sigma_d2d_db < 0.0 {
            return Err(Error::Config("shadowing deviations must be >= 0".into()));
        }
        if !(self.utility_floor_mbps >= 0.0) {
            return Err(Error::Config("utility_floor_mbps must be >= 0".into()));
        }
        if self.cluster_radius_m + CLUSTER_MARGIN_M >= self.cell_radius_m {
            return Err(Error::Config(format!(
                "cluster radius {} m does not fit inside cell radius {} m",
                self.cluster_radius_m, self.cell_radius_m
            )));
        }
        Ok(())
    }

    pub fn noise_density(&self) -> f64 {
        db_to_linear(self.noise_density_dbm_hz)
    }

    pub fn p_cell_density(&self) -> f64 {
        db_to_linear(self.p_cell_density_dbm_hz)
    }

    pub fn p_d2d_density(&self) -> f64 {
        db_to_linear(self.p_d2d_density_dbm_hz)
    }

    pub fn utility_curve(&self) -> UtilityCurve {
        UtilityCurve::new(0.16, 0.8, self.utility_floor_mbps, self.utility_eps_mbps)
    }
}

/// Minimum clearance between the cluster disk and the cell edge.
pub const CLUSTER_MARGIN_M: f64 = 1.0;

/// `U(r) = a + b ln(r - r0)` above `knot = r0 + delta`, continued below the
/// knot by its tangent line so it is finite, increasing and concave on all of
/// `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityCurve {
    pub a: f64,
    pub b: f64,
    pub r0: f64,
    pub knot: f64,
}

impl Default for UtilityCurve {
    fn default() -> Self {
        UtilityCurve::new(0.16, 0.8, 0.3, 0.001)
    }
}

impl UtilityCurve {
    pub fn new(a: f64, b: f64, r0: f64, delta: f64) -> Self {
        assert!(b > 0.0 && delta > 0.0, "utility scale and knot offset must be positive");
        UtilityCurve {
            a,
            b,
            r0,
            knot: r0 + delta,
        }
    }

    fn log_branch(&self, r: f64) -> f64 {
        self.a + self.b * (r - self.r0).ln()
    }

    /// Utility at the knot.
    pub fn knot_value(&self) -> f64 {
        self.log_branch(self.knot)
    }

    /// Slope of the linear extension, `b / delta`.
    pub fn knot_slope(&self) -> f64 {
        self.b / (self.knot - self.r0)
    }

    /// Evaluates the extended curve. Also defined (linearly) for `r < 0`,
    /// which only happens through round-off in callers.
    pub fn eval(&self, r: f64) -> f64 {
        if r > self.knot {
            self.log_branch(r)
        } else {
            self.knot_value() + self.knot_slope() * (r - self.knot)
        }
    }

    /// Payoff of a silent user.
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn marginal(&self, r: f64) -> f64 {
        if r > self.knot {
            self.b / (r - self.r0)
        } else {
            self.knot_slope()
        }
    }

    /// Smallest rate at which the marginal utility has dropped to `m`.
    /// `None` when `m >= knot_slope()` (no positive rate is worth it at that price).
    pub fn marginal_inverse(&self, m: f64) -> Option<f64> {
        if m >= self.knot_slope() {
            None
        } else if m <= 0.0 {
            Some(f64::INFINITY)
        } else {
            Some(self.r0 + self.b / m)
        }
    }

    pub fn inverse(&self, u: f64) -> f64 {
        let uk = self.knot_value();
        if u > uk {
            self.r0 + ((u - self.a) / self.b).exp()
        } else {
            self.knot + (u - uk) / self.knot_slope()
        }
    }
}

/// `10^(-k/10) * d^(-alpha) * 10^(shadow/10)`.
pub fn channel_gain(k_db: f64, alpha: f64, dist_m: f64, shadow_db: f64) -> Result<f64> {
    if !(dist_m > 0.0) || !dist_m.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {dist_m}")));
    }
    Ok(db_to_linear(shadow_db - k_db) * dist_m.powf(-alpha))
}

/// Checked utility evaluation on the default curve family.
pub fn utility(curve: &UtilityCurve, r_mbps: f64) -> Result<f64> {
    if !(r_mbps >= 0.0) {
        return Err(Error::Domain(format!("rate must be >= 0, got {r_mbps}")));
    }
    Ok(curve.eval(r_mbps))
}

pub fn utility_inv(curve: &UtilityCurve, u: f64) -> f64 {
    curve.inverse(u)
}

/// Shannon rate in Mbps of `w_hz` of spectrum at the given SINR.
pub fn shannon_mbps(w_hz: f64, sinr: f64) -> f64 {
    w_hz * sinr.ln_1p() / std::f64::consts::LN_2 / BPS_PER_MBPS
}

pub fn rate_cellular_clean(w_hz: f64, p_c_density: f64, g_c: f64, p_n_density: f64) -> f64 {
    shannon_mbps(w_hz, p_c_density * g_c / p_n_density)
}

pub fn rate_cellular_interfered(
    w_hz: f64,
    p_c_density: f64,
    g_c: f64,
    interference_density: f64,
    p_n_density: f64,
) -> f64 {
    debug_assert!(interference_density >= 0.0);
    shannon_mbps(w_hz, p_c_density * g_c / (interference_density + p_n_density))
}

pub fn rate_d2d(
    w_hz: f64,
    p_d2d_density: f64,
    g_d2d: f64,
    p_c_density: f64,
    g_c2d: f64,
    p_n_density: f64,
) -> f64 {
    shannon_mbps(w_hz, p_d2d_density * g_d2d / (p_c_density * g_c2d + p_n_density))
}

/// Largest aggregate D2D interference density (mW/Hz) at the BS on a channel
/// that keeps the cellular utility drop within `qos_margin_beta`.
pub fn interference_budget(
    curve: &UtilityCurve,
    w_hz: f64,
    p_c_density: f64,
    g_c: f64,
    p_n_density: f64,
    r_c_clean_mbps: f64,
    qos_margin_beta: f64,
) -> Result<f64> {
    if !(w_hz > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {w_hz}")));
    }
    if qos_margin_beta == 0.0 {
        return Ok(0.0);
    }
    // The protected rate never drops below the knot: the tangent extension
    // only exists to keep payoffs finite, not to grant extra interference.
    let r_min = curve
        .inverse(curve.eval(r_c_clean_mbps) - qos_margin_beta)
        .max(curve.knot.min(r_c_clean_mbps));
    let sinr_min = (r_min * BPS_PER_MBPS / w_hz * std::f64::consts::LN_2).exp_m1();
    Ok((p_c_density * g_c / sinr_min - p_n_density).max(0.0))
}
