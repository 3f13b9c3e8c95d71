//! Target-level step size for the dual subgradient iteration.

use serde::{Deserialize, Serialize};

/// State of the target-level rule. The step aims at `d_best - eps_t`, an
/// estimate of the optimal dual value below the best value seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepState {
    pub eps_t: f64,
    pub eps_min: f64,
    pub rho_up: f64,
    pub shrink: f64,
    pub alpha_t: f64,
    pub d_best: f64,
}

impl Default for StepState {
    fn default() -> Self {
        StepState {
            eps_t: 1.0,
            eps_min: 1e-4,
            rho_up: 1.5,
            shrink: 0.9,
            alpha_t: 1.0,
            d_best: f64::INFINITY,
        }
    }
}

impl StepState {
    pub fn is_valid(&self) -> bool {
        self.eps_min > 0.0
            && self.eps_t >= self.eps_min
            && self.alpha_t > 0.0
            && self.alpha_t < 2.0
            && self.rho_up > 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
    }
}

/// Which branch of the target update fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepBranch {
    /// First call: the best value is seeded with the current one.
    Seed,
    /// The dual value improved on the best so far: widen the target offset.
    Progress,
    /// No improvement: contract the offset toward its floor.
    Stall,
    /// Zero subgradient: the current prices are optimal.
    Optimal,
}

/// Returns the step `gamma = alpha (d_now - (d_best - eps)) / |g|^2` and the
/// updated state.
pub fn step_size(state: StepState, d_now: f64, subgrad_norm_sq: f64) -> (f64, StepState, StepBranch) {
    let mut next = state;
    if !(subgrad_norm_sq > 0.0) {
        return (0.0, next, StepBranch::Optimal);
    }
    let seeding = !state.d_best.is_finite();
    let d_best = if seeding { d_now } else { state.d_best };
    let target = d_best - state.eps_t;
    let gamma = (state.alpha_t * (d_now - target) / subgrad_norm_sq).max(0.0);

    let branch = if seeding {
        next.d_best = d_now;
        StepBranch::Seed
    } else if d_now < d_best {
        next.d_best = d_now;
        next.eps_t = state.rho_up * state.eps_t;
        StepBranch::Progress
    } else {
        next.eps_t = (state.shrink * state.eps_t).max(state.eps_min);
        StepBranch::Stall
    };
    (gamma, next, branch)
}

/// Target of the most recent call, for the audit trail.
pub(crate) fn target_of(state: &StepState, d_now: f64) -> f64 {
    let best = if state.d_best.is_finite() { state.d_best } else { d_now };
    best - state.eps_t
}
