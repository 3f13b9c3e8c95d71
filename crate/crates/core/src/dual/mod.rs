//! Price-based distributed allocation.
//!
//! The BS owns two prices per channel: `p1` on aggregate interference and
//! `p2` on occupancy. Each D2D pair answers the broadcast prices with its
//! best response; the BS then moves the prices along the dual subgradient
//! with a target-level step and broadcasts again.

mod assign;
mod engine;
mod feasibility;
mod polish;
mod response;
mod step;

use serde::{Deserialize, Serialize};

pub use assign::{allocate_choice, channel_fractions, improve_choice};
pub use engine::{
    dual_subgradient, dual_value, run_dual, solve_distributed, subgradient_bound, update_prices,
    DualOptions, Subgradient,
};
pub use feasibility::{
    d2d_objective, evaluate_allocation, recover_feasible, violation, Evaluation,
};
pub use polish::{polish, project_channel};
pub use response::{
    best_response_multi, best_response_single, channel_best_fraction, MultiResponse,
    SingleResponse,
};
pub use step::{step_size, StepBranch, StepState};

/// Dual variables, one pair per channel. Both are kept non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    /// Interference price, in utility per unit of the channel's budget.
    /// Divide by [`RateTable::interference_scale`] for utility per mW/Hz.
    ///
    /// [`RateTable::interference_scale`]: crate::baseline::RateTable::interference_scale
    pub p1: Vec<f64>,
    /// Occupancy price, in utility per unit of channel time.
    pub p2: Vec<f64>,
}

impl Prices {
    pub fn uniform(n_channels: usize, value: f64) -> Self {
        Prices {
            p1: vec![value; n_channels],
            p2: vec![value; n_channels],
        }
    }

    pub fn zeros(n_channels: usize) -> Self {
        Self::uniform(n_channels, 0.0)
    }

    pub fn len(&self) -> usize {
        self.p1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p1.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    /// At most one channel per pair.
    Single,
    Multi,
}

/// Reuse fractions `x[i][j]` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SparseAssociation", try_from = "SparseAssociation")]
pub struct Association {
    pub x: Vec<Vec<f64>>,
    pub mode: AssociationMode,
}

impl Association {
    pub fn zeros(n_d2d: usize, n_channels: usize, mode: AssociationMode) -> Self {
        Association {
            x: vec![vec![0.0; n_channels]; n_d2d],
            mode,
        }
    }

    pub fn n_d2d(&self) -> usize {
        self.x.len()
    }

    pub fn n_channels(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn occupancy(&self, j: usize) -> f64 {
        self.x.iter().map(|row| row[j]).sum()
    }

    pub fn is_single(&self) -> bool {
        self.x
            .iter()
            .all(|row| row.iter().filter(|&&v| v != 0.0).count() <= 1)
    }

    /// Non-zero entries as `(i, j, x)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.x
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(move |(j, &v)| (i, j, v))
            })
            .collect()
    }
}

/// Wire form of [`Association`]: dimensions plus a sparse triplet list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseAssociation {
    pub n_d2d: usize,
    pub n_channels: usize,
    pub mode: AssociationMode,
    pub entries: Vec<(usize, usize, f64)>,
}

impl From<Association> for SparseAssociation {
    fn from(a: Association) -> Self {
        SparseAssociation {
            n_d2d: a.n_d2d(),
            n_channels: a.n_channels(),
            mode: a.mode,
            entries: a.triplets(),
        }
    }
}

impl TryFrom<SparseAssociation> for Association {
    type Error = String;

    fn try_from(s: SparseAssociation) -> Result<Self, Self::Error> {
        let mut a = Association::zeros(s.n_d2d, s.n_channels, s.mode);
        for (i, j, v) in s.entries {
            if i >= s.n_d2d || j >= s.n_channels {
                return Err(format!("entry ({i}, {j}) outside {}x{}", s.n_d2d, s.n_channels));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("fraction {v} at ({i}, {j}) outside [0, 1]"));
            }
            a.x[i][j] = v;
        }
        Ok(a)
    }
}

/// One entry of the step-size audit trail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub gamma: f64,
    pub eps: f64,
    pub target: f64,
    pub branch: StepBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    /// `D(p(t))` for every round.
    pub dual_trace: Vec<f64>,
    /// Objective of the recovered feasible allocation of every round.
    pub primal_trace: Vec<f64>,
    pub step_trace: Vec<StepRecord>,
    pub final_x: Association,
    pub final_prices: Prices,
    pub best_dual: f64,
    pub best_primal: f64,
    /// `(best_dual - best_primal) / |best_dual|`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest constraint residual of `final_x`, in solver units.
    pub violation: f64,
    pub subgrad_bound: f64,
    pub max_subgrad_norm: f64,
}

pub fn relative_gap(best_dual: f64, best_primal: f64) -> f64 {
    let diff = best_dual - best_primal;
    if diff == 0.0 {
        0.0
    } else {
        diff / best_dual.abs()
    }
}
