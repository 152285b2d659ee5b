use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TerminalCost;
use crate::error::{Error, Result};

/// Admissible actions of the inventory chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionBounds {
    /// u ≥ lower.
    OneSided { lower: f64 },
    /// lower ≤ u ≤ upper.
    TwoSided { lower: f64, upper: f64 },
}

impl ActionBounds {
    pub fn lower(&self) -> f64 {
        match self {
            ActionBounds::OneSided { lower } | ActionBounds::TwoSided { lower, .. } => *lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            ActionBounds::OneSided { .. } => f64::INFINITY,
            ActionBounds::TwoSided { upper, .. } => *upper,
        }
    }
}

/// Scalar chain x_{t+1} = x_t + u_t with x ∈ [−1, 1], action bounds and cost (x − ξ)² + r·u².
///
/// The parameter ξ_t is the tracking target itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventorySystem {
    pub action_bounds: ActionBounds,
    pub state_bound: f64,
    /// Weight r of the action penalty.
    pub action_weight: f64,
    /// Count (x_T − ξ_T)² in the objective; for indicator windows this adds a constant.
    pub include_terminal_stage: bool,
}

impl InventorySystem {
    pub fn new(action_bounds: ActionBounds, action_weight: f64, include_terminal_stage: bool) -> Result<Self> {
        if action_weight < 0.0 || !action_weight.is_finite() {
            return Err(Error::InvalidConfig("action weight must be nonnegative".into()));
        }
        if action_bounds.lower() > action_bounds.upper() {
            return Err(Error::InvalidConfig("action lower bound exceeds upper bound".into()));
        }
        Ok(Self {
            action_bounds,
            state_bound: 1.0,
            action_weight,
            include_terminal_stage,
        })
    }

    /// Two-sided chain u ∈ [−4/5, 4/5] without action penalty.
    pub fn two_sided() -> Self {
        Self::new(ActionBounds::TwoSided { lower: -0.8, upper: 0.8 }, 0.0, true).expect("valid")
    }

    /// One-sided chain u ≥ −4/5 with action weight `r`.
    pub fn one_sided(r: f64) -> Self {
        Self::new(ActionBounds::OneSided { lower: -0.8 }, r, true).expect("valid")
    }

    pub fn stage_cost(&self, x: f64, u: f64, target: f64) -> f64 {
        (x - target).powi(2) + self.action_weight * u * u
    }

    pub fn terminal_cost(&self, target: f64) -> TerminalCost {
        if self.include_terminal_stage {
            TerminalCost::Quadratic {
                weight: DMatrix::from_element(1, 1, 1.0),
                target: DVector::from_element(1, target),
            }
        } else {
            TerminalCost::Zero
        }
    }

    pub fn clamp_state(&self, v: f64) -> f64 {
        v.clamp(-self.state_bound, self.state_bound)
    }

    /// Alternating targets −4/5 (even t), +4/5 (odd t).
    pub fn alternating_targets(horizon: usize) -> Vec<f64> {
        (0..=horizon).map(|t| if t % 2 == 1 { 0.8 } else { -0.8 }).collect()
    }
}
