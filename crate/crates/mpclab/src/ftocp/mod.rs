//! Exact finite-horizon optimal control solves.

mod clairvoyant;
mod inventory;
mod quadratic;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use clairvoyant::{clairvoyant_action, ClairvoyantSolver};
pub use inventory::solve_inventory;
pub use quadratic::{solve_quadratic, KktVariant, QuadraticKkt};

use crate::error::{Error, Result};
use crate::system::TerminalCost;

/// One finite-horizon problem on the window [start, end].
#[derive(Debug, Clone, PartialEq)]
pub struct FtocpSpec {
    pub start: usize,
    pub end: usize,
    pub initial_state: DVector<f64>,
    /// ξ_start, ..., ξ_end; the last entry only matters through `terminal`.
    pub params: Vec<DVector<f64>>,
    pub terminal: TerminalCost,
}

impl FtocpSpec {
    pub fn new(
        start: usize,
        end: usize,
        initial_state: DVector<f64>,
        params: Vec<DVector<f64>>,
        terminal: TerminalCost,
    ) -> Result<Self> {
        if end < start {
            return Err(Error::WindowOutOfRange {
                start,
                end,
                horizon: end,
            });
        }
        if params.len() != end - start + 1 {
            return Err(Error::dim("window parameters", end - start + 1, params.len()));
        }
        if initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("initial state must be finite".into()));
        }
        Ok(Self {
            start,
            end,
            initial_state,
            params,
            terminal,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Inequality constraints of the inventory chain, labelled by absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActiveConstraint {
    StateLower(usize),
    StateUpper(usize),
    ActionLower(usize),
    ActionUpper(usize),
}

/// Optimal primal-dual solution of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FtocpSolution {
    pub start: usize,
    /// y_start, ..., y_end.
    pub states: Vec<DVector<f64>>,
    /// v_start, ..., v_{end-1}.
    pub actions: Vec<DVector<f64>>,
    /// η_start, ..., η_end.
    pub duals: Vec<DVector<f64>>,
    pub value: f64,
    pub active_set: Vec<ActiveConstraint>,
    pub kkt_residual: f64,
}

impl FtocpSolution {
    pub fn end(&self) -> usize {
        self.start + self.states.len() - 1
    }

    pub fn first_action(&self) -> Option<&DVector<f64>> {
        self.actions.first()
    }

    /// State at absolute time t.
    pub fn state_at(&self, t: usize) -> &DVector<f64> {
        &self.states[t - self.start]
    }

    pub fn action_at(&self, t: usize) -> &DVector<f64> {
        &self.actions[t - self.start]
    }
}

/// Empty window: the value is F(z).
pub(crate) fn degenerate_solution(spec: &FtocpSpec) -> Result<FtocpSolution> {
    let z = &spec.initial_state;
    let (value, dual) = match &spec.terminal {
        TerminalCost::Quadratic { weight, target } => {
            let d = z - target;
            (d.dot(&(weight * &d)), weight * (target - z))
        }
        TerminalCost::Indicator { target } => {
            if (z - target).norm() > 1e-9 {
                return Err(Error::Infeasible(format!(
                    "empty window at t = {} cannot reach the terminal target",
                    spec.start
                )));
            }
            (0.0, DVector::zeros(z.len()))
        }
        TerminalCost::Zero => (0.0, DVector::zeros(z.len())),
    };
    Ok(FtocpSolution {
        start: spec.start,
        states: vec![z.clone()],
        actions: Vec::new(),
        duals: vec![dual],
        value,
        active_set: Vec::new(),
        kkt_residual: 0.0,
    })
}
