//! Parameterized control problem families and concrete problem instances.

mod disturbance;
mod inventory;
mod tracking;

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use disturbance::DisturbanceSystem;
pub use inventory::{ActionBounds, InventorySystem};
pub use tracking::{AffineMatrixMap, SpectrumMap, TrackingSystem};

use crate::error::{Error, Result};
use crate::ftocp::{self, FtocpSolution, FtocpSpec};
use crate::param::{ParamBox, ParamSeq};

/// Lipschitz constants of the parameter maps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lipschitz {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub p: f64,
    pub w: f64,
    pub x_ref: f64,
}

/// Bounds a family declares to hold over its whole parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    /// Lower spectral bound of Q, R, P.
    pub mu: f64,
    /// Upper spectral bound of Q, R, P.
    pub ell: f64,
    /// Bound on ‖A_t(ξ)‖.
    pub a: f64,
    /// Bound on ‖B_t(ξ)‖.
    pub b: f64,
    pub d_w: f64,
    pub d_xref: f64,
    pub lipschitz: Lipschitz,
}

/// Stage data (A_t, B_t, w_t, Q_t, R_t, x̄_t) at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x_ref: DVector<f64>,
}

/// Terminal weight and reference at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalData {
    pub p: DMatrix<f64>,
    pub x_ref: DVector<f64>,
}

/// Quadratic tracking family with affine dynamics, parameterized by ξ.
pub trait LqFamily: Send + Sync + Debug {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn stage(&self, t: usize, xi: &DVector<f64>) -> StageData;
    fn terminal(&self, xi: &DVector<f64>) -> TerminalData;
    fn constants(&self) -> &DeclaredConstants;
    fn param_box(&self) -> &ParamBox;
    /// False when only w_t and x̄_t depend on ξ.
    fn matrices_depend_on_params(&self) -> bool {
        true
    }
}

/// Terminal cost F of a finite-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCost {
    /// (x − target)ᵀ weight (x − target).
    Quadratic {
        weight: DMatrix<f64>,
        target: DVector<f64>,
    },
    /// Zero at `target`, +∞ elsewhere; enforced as an equality.
    Indicator { target: DVector<f64> },
    Zero,
}

impl TerminalCost {
    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        match self {
            TerminalCost::Quadratic { weight, target } => {
                let d = x - target;
                d.dot(&(weight * &d))
            }
            TerminalCost::Indicator { target } => {
                if (x - target).norm() <= 1e-9 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            TerminalCost::Zero => 0.0,
        }
    }
}

/// Any system the solvers understand.
#[derive(Debug, Clone)]
pub enum System {
    Quadratic(Arc<dyn LqFamily>),
    Inventory(InventorySystem),
}

impl System {
    pub fn quadratic<F: LqFamily + 'static>(family: F) -> Self {
        System::Quadratic(Arc::new(family))
    }

    pub fn state_dim(&self) -> usize {
        match self {
            System::Quadratic(f) => f.state_dim(),
            System::Inventory(_) => 1,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            System::Quadratic(f) => f.action_dim(),
            System::Inventory(_) => 1,
        }
    }

    pub fn param_dim(&self) -> usize {
        match self {
            System::Quadratic(f) => f.param_dim(),
            System::Inventory(_) => 1,
        }
    }

    pub fn family(&self) -> Option<&Arc<dyn LqFamily>> {
        match self {
            System::Quadratic(f) => Some(f),
            System::Inventory(_) => None,
        }
    }

    /// x_{t+1} = g_t(x_t, u_t; ξ_t).
    pub fn step(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        match self {
            System::Quadratic(f) => {
                let s = f.stage(t, xi);
                &s.a * x + &s.b * u + &s.w
            }
            System::Inventory(_) => x + u,
        }
    }

    pub fn stage_cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        match self {
            System::Quadratic(f) => {
                let s = f.stage(t, xi);
                let d = x - &s.x_ref;
                d.dot(&(&s.q * &d)) + u.dot(&(&s.r * u))
            }
            System::Inventory(inv) => inv.stage_cost(x[0], u[0], xi[0]),
        }
    }

    /// F_T(·; ξ_T).
    pub fn terminal_cost(&self, xi: &DVector<f64>) -> TerminalCost {
        match self {
            System::Quadratic(f) => {
                let term = f.terminal(xi);
                TerminalCost::Quadratic {
                    weight: term.p,
                    target: term.x_ref,
                }
            }
            System::Inventory(inv) => inv.terminal_cost(xi[0]),
        }
    }

    /// Tracking reference x̄_t(ξ); the target itself for inventory.
    pub fn reference_state(&self, t: usize, xi: &DVector<f64>, horizon: usize) -> DVector<f64> {
        match self {
            System::Quadratic(f) => {
                if t >= horizon {
                    f.terminal(xi).x_ref
                } else {
                    f.stage(t, xi).x_ref
                }
            }
            System::Inventory(inv) => DVector::from_element(1, inv.clamp_state(xi[0])),
        }
    }

    /// Lipschitz constant of the dynamics in the action.
    pub fn action_lipschitz(&self) -> f64 {
        match self {
            System::Quadratic(f) => f.constants().b,
            System::Inventory(_) => 1.0,
        }
    }

    /// Smoothness constant of the stage and terminal costs (gradient Lipschitz constant).
    pub fn smoothness(&self) -> f64 {
        match self {
            System::Quadratic(f) => 2.0 * f.constants().ell,
            System::Inventory(inv) => 2.0 * inv.action_weight.max(1.0),
        }
    }

    pub fn solve(&self, spec: &FtocpSpec) -> Result<FtocpSolution> {
        match self {
            System::Quadratic(f) => ftocp::solve_quadratic(spec, f.as_ref()),
            System::Inventory(inv) => ftocp::solve_inventory(spec, inv),
        }
    }

    pub fn check_params(&self, truth: &ParamSeq) -> Result<()> {
        truth.check_dims(self.param_dim())
    }
}

/// A system together with its ground truth and initial state.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub system: System,
    pub truth: ParamSeq,
    pub initial_state: DVector<f64>,
    pub seed: u64,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        system: System,
        truth: ParamSeq,
        initial_state: DVector<f64>,
        seed: u64,
    ) -> Result<Self> {
        system.check_params(&truth)?;
        if initial_state.len() != system.state_dim() {
            return Err(Error::dim("initial state", system.state_dim(), initial_state.len()));
        }
        if truth.horizon() < 2 {
            return Err(Error::InvalidConfig("horizon must be at least 2".into()));
        }
        Ok(Self {
            name: name.into(),
            system,
            truth,
            initial_state,
            seed,
        })
    }

    pub fn horizon(&self) -> usize {
        self.truth.horizon()
    }

    /// F_T at the true terminal parameter.
    pub fn true_terminal(&self) -> TerminalCost {
        self.system.terminal_cost(self.truth.get(self.horizon()))
    }

    /// Cost of a trajectory under the true parameters.
    pub fn trajectory_cost(&self, states: &[DVector<f64>], actions: &[DVector<f64>]) -> (Vec<f64>, f64) {
        let stage: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(t, u)| self.system.stage_cost(t, &states[t], u, self.truth.get(t)))
            .collect();
        let terminal = self.true_terminal().evaluate(&states[self.horizon()]);
        (stage, terminal)
    }
}
