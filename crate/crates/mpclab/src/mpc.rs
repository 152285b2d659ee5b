//! Receding-horizon control on noisy predictions, per-step errors and the admission check.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ftocp::{ClairvoyantSolver, FtocpSpec};
use crate::kkt::PerturbationTables;
use crate::param::{NoiseSchedule, ParamSeq, PredictionStream};
use crate::system::{Instance, System, TerminalCost};

/// Terminal cost placed at the end of a window that stops before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalRule {
    /// Indicator of the origin.
    ZeroState,
    /// Indicator of the reference x̄_{t+k}(ξ_{t+k|t}).
    PredictedTracking,
    /// Indicator of the state at t+k of the plan solved once on all-zero parameters.
    ReferenceTrajectory,
    /// The terminal cost F_T evaluated at ξ_{t+k|t}.
    TrueTerminal,
}

impl fmt::Display for TerminalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminalRule::ZeroState => "zero-state",
            TerminalRule::PredictedTracking => "predicted-tracking",
            TerminalRule::ReferenceTrajectory => "reference-trajectory",
            TerminalRule::TrueTerminal => "true-terminal",
        })
    }
}

impl FromStr for TerminalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-state" => Ok(TerminalRule::ZeroState),
            "predicted-tracking" => Ok(TerminalRule::PredictedTracking),
            "reference-trajectory" => Ok(TerminalRule::ReferenceTrajectory),
            "true-terminal" => Ok(TerminalRule::TrueTerminal),
            other => Err(Error::InvalidConfig(format!("unknown terminal rule `{other}`"))),
        }
    }
}

/// States of ψ_0^T(x₀, 0; F_T) with every parameter set to zero.
pub fn reference_trajectory(instance: &Instance) -> Result<Vec<DVector<f64>>> {
    let horizon = instance.horizon();
    let zeros = ParamSeq::zeros(instance.system.param_dim(), horizon);
    let terminal = instance.system.terminal_cost(zeros.get(horizon));
    let spec = FtocpSpec::new(0, horizon, instance.initial_state.clone(), zeros.window(0, horizon), terminal)?;
    Ok(instance.system.solve(&spec)?.states)
}

/// Terminal cost of the window ending at `end`, given the predicted parameter there.
pub fn window_terminal(
    rule: TerminalRule,
    system: &System,
    end: usize,
    horizon: usize,
    end_param: &DVector<f64>,
    reference: Option<&[DVector<f64>]>,
) -> TerminalCost {
    if end >= horizon {
        return system.terminal_cost(end_param);
    }
    match rule {
        TerminalRule::ZeroState => TerminalCost::Indicator {
            target: DVector::zeros(system.state_dim()),
        },
        TerminalRule::PredictedTracking => TerminalCost::Indicator {
            target: system.reference_state(end, end_param, horizon),
        },
        TerminalRule::ReferenceTrajectory => TerminalCost::Indicator {
            target: reference
                .map(|r| r[end].clone())
                .unwrap_or_else(|| DVector::zeros(system.state_dim())),
        },
        TerminalRule::TrueTerminal => system.terminal_cost(end_param),
    }
}

/// One closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    /// x_0, ..., x_T.
    pub states: Vec<DVector<f64>>,
    /// u_0, ..., u_{T-1}.
    pub actions: Vec<DVector<f64>>,
    /// e_t = ‖u_t − clairvoyant action from x_t‖.
    pub errors: Vec<f64>,
    /// ‖x_t − x*_t‖ against the offline optimum, t = 0..=T.
    pub distances: Vec<f64>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub total_cost: f64,
}

impl TrajectoryRecord {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// max_t ‖x_t‖.
    pub fn max_state_norm(&self) -> f64 {
        self.states.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn sum_sq_errors(&self) -> f64 {
        self.errors.iter().map(|e| e * e).sum()
    }

    /// max_t ‖x_{t+1} − g_t(x_t, u_t; ξ*_t)‖.
    pub fn dynamics_residual(&self, instance: &Instance) -> f64 {
        (0..self.horizon())
            .map(|t| {
                let next = instance
                    .system
                    .step(t, &self.states[t], &self.actions[t], instance.truth.get(t));
                (&self.states[t + 1] - next).norm()
            })
            .fold(0.0, f64::max)
    }

    fn from_path(instance: &Instance, states: Vec<DVector<f64>>, actions: Vec<DVector<f64>>, errors: Vec<f64>, opt: &[DVector<f64>]) -> Self {
        let (stage_costs, terminal_cost) = instance.trajectory_cost(&states, &actions);
        let total_cost = stage_costs.iter().sum::<f64>() + terminal_cost;
        let distances = states.iter().zip(opt).map(|(x, o)| (x - o).norm()).collect();
        Self {
            states,
            actions,
            errors,
            distances,
            stage_costs,
            terminal_cost,
            total_cost,
        }
    }
}

/// Offline optimum ψ_0^T(x₀, ξ*_{0:T}; F_T) as a trajectory.
pub fn solve_opt(instance: &Instance) -> Result<TrajectoryRecord> {
    let solver = ClairvoyantSolver::for_instance(instance);
    let sol = solver.solve(0, &instance.initial_state)?;
    let errors = vec![0.0; instance.horizon()];
    Ok(TrajectoryRecord::from_path(
        instance,
        sol.states.clone(),
        sol.actions,
        errors,
        &sol.states,
    ))
}

/// Runs MPC with prediction horizon k; the closed loop advances with the true parameters.
pub fn run_mpc(instance: &Instance, stream: &PredictionStream, k: usize, rule: TerminalRule) -> Result<TrajectoryRecord> {
    let horizon = instance.horizon();
    if k == 0 {
        return Err(Error::InvalidConfig("prediction horizon k must be at least 1".into()));
    }
    if stream.horizon() != horizon {
        return Err(Error::dim("prediction stream horizon", horizon, stream.horizon()));
    }
    let system = &instance.system;
    let clairvoyant = ClairvoyantSolver::for_instance(instance);
    let opt = clairvoyant.solve(0, &instance.initial_state)?;
    let reference = match rule {
        TerminalRule::ReferenceTrajectory => Some(reference_trajectory(instance)?),
        _ => None,
    };

    let mut states = vec![instance.initial_state.clone()];
    let mut actions = Vec::with_capacity(horizon);
    let mut errors = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let abort = |e: Error| Error::MpcAborted {
            step: t,
            source: Box::new(e),
        };
        let x = &states[t];
        let end = (t + k).min(horizon);
        let params = stream.window(t, end);
        let terminal = window_terminal(rule, system, end, horizon, &params[params.len() - 1], reference.as_deref());
        let spec = FtocpSpec::new(t, end, x.clone(), params, terminal).map_err(abort)?;
        let plan = system.solve(&spec).map_err(abort)?;
        let u = plan.actions[0].clone();
        let best = clairvoyant.solve(t, x).map_err(abort)?;
        errors.push((&u - &best.actions[0]).norm());
        let next = system.step(t, x, &u, instance.truth.get(t));
        actions.push(u);
        states.push(next);
    }
    Ok(TrajectoryRecord::from_path(instance, states, actions, errors, &opt.states))
}

/// Right-hand side of the per-step error bound at step t.
///
/// Σ_{τ=0}^{k} ((R/C₃ + D_{x*}) q₁(τ) + q₂(τ)) ρ_{t,τ}, plus 2R((R/C₃ + D_{x*}) q₁(k) + q₂(k)) when t < T − k.
pub fn per_step_error_bound_rhs(
    t: usize,
    k: usize,
    horizon: usize,
    schedule: &NoiseSchedule,
    tables: &PerturbationTables,
    radius: f64,
    c3: f64,
    d_xstar: f64,
) -> Result<f64> {
    let scale = radius / c3 + d_xstar;
    let coef = |offset: usize| -> Result<f64> { Ok(scale * tables.q1_at(offset)? + tables.q2_at(offset)?) };
    let mut total = 0.0;
    for offset in 0..=k {
        let rho = schedule.rho(t, offset, horizon);
        if rho != 0.0 {
            total += coef(offset)? * rho;
        }
    }
    if t + k < horizon {
        total += 2.0 * radius * coef(k)?;
    }
    Ok(total)
}

/// Outcome of the smallness condition on every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissionReport {
    pub pass: bool,
    /// R / (C₃² L_g).
    pub threshold: f64,
    /// threshold − max_t LHS(t).
    pub worst_margin: f64,
    pub worst_step: usize,
}

/// Checks LHS(t) ≤ R/(C₃² L_g) for all t < T.
pub fn pipeline_admission_check(
    k: usize,
    horizon: usize,
    schedule: &NoiseSchedule,
    tables: &PerturbationTables,
    radius: f64,
    c3: f64,
    action_lipschitz: f64,
    d_xstar: f64,
) -> Result<AdmissionReport> {
    let threshold = radius / (c3 * c3 * action_lipschitz);
    let mut worst = (f64::INFINITY, 0);
    for t in 0..horizon {
        let lhs = per_step_error_bound_rhs(t, k, horizon, schedule, tables, radius, c3, d_xstar)?;
        let margin = threshold - lhs;
        if margin < worst.0 {
            worst = (margin, t);
        }
    }
    Ok(AdmissionReport {
        pass: worst.0 >= 0.0,
        threshold,
        worst_margin: worst.0,
        worst_step: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric(h: f64, lam: f64, k: usize, horizon: usize) -> PerturbationTables {
        PerturbationTables::from_fns(k, horizon, |_| 0.0, |i| h * lam.powi(i as i32), |i| h * lam.powi(i as i32))
    }

    #[test]
    fn rhs_vanishes_without_noise_and_tail() {
        let tables = PerturbationTables::from_fns(3, 10, |_| 0.0, |i| if i < 3 { 1.0 } else { 0.0 }, |_| 1.0);
        let rhs = per_step_error_bound_rhs(0, 3, 10, &NoiseSchedule::Zero, &tables, 1.0, 2.0, 0.5).unwrap();
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn rhs_geometric_closed_form() {
        let (h, lam, rho, radius, k) = (1.5, 0.6, 0.2, 3.0, 5);
        let tables = geometric(h, lam, k, 40);
        let rhs = per_step_error_bound_rhs(2, k, 40, &NoiseSchedule::Constant { rho }, &tables, radius, 4.0, 1.0).unwrap();
        let closed = h * rho * (1.0 - lam.powi(k as i32 + 1)) / (1.0 - lam) + 2.0 * radius * h * lam.powi(k as i32);
        assert!((rhs - closed).abs() < 1e-12);
    }

    #[test]
    fn final_stretch_drops_tail_term() {
        let tables = geometric(1.0, 0.5, 4, 10);
        let rhs = per_step_error_bound_rhs(8, 4, 10, &NoiseSchedule::Constant { rho: 1.0 }, &tables, 5.0, 2.0, 0.0).unwrap();
        assert!((rhs - (1.0 + 0.5 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn missing_entries_are_reported() {
        let tables = geometric(1.0, 0.5, 2, 10);
        assert!(matches!(
            per_step_error_bound_rhs(0, 4, 10, &NoiseSchedule::Zero, &tables, 1.0, 1.0, 0.0),
            Err(Error::MissingTableEntry { .. })
        ));
    }

    #[test]
    fn zero_noise_large_k_passes_with_threshold_margin() {
        let tables = geometric(1.0, 0.3, 30, 40);
        let c3 = tables.c3();
        let rep = pipeline_admission_check(30, 40, &NoiseSchedule::Zero, &tables, 2.0, c3, 1.0, 0.0).unwrap();
        assert!(rep.pass);
        assert!((rep.worst_margin - rep.threshold).abs() < 1e-12 * rep.threshold.max(1.0) + 4.0 * 0.3f64.powi(30));
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in [
            TerminalRule::ZeroState,
            TerminalRule::PredictedTracking,
            TerminalRule::ReferenceTrajectory,
            TerminalRule::TrueTerminal,
        ] {
            assert_eq!(rule.to_string().parse::<TerminalRule>().unwrap(), rule);
        }
    }
}
