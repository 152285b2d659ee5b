//! Sensitivity of inventory chains to a terminal-state perturbation.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ftocp::{solve_inventory, FtocpSpec};
use crate::kkt::DecayFit;
use crate::system::{InventorySystem, TerminalCost};

const BASE_TERMINAL: f64 = 0.4;
/// Forward-difference step for the one-sided sensitivity profile.
const PROFILE_STEP: f64 = 1e-6;

/// One (p, ε, h) comparison of the base and perturbed solutions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub p: usize,
    pub eps: f64,
    pub h: usize,
    pub x_base: f64,
    pub x_perturbed: f64,
    /// |x_perturbed − x_base| − ε.
    pub difference_error: f64,
    /// Largest deviation of either solution from the alternating closed form.
    pub closed_form_error: f64,
}

impl SuiteRow {
    pub fn passes(&self, tol: f64) -> bool {
        self.difference_error.abs() <= tol && self.closed_form_error <= tol
    }
}

/// Largest ε the non-decay statement covers for window length p.
pub fn max_eps(p: usize) -> f64 {
    if p.is_multiple_of(2) {
        2.0 / (5.0 * (p as f64 - 1.0))
    } else {
        2.0 / (5.0 * p as f64)
    }
}

/// Terminal target ∓2/5 + ε: −2/5 for even p, +2/5 for odd p.
fn terminal_target(p: usize, eps: f64) -> f64 {
    let sign = if p.is_multiple_of(2) { -1.0 } else { 1.0 };
    sign * BASE_TERMINAL + eps
}

/// x_h = 2/5 + ε for odd h, −2/5 + ε for even h.
fn closed_form(h: usize, eps: f64) -> f64 {
    if h % 2 == 1 {
        BASE_TERMINAL + eps
    } else {
        -BASE_TERMINAL + eps
    }
}

fn chain_spec(p: usize, terminal: f64) -> Result<FtocpSpec> {
    let params = InventorySystem::alternating_targets(p)
        .into_iter()
        .map(|v| DVector::from_element(1, v))
        .collect();
    FtocpSpec::new(
        0,
        p,
        DVector::zeros(1),
        params,
        TerminalCost::Indicator {
            target: DVector::from_element(1, terminal),
        },
    )
}

fn chain_states(sys: &InventorySystem, p: usize, terminal: f64) -> Result<Vec<f64>> {
    let sol = solve_inventory(&chain_spec(p, terminal)?, sys)?;
    Ok(sol.states.iter().map(|x| x[0]).collect())
}

/// Solves the two-sided chain at terminal ∓2/5 and ∓2/5 + ε for every p and ε.
pub fn inventory_counterexample_suite(ps: &[usize], eps_grid: &[f64]) -> Result<Vec<SuiteRow>> {
    let sys = InventorySystem::two_sided();
    let mut rows = Vec::new();
    for &p in ps {
        if p < 2 {
            return Err(Error::InvalidConfig(format!("window length p = {p} must be at least 2")));
        }
        let base = chain_states(&sys, p, terminal_target(p, 0.0))?;
        for &eps in eps_grid {
            if !(0.0..=max_eps(p) + 1e-15).contains(&eps) {
                return Err(Error::InvalidConfig(format!(
                    "eps = {eps} outside [0, {}] for p = {p}",
                    max_eps(p)
                )));
            }
            let perturbed = chain_states(&sys, p, terminal_target(p, eps))?;
            for h in 1..=p {
                let closed_form_error = (base[h] - closed_form(h, 0.0))
                    .abs()
                    .max((perturbed[h] - closed_form(h, eps)).abs());
                rows.push(SuiteRow {
                    p,
                    eps,
                    h,
                    x_base: base[h],
                    x_perturbed: perturbed[h],
                    difference_error: (perturbed[h] - base[h]).abs() - eps,
                    closed_form_error,
                });
            }
        }
    }
    Ok(rows)
}

/// ∂x_h/∂(terminal state) indexed by the offset p − h, with its geometric fit.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityProfile {
    pub p: usize,
    /// sensitivities[offset] for offsets 0..p (h = p down to 1).
    pub sensitivities: Vec<f64>,
    pub fit: DecayFit,
}

impl SensitivityProfile {
    /// max/min over the profile; 1 means no decay at all.
    pub fn spread(&self) -> f64 {
        let max = self.sensitivities.iter().copied().fold(0.0, f64::max);
        let min = self.sensitivities.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// Forward-difference sensitivity of the states to the terminal target.
pub fn terminal_sensitivity_profile(sys: &InventorySystem, p: usize, terminal: f64, step: f64) -> Result<SensitivityProfile> {
    let base = chain_states(sys, p, terminal)?;
    let moved = chain_states(sys, p, terminal + step)?;
    let sensitivities: Vec<f64> = (0..p).map(|offset| (moved[p - offset] - base[p - offset]).abs() / step).collect();
    let fit = DecayFit::fit(&sensitivities);
    Ok(SensitivityProfile { p, sensitivities, fit })
}

/// One-sided chain (u ≥ −4/5, action weight 1), alternating targets, terminal −2/5.
pub fn one_sided_sensitivity_profile(p: usize) -> Result<SensitivityProfile> {
    terminal_sensitivity_profile(&InventorySystem::one_sided(1.0), p, -BASE_TERMINAL, PROFILE_STEP)
}

/// Two-sided chain with the terminal moved by `eps` from its base value.
pub fn two_sided_sensitivity_profile(p: usize, eps: f64) -> Result<SensitivityProfile> {
    terminal_sensitivity_profile(&InventorySystem::two_sided(), p, terminal_target(p, 0.0), eps)
}
