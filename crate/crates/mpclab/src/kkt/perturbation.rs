use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ftocp::{FtocpSpec, QuadraticKkt};
use crate::linalg::spectral_norm;
use crate::mpc::{reference_trajectory, window_terminal, TerminalRule};
use crate::param::ParamSeq;
use crate::system::{Instance, System, TerminalCost};

/// Per-offset sensitivity coefficients q₁, q₂ (offsets 0..=k) and q₃ (offsets 0..=T).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationTables {
    pub k: usize,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub q3: Vec<f64>,
    /// Measured maxima before taking the monotone envelope; empty for closed-form tables.
    pub raw_q1: Vec<f64>,
    pub raw_q2: Vec<f64>,
    pub raw_q3: Vec<f64>,
}

/// envelope[τ] = max_{τ' ≥ τ} raw[τ'].
fn monotone_envelope(raw: &[f64]) -> Vec<f64> {
    let mut out = raw.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

impl PerturbationTables {
    /// Tables from closed-form coefficient functions.
    pub fn from_fns(
        k: usize,
        horizon: usize,
        q1: impl Fn(usize) -> f64,
        q2: impl Fn(usize) -> f64,
        q3: impl Fn(usize) -> f64,
    ) -> Self {
        Self {
            k,
            q1: (0..=k).map(q1).collect(),
            q2: (0..=k).map(q2).collect(),
            q3: (0..=horizon).map(q3).collect(),
            raw_q1: Vec::new(),
            raw_q2: Vec::new(),
            raw_q3: Vec::new(),
        }
    }

    /// C₃ = Σ_τ q₃(τ).
    pub fn c3(&self) -> f64 {
        self.q3.iter().sum()
    }

    pub fn q1_at(&self, offset: usize) -> Result<f64> {
        self.q1.get(offset).copied().ok_or(Error::MissingTableEntry { table: "q1", offset })
    }

    pub fn q2_at(&self, offset: usize) -> Result<f64> {
        self.q2.get(offset).copied().ok_or(Error::MissingTableEntry { table: "q2", offset })
    }

    pub fn q3_at(&self, offset: usize) -> Result<f64> {
        self.q3.get(offset).copied().ok_or(Error::MissingTableEntry { table: "q3", offset })
    }
}

/// Finite-difference step for a parameter of norm `norm`.
fn fd_step(norm: f64) -> f64 {
    1e-5 * (1.0 + norm)
}

/// Jacobians of the first action of one window.
struct WindowProbe<'a> {
    system: &'a System,
    start: usize,
    end: usize,
    params: Vec<DVector<f64>>,
    terminal: TerminalCost,
}

impl WindowProbe<'_> {
    fn first_action(&self, z: &DVector<f64>, params: Vec<DVector<f64>>, terminal: TerminalCost) -> Result<DVector<f64>> {
        let spec = FtocpSpec::new(self.start, self.end, z.clone(), params, terminal)?;
        Ok(self.system.solve(&spec)?.actions[0].clone())
    }

    fn terminal_for(&self, params: &[DVector<f64>]) -> TerminalCost {
        match &self.terminal {
            TerminalCost::Indicator { .. } => self.terminal.clone(),
            _ => self.system.terminal_cost(&params[params.len() - 1]),
        }
    }

    /// ∂v_start/∂ξ_{start+offset} by central differences.
    fn param_jacobian(&self, z: &DVector<f64>, offset: usize) -> Result<DMatrix<f64>> {
        let base = &self.params[offset];
        let h = fd_step(base.norm());
        let mut cols = Vec::with_capacity(base.len());
        for j in 0..base.len() {
            let mut plus = self.params.clone();
            plus[offset][j] += h;
            let mut minus = self.params.clone();
            minus[offset][j] -= h;
            let tp = self.terminal_for(&plus);
            let tm = self.terminal_for(&minus);
            let vp = self.first_action(z, plus, tp)?;
            let vm = self.first_action(z, minus, tm)?;
            cols.push((vp - vm) / (2.0 * h));
        }
        Ok(DMatrix::from_columns(&cols))
    }

    /// ∂v_start/∂ζ for an indicator terminal.
    fn target_jacobian(&self, z: &DVector<f64>, target: &DVector<f64>) -> Result<DMatrix<f64>> {
        let h = fd_step(target.norm());
        let mut cols = Vec::with_capacity(target.len());
        for j in 0..target.len() {
            let mut plus = target.clone();
            plus[j] += h;
            let mut minus = target.clone();
            minus[j] -= h;
            let vp = self.first_action(z, self.params.clone(), TerminalCost::Indicator { target: plus })?;
            let vm = self.first_action(z, self.params.clone(), TerminalCost::Indicator { target: minus })?;
            cols.push((vp - vm) / (2.0 * h));
        }
        Ok(DMatrix::from_columns(&cols))
    }

    /// Jacobian for each offset 0..=len; the last one is with respect to ζ for indicator windows.
    fn jacobians(&self, z: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let len = self.end - self.start;
        let mut out = Vec::with_capacity(len + 1);
        for offset in 0..len {
            out.push(self.param_jacobian(z, offset)?);
        }
        out.push(match &self.terminal {
            TerminalCost::Indicator { target } => self.target_jacobian(z, target)?,
            _ => self.param_jacobian(z, len)?,
        });
        Ok(out)
    }
}

/// (q₁, q₂) contributions of one window: q₂ from ‖J(0)‖, q₁ from √Σᵢ‖J(eᵢ) − J(0)‖².
fn window_coefficients(probe: &WindowProbe<'_>, state_dim: usize, affine_in_params: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let zero = DVector::zeros(state_dim);
    let base = probe.jacobians(&zero)?;
    let q2: Vec<f64> = base.iter().map(spectral_norm).collect();
    let mut q1_sq = vec![0.0; base.len()];
    if !affine_in_params {
        for i in 0..state_dim {
            let mut e = DVector::zeros(state_dim);
            e[i] = 1.0;
            let shifted = probe.jacobians(&e)?;
            for (acc, (s, b)) in q1_sq.iter_mut().zip(shifted.iter().zip(&base)) {
                *acc += spectral_norm(&(s - b)).powi(2);
            }
        }
    }
    Ok((q1_sq.into_iter().map(f64::sqrt).collect(), q2))
}

/// q₃ exactly: column i of ∂χ/∂z solves Υ χ = e at the η_start rows.
fn state_sensitivity(instance: &Instance, t: usize) -> Result<Vec<f64>> {
    let family = instance
        .system
        .family()
        .ok_or_else(|| Error::InvalidConfig("state sensitivity needs a quadratic system".into()))?;
    let horizon = instance.horizon();
    let spec = FtocpSpec::new(
        t,
        horizon,
        instance.initial_state.clone(),
        instance.truth.window(t, horizon),
        instance.true_terminal(),
    )?;
    let mut kkt = QuadraticKkt::assemble(family.as_ref(), &spec)?;
    kkt.factorize()?;
    let n = kkt.state_dim;
    let m = kkt.action_dim;
    let len = kkt.len;
    let mut y_cols = vec![DMatrix::zeros(n, n); len + 1];
    let mut v_cols = vec![DMatrix::zeros(m, n); len];
    for i in 0..n {
        let mut beta = DVector::zeros(kkt.dim());
        beta[kkt.eta_index(0) + i] = 1.0;
        let chi = kkt.solve_vec(&beta)?;
        for tau in 0..=len {
            if let Some(y) = kkt.y_index(tau) {
                y_cols[tau].set_column(i, &chi.rows(y, n));
            }
            if tau < len {
                v_cols[tau].set_column(i, &chi.rows(kkt.v_index(tau), m));
            }
        }
    }
    Ok((0..=len)
        .map(|tau| {
            let vy = spectral_norm(&y_cols[tau]);
            let vv = if tau < len { spectral_norm(&v_cols[tau]) } else { 0.0 };
            vy.max(vv)
        })
        .collect())
}

/// Measures q₁, q₂ on the MPC windows the rule produces and q₃ on the clairvoyant windows.
///
/// Windows are evaluated on the truth and on `samples` parameter sequences drawn from the box.
pub fn measure_perturbation_bounds(
    instance: &Instance,
    k: usize,
    rule: TerminalRule,
    samples: usize,
    seed: u64,
) -> Result<PerturbationTables> {
    let family = instance
        .system
        .family()
        .ok_or_else(|| Error::InvalidConfig("perturbation bounds need a quadratic system".into()))?;
    let horizon = instance.horizon();
    if k == 0 || k > horizon {
        return Err(Error::InvalidConfig(format!("k must lie in 1..={horizon}")));
    }
    let n = family.state_dim();
    let affine = !family.matrices_depend_on_params();
    let reference = match rule {
        TerminalRule::ReferenceTrajectory => Some(reference_trajectory(instance)?),
        _ => None,
    };

    let mut sequences = vec![instance.truth.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pbox = family.param_box();
    for _ in 0..samples {
        sequences.push(ParamSeq::new((0..=horizon).map(|_| pbox.sample(&mut rng)).collect())?);
    }

    let jobs: Vec<(usize, usize)> = (0..sequences.len())
        .flat_map(|s| (0..horizon).map(move |t| (s, t)))
        .collect();
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(s, t)| {
            let seq = &sequences[s];
            let end = (t + k).min(horizon);
            let params = seq.window(t, end);
            let terminal = window_terminal(
                rule,
                &instance.system,
                end,
                horizon,
                &params[params.len() - 1],
                reference.as_deref(),
            );
            let probe = WindowProbe {
                system: &instance.system,
                start: t,
                end,
                params,
                terminal,
            };
            window_coefficients(&probe, n, affine)
        })
        .collect();

    let mut raw_q1 = vec![0.0; k + 1];
    let mut raw_q2 = vec![0.0; k + 1];
    for r in results {
        let (q1, q2) = r?;
        for (offset, (a, b)) in q1.iter().zip(&q2).enumerate() {
            raw_q1[offset] = f64::max(raw_q1[offset], *a);
            raw_q2[offset] = f64::max(raw_q2[offset], *b);
        }
    }

    let q3_rows: Vec<Result<Vec<f64>>> = (0..horizon).into_par_iter().map(|t| state_sensitivity(instance, t)).collect();
    let mut raw_q3 = vec![0.0; horizon + 1];
    for row in q3_rows {
        for (offset, v) in row?.into_iter().enumerate() {
            raw_q3[offset] = f64::max(raw_q3[offset], v);
        }
    }

    Ok(PerturbationTables {
        k,
        q1: monotone_envelope(&raw_q1),
        q2: monotone_envelope(&raw_q2),
        q3: monotone_envelope(&raw_q3),
        raw_q1,
        raw_q2,
        raw_q3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_is_monotone_and_dominating() {
        let raw = [1.0, 0.2, 0.5, 0.1, 0.0];
        let env = monotone_envelope(&raw);
        assert_eq!(env, vec![1.0, 0.5, 0.5, 0.1, 0.0]);
    }
}
