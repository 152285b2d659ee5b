//! Dynamic regret, its explicit-constant bounds, and horizon/noise sweeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{log_linear_fit, log_log_fit, LineFit};
use crate::kkt::{
    assemble, measure_perturbation_bounds, closed_form_decay, tracking_sensitivity, DecayFit, DecayConstants,
    DecayInputs, PerturbationTables,
};
use crate::linalg::min_singular;
use crate::mpc::{pipeline_admission_check, run_mpc, solve_opt, AdmissionReport, TerminalRule, TrajectoryRecord};
use crate::param::{NoiseSchedule, PredictionStream};
use crate::system::{Instance, TerminalCost};
use crate::ftocp::FtocpSpec;

/// Regrets at or below this value are treated as zero in fits.
pub const REGRET_FLOOR: f64 = 1e-10;
/// Allowed negativity of regret and slack on the inequality checks.
pub const REGRET_TOL: f64 = 1e-7;

/// Source of the perturbation coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// Closed-form decay and sensitivity constants.
    Theory,
    /// Finite-difference envelopes measured on the instance.
    Measured,
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundMode::Theory => "theory",
            BoundMode::Measured => "measured",
        })
    }
}

impl FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(BoundMode::Theory),
            "measured" => Ok(BoundMode::Measured),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// Everything the pipeline inequalities need for one instance and horizon.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConstants {
    pub mode: BoundMode,
    pub k: usize,
    pub tables: PerturbationTables,
    /// Ball radius R.
    pub radius: f64,
    pub c3: f64,
    /// L_g, the Lipschitz constant of the dynamics in the action.
    pub action_lipschitz: f64,
    /// Gradient Lipschitz constant of the costs.
    pub smoothness: f64,
    /// D_{x*} = max_t ‖x*_t‖.
    pub d_xstar: f64,
    /// Geometric envelope (H, λ) used for R.
    pub decay_h: f64,
    pub decay_lambda: f64,
    pub decay: Option<DecayConstants>,
}

/// R = max{D_{x*}, 2 L_g H³/(1 − λ)³}, or D_{x*} when λ ≥ 1.
fn disturbance_radius(d_xstar: f64, l_g: f64, h: f64, lambda: f64) -> f64 {
    if lambda < 1.0 {
        d_xstar.max(2.0 * l_g * h.powi(3) / (1.0 - lambda).powi(3))
    } else {
        d_xstar
    }
}

/// min over clairvoyant windows of σ_min(N) and over MPC windows of σ_min(N̂).
pub fn uniform_sigma(instance: &Instance, k: usize) -> Result<f64> {
    let family = instance
        .system
        .family()
        .ok_or_else(|| Error::InvalidConfig("uniform sigma needs a quadratic system".into()))?;
    let horizon = instance.horizon();
    let n = family.state_dim();
    let mut windows: Vec<(usize, usize, bool)> = (0..horizon).map(|t| (t, horizon, false)).collect();
    windows.extend((0..horizon.saturating_sub(k)).map(|t| (t, t + k, true)));
    let sigmas: Vec<Result<f64>> = windows
        .par_iter()
        .map(|&(t, end, hat)| {
            let terminal = if hat {
                TerminalCost::Indicator {
                    target: nalgebra::DVector::zeros(n),
                }
            } else {
                instance.system.terminal_cost(instance.truth.get(end))
            };
            let spec = FtocpSpec::new(t, end, instance.initial_state.clone(), instance.truth.window(t, end), terminal)?;
            let asm = assemble(family.as_ref(), &spec)?;
            // N has full row rank; N̂ may not, so use the row-space singular value
            Ok(if asm.dynamics.nrows() <= asm.dynamics.ncols() {
                min_singular(&asm.dynamics.transpose())
            } else {
                0.0
            })
        })
        .collect();
    sigmas.into_iter().try_fold(f64::INFINITY, |acc, s| Ok(acc.min(s?)))
}

impl PipelineConstants {
    pub fn measured(instance: &Instance, k: usize, rule: TerminalRule, samples: usize, seed: u64) -> Result<Self> {
        let tables = measure_perturbation_bounds(instance, k, rule, samples, seed)?;
        let opt = solve_opt(instance)?;
        let d_xstar = opt.max_state_norm();
        let l_g = instance.system.action_lipschitz();
        let fits = [DecayFit::fit(&tables.q2), DecayFit::fit(&tables.q3)];
        let q1_fit = DecayFit::fit(&tables.q1);
        let decay_h = fits.iter().chain([&q1_fit]).map(|f| f.c).fold(0.0, f64::max);
        let decay_lambda = fits.iter().map(|f| f.lambda).fold(q1_fit.lambda.sqrt(), f64::max);
        let radius = disturbance_radius(d_xstar, l_g, decay_h, decay_lambda);
        Ok(Self {
            mode: BoundMode::Measured,
            k,
            c3: tables.c3(),
            tables,
            radius,
            action_lipschitz: l_g,
            smoothness: instance.system.smoothness(),
            d_xstar,
            decay_h,
            decay_lambda,
            decay: None,
        })
    }

    /// Closed-form tables; families whose matrices ignore ξ use the disturbance constants.
    pub fn theory(instance: &Instance, k: usize) -> Result<Self> {
        let family = instance
            .system
            .family()
            .ok_or_else(|| Error::InvalidConfig("closed-form constants need a quadratic system".into()))?;
        let c = family.constants().clone();
        let sigma = uniform_sigma(instance, k)?;
        let opt = solve_opt(instance)?;
        let d_xstar = opt.max_state_norm();
        let l_g = instance.system.action_lipschitz();
        let horizon = instance.horizon();
        let decay = closed_form_decay(&DecayInputs::from_declared(&c, sigma))?;
        let lam = decay.lambda;
        let (h, q1_on, radius) = if family.matrices_depend_on_params() || c.d_xref > 0.0 {
            let radius = d_xstar + c.d_xref;
            (tracking_sensitivity(&decay, &c, radius, d_xstar), true, radius)
        } else {
            let h = decay.c2 * (c.lipschitz.w + 1.0);
            (h, false, disturbance_radius(d_xstar, l_g, h, lam))
        };
        let tables = PerturbationTables::from_fns(
            k,
            horizon,
            |i| if q1_on { h * lam.powi(2 * i as i32) } else { 0.0 },
            |i| h * lam.powi(i as i32),
            |i| h * lam.powi(i as i32),
        );
        Ok(Self {
            mode: BoundMode::Theory,
            k,
            c3: tables.c3(),
            tables,
            radius,
            action_lipschitz: l_g,
            smoothness: instance.system.smoothness(),
            d_xstar,
            decay_h: h,
            decay_lambda: lam,
            decay: Some(decay),
        })
    }

    pub fn build(instance: &Instance, k: usize, rule: TerminalRule, mode: BoundMode, samples: usize, seed: u64) -> Result<Self> {
        match mode {
            BoundMode::Theory => Self::theory(instance, k),
            BoundMode::Measured => Self::measured(instance, k, rule, samples, seed),
        }
    }

    pub fn admission(&self, horizon: usize, schedule: &NoiseSchedule) -> Result<AdmissionReport> {
        pipeline_admission_check(
            self.k,
            horizon,
            schedule,
            &self.tables,
            self.radius,
            self.c3,
            self.action_lipschitz,
            self.d_xstar,
        )
    }

}

/// Regret of one run and every explicit-constant inequality evaluated on it.
#[derive(Debug, Clone, Serialize)]
pub struct RegretReport {
    pub cost_alg: f64,
    pub cost_opt: f64,
    pub regret: f64,
    pub errors: Vec<f64>,
    pub sum_sq_errors: f64,
    pub aggregate_e: Option<f64>,
    /// c = (ℓ/2)(1 + 2C₃L_g²)(1 + C₃).
    pub c_const: f64,
    /// √(c·OPT·Σe²) + c·Σe².
    pub regret_bound: f64,
    /// 2√(c·OPT·Σe²) + c·Σe², the form the derivation yields before simplification.
    pub regret_bound_two_sqrt: f64,
    pub regret_ok: bool,
    pub regret_two_sqrt_ok: bool,
    pub distances: Vec<f64>,
    /// L_g Σ_{i<t} q₃(i) e_{t−1−i}.
    pub distance_bounds: Vec<f64>,
    pub distance_ok: bool,
    pub nonnegative_ok: bool,
}

impl RegretReport {
    pub fn all_ok(&self) -> bool {
        self.regret_ok && self.distance_ok && self.nonnegative_ok
    }
}

/// Evaluates the regret and state-distance inequalities on a run.
pub fn regret_inequalities(
    run: &TrajectoryRecord,
    opt: &TrajectoryRecord,
    smoothness: f64,
    action_lipschitz: f64,
    tables: &PerturbationTables,
) -> Result<RegretReport> {
    if run.horizon() != opt.horizon() {
        return Err(Error::dim("trajectory horizon", opt.horizon(), run.horizon()));
    }
    let horizon = run.horizon();
    let c3 = tables.c3();
    let c = smoothness / 2.0 * (1.0 + 2.0 * c3 * action_lipschitz * action_lipschitz) * (1.0 + c3);
    let sum_sq = run.sum_sq_errors();
    let regret = run.total_cost - opt.total_cost;
    let root = (c * opt.total_cost.max(0.0) * sum_sq).sqrt();
    let regret_bound = root + c * sum_sq;
    let regret_bound_two_sqrt = 2.0 * root + c * sum_sq;

    let mut distance_bounds = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let mut acc = 0.0;
        for i in 0..t {
            acc += tables.q3_at(i)? * run.errors[t - 1 - i];
        }
        distance_bounds.push(action_lipschitz * acc);
    }
    let distance_ok = run
        .distances
        .iter()
        .zip(&distance_bounds)
        .all(|(d, b)| *d <= b + 1e-9 * (1.0 + b));

    Ok(RegretReport {
        cost_alg: run.total_cost,
        cost_opt: opt.total_cost,
        regret,
        errors: run.errors.clone(),
        sum_sq_errors: sum_sq,
        aggregate_e: None,
        c_const: c,
        regret_bound,
        regret_bound_two_sqrt,
        regret_ok: regret <= regret_bound + REGRET_TOL,
        regret_two_sqrt_ok: regret <= regret_bound_two_sqrt + REGRET_TOL,
        distances: run.distances.clone(),
        distance_bounds,
        distance_ok,
        nonnegative_ok: regret >= -REGRET_TOL,
    })
}

/// E = Σ_{τ<k} (q₁(τ) + q₂(τ)) P(τ) + (q₁(k)² + q₂(k)²) T.
pub fn aggregate_e(k: usize, tables: &PerturbationTables, power: &[f64], horizon: usize) -> Result<f64> {
    let mut total = 0.0;
    for tau in 0..k {
        let p = power.get(tau).copied().ok_or(Error::MissingTableEntry { table: "P", offset: tau })?;
        total += (tables.q1_at(tau)? + tables.q2_at(tau)?) * p;
    }
    total += (tables.q1_at(k)?.powi(2) + tables.q2_at(k)?.powi(2)) * horizon as f64;
    Ok(total)
}

/// One regret per swept value plus a fit on the positive ones.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub variable: String,
    pub values: Vec<f64>,
    pub regrets: Vec<f64>,
    pub bounds: Vec<Option<f64>>,
    pub admitted: Vec<bool>,
    pub fit: Option<LineFit>,
}

impl SweepResult {
    /// Regret never increases by more than `tol` from one value to the next.
    pub fn non_increasing(&self, tol: f64) -> bool {
        self.regrets.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Zero-noise regret for each horizon k; log-linear fit of regret against k.
pub fn sweep_horizon(instance: &Instance, ks: &[usize], rule: TerminalRule) -> Result<SweepResult> {
    let horizon = instance.horizon();
    if let Some(k) = ks.iter().find(|k| **k == 0 || **k > horizon) {
        return Err(Error::InvalidConfig(format!("k = {k} outside 1..={horizon}")));
    }
    let opt = solve_opt(instance)?;
    let stream = PredictionStream::exact(instance.truth.clone());
    let regrets: Vec<Result<f64>> = ks
        .par_iter()
        .map(|&k| Ok(run_mpc(instance, &stream, k, rule)?.total_cost - opt.total_cost))
        .collect();
    let regrets = regrets.into_iter().collect::<Result<Vec<f64>>>()?;
    let values: Vec<f64> = ks.iter().map(|k| *k as f64).collect();
    let fit = log_linear_fit(&values, &regrets, REGRET_FLOOR);
    Ok(SweepResult {
        variable: "k".into(),
        bounds: vec![None; values.len()],
        admitted: vec![true; values.len()],
        values,
        regrets,
        fit,
    })
}

/// Regret for each scaled schedule at fixed k; log-log fit over admitted points.
pub fn sweep_noise(
    instance: &Instance,
    base: &NoiseSchedule,
    scales: &[f64],
    k: usize,
    rule: TerminalRule,
    seed: u64,
    pipeline: Option<&PipelineConstants>,
) -> Result<SweepResult> {
    let opt = solve_opt(instance)?;
    let horizon = instance.horizon();
    let points: Vec<Result<(f64, Option<f64>, bool)>> = scales
        .par_iter()
        .map(|&s| {
            let schedule = base.scaled(s);
            let stream = PredictionStream::new(instance.truth.clone(), schedule.clone(), seed)?;
            let run = run_mpc(instance, &stream, k, rule)?;
            let regret = run.total_cost - opt.total_cost;
            match pipeline {
                Some(p) => {
                    let admitted = p.admission(horizon, &schedule)?.pass;
                    let report = regret_inequalities(&run, &opt, p.smoothness, p.action_lipschitz, &p.tables)?;
                    Ok((regret, Some(report.regret_bound), admitted))
                }
                None => Ok((regret, None, true)),
            }
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let regrets: Vec<f64> = points.iter().map(|p| p.0).collect();
    let admitted: Vec<bool> = points.iter().map(|p| p.2).collect();
    let (fx, fy): (Vec<f64>, Vec<f64>) = scales
        .iter()
        .zip(&regrets)
        .zip(&admitted)
        .filter(|(_, ok)| **ok)
        .map(|((s, r), _)| (*s, *r))
        .unzip();
    Ok(SweepResult {
        variable: "noise_scale".into(),
        values: scales.to_vec(),
        bounds: points.iter().map(|p| p.1).collect(),
        admitted,
        regrets,
        fit: log_log_fit(&fx, &fy, REGRET_FLOOR),
    })
}
