//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and always exits 0;
//! a FAIL is a reproducible finding about the bound being checked, not a harness error.

use std::cell::OnceCell;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mpclab::controllability::{controllability_matrix, min_singular_controllability};
use mpclab::examples::{
    inventory_counterexample_suite, max_eps, one_sided_sensitivity_profile, preset, GridParams, PendulumParams,
    PRESET_NAMES,
};
use mpclab::ftocp::FtocpSpec;
use mpclab::assumptions::validate_assumptions;
use mpclab::kkt::{
    assemble, block_inverse_profile, block_matrix_spectrum_bounds, decay_from_spectrum, closed_form_decay, DecayInputs,
};
use mpclab::linalg::{singular_range, sym_eig_range};
use mpclab::mpc::{per_step_error_bound_rhs, run_mpc, solve_opt, TerminalRule};
use mpclab::param::{NoiseSchedule, ParamSeq, PredictionStream};
use mpclab::regret::{regret_inequalities, sweep_horizon, sweep_noise, uniform_sigma, PipelineConstants};
use mpclab::system::{Instance, System, TrackingSystem};
use mpclab::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

/// Relative slack for hard inequalities.
const REL: f64 = 1e-9;

fn inventory_non_decay() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    let mut rows = 0;
    for p in [4, 6, 8, 5, 7] {
        for row in inventory_counterexample_suite(&[p], &[max_eps(p)])? {
            worst = worst.max(row.difference_error.abs()).max(row.closed_form_error);
            rows += 1;
        }
    }
    outcome(worst <= 1e-6, format!("{rows} rows, worst deviation {worst:.3e}"))
}

fn inventory_decay() -> Result<Outcome> {
    let prof = one_sided_sensitivity_profile(12)?;
    let fit = &prof.fit;
    let ok = fit.lambda <= 0.95 && fit.r_squared >= 0.9 && fit.dominates(&prof.sensitivities);
    outcome(ok, format!("lambda {:.4}, r2 {:.4}, C {:.4}", fit.lambda, fit.r_squared, fit.c))
}

fn tracking_instance(seed: u64, horizon: usize) -> Result<Instance> {
    let family = TrackingSystem::random(2, 1, 2, 0.5, 2.0, seed)?;
    let truth = family.sample_truth(horizon, seed);
    Instance::new(format!("tracking-{seed}"), System::quadratic(family), truth, DVector::zeros(2), seed)
}

fn kkt_inverse_decay() -> Result<Outcome> {
    let horizon = 40;
    let mut violations = 0;
    let mut worst_ratio = 0.0_f64;
    let mut tested = 0;
    let mut proof_violations = 0;
    let mut assumptions_ok = true;
    for seed in 0..20u64 {
        let inst = tracking_instance(seed, horizon)?;
        let ctrl = min_singular_controllability(&inst.system, 2, &inst.truth)?;
        if !ctrl.controllable {
            continue;
        }
        tested += 1;
        let family = inst.system.family().expect("quadratic").clone();
        let sigma = uniform_sigma(&inst, horizon)?;
        let declared = family.constants();
        assumptions_ok &= validate_assumptions(family.as_ref(), 1, 200, seed)?.pass();
        let decay = closed_form_decay(&DecayInputs::from_declared(declared, sigma))?;
        // same decay constants with the certified saddle lower bound as σ̲_H
        let saddle = block_matrix_spectrum_bounds(declared.mu, declared.ell, sigma, declared.a + declared.b + 1.0)?;
        let decay_certified = decay_from_spectrum(saddle.certified_lower, decay.sigma_upper, declared.ell, declared.a, declared.b, &declared.lipschitz)?;
        let spec = FtocpSpec::new(0, horizon, inst.initial_state.clone(), inst.truth.window(0, horizon), inst.true_terminal())?;
        let profile = block_inverse_profile(&assemble(family.as_ref(), &spec)?)?;
        for (i, row) in profile.norms.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let bound = decay.bound(i.abs_diff(j));
                worst_ratio = worst_ratio.max(v / bound);
                if *v > bound * (1.0 + REL) {
                    violations += 1;
                }
                if *v > decay_certified.bound(i.abs_diff(j)) * (1.0 + REL) {
                    proof_violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0 && tested == 20 && assumptions_ok,
        format!(
            "{tested} controllable instances (assumptions hold: {assumptions_ok}), {violations} violating blocks, \
             worst norm/bound {worst_ratio:.3e}; with the certified lower bound: {proof_violations} violating"
        ),
    )
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn block_spectrum_bounds() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n0, n1) = (6, 3);
    let mut failures = 0;
    let mut stated_failures = 0;
    for _ in 0..100 {
        let g = gaussian(&mut rng, n0, n0);
        let m = &g * g.transpose() + DMatrix::identity(n0, n0) * 0.1;
        let n = gaussian(&mut rng, n1, n0);
        let mut h = DMatrix::zeros(n0 + n1, n0 + n1);
        h.view_mut((0, 0), (n0, n0)).copy_from(&m);
        h.view_mut((0, n0), (n0, n1)).copy_from(&n.transpose());
        h.view_mut((n0, 0), (n1, n0)).copy_from(&n);
        let (m_lo, m_hi) = sym_eig_range(&m);
        let (n_lo, n_hi) = singular_range(&n);
        let bounds = block_matrix_spectrum_bounds(m_lo, m_hi, n_lo, n_hi)?;
        let (h_lo, h_hi) = singular_range(&h);
        if h_lo < bounds.certified_lower * (1.0 - REL) || h_hi > bounds.upper * (1.0 + REL) {
            failures += 1;
        }
        if h_lo < bounds.nominal_lower * (1.0 - REL) {
            stated_failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{failures}/100 outside certified bounds; nominal lower bound violated {stated_failures}/100"),
    )
}

/// Disturbance preset, k = 8, measured tables, constant base noise.
struct NoisyRuns {
    instance: Instance,
    constants: PipelineConstants,
    scales: Vec<f64>,
}

const NOISE_K: usize = 8;
const NOISE_SEED: u64 = 11;

fn noisy_setup() -> Result<NoisyRuns> {
    let instance = preset("disturbance", Some(60), 1)?;
    let constants = PipelineConstants::measured(&instance, NOISE_K, TerminalRule::ZeroState, 4, 5)?;
    Ok(NoisyRuns {
        instance,
        constants,
        scales: vec![0.05, 0.1, 0.2, 0.4],
    })
}

fn base_schedule() -> NoiseSchedule {
    NoiseSchedule::Constant { rho: 1.0 }
}

fn per_step_error(setup: &NoisyRuns) -> Result<Outcome> {
    let horizon = setup.instance.horizon();
    let c = &setup.constants;
    let mut admitted = 0;
    let mut violations = 0;
    let mut worst = 0.0_f64;
    for &s in &setup.scales {
        let schedule = base_schedule().scaled(s);
        if !c.admission(horizon, &schedule)?.pass {
            continue;
        }
        admitted += 1;
        let stream = PredictionStream::new(setup.instance.truth.clone(), schedule.clone(), NOISE_SEED)?;
        let run = run_mpc(&setup.instance, &stream, NOISE_K, TerminalRule::ZeroState)?;
        for (t, e) in run.errors.iter().enumerate() {
            let rhs = per_step_error_bound_rhs(t, NOISE_K, horizon, &schedule, &c.tables, c.radius, c.c3, c.d_xstar)?;
            worst = worst.max(e / rhs.max(f64::MIN_POSITIVE));
            if *e > rhs * (1.0 + REL) + 1e-12 {
                violations += 1;
            }
        }
    }
    outcome(
        admitted > 0 && violations == 0,
        format!("{admitted} admitted runs, {violations} violating steps, worst e/rhs {worst:.3e}"),
    )
}

fn regret_inequality(setup: &NoisyRuns) -> Result<Outcome> {
    let horizon = setup.instance.horizon();
    let c = &setup.constants;
    let opt = solve_opt(&setup.instance)?;
    let mut admitted = 0;
    let mut failures = Vec::new();
    let mut ball_ok = true;
    for &s in &setup.scales {
        let schedule = base_schedule().scaled(s);
        if !c.admission(horizon, &schedule)?.pass {
            continue;
        }
        admitted += 1;
        let stream = PredictionStream::new(setup.instance.truth.clone(), schedule, NOISE_SEED)?;
        let run = run_mpc(&setup.instance, &stream, NOISE_K, TerminalRule::ZeroState)?;
        let report = regret_inequalities(&run, &opt, c.smoothness, c.action_lipschitz, &c.tables)?;
        if !report.all_ok() {
            failures.push(s);
        }
        ball_ok &= run.distances.iter().all(|d| *d <= c.radius / c.c3 * (1.0 + REL));
    }
    outcome(
        admitted > 0 && failures.is_empty() && ball_ok,
        format!("{admitted} admitted runs, failing scales {failures:?}, ball invariance {ball_ok}"),
    )
}

fn full_horizon_exactness() -> Result<Outcome> {
    let mut worst_regret = 0.0_f64;
    let mut worst_error = 0.0_f64;
    for name in PRESET_NAMES {
        let inst = preset(name, None, 1)?;
        let horizon = inst.horizon();
        let stream = PredictionStream::exact(inst.truth.clone());
        let run = run_mpc(&inst, &stream, horizon, TerminalRule::ZeroState)?;
        let opt = solve_opt(&inst)?;
        worst_regret = worst_regret.max((run.total_cost - opt.total_cost).abs());
        worst_error = worst_error.max(run.errors.iter().copied().fold(0.0, f64::max));
    }
    outcome(
        worst_regret <= 1e-7 && worst_error <= 1e-8,
        format!("worst |regret| {worst_regret:.3e}, worst e_t {worst_error:.3e}"),
    )
}

fn horizon_decay() -> Result<Outcome> {
    let inst = preset("disturbance", Some(60), 1)?;
    let ks: Vec<usize> = (2..=12).collect();
    let sweep = sweep_horizon(&inst, &ks, TerminalRule::ZeroState)?;
    let monotone = sweep.non_increasing(1e-9);
    let (slope, r2) = sweep.fit.as_ref().map_or((f64::NAN, 0.0), |f| (f.slope, f.r_squared));
    outcome(
        monotone && slope < 0.0 && r2 >= 0.9,
        format!("non-increasing {monotone}, slope {slope:.4}, r2 {r2:.4}"),
    )
}

fn noise_scaling(setup: &NoisyRuns) -> Result<Outcome> {
    let scales: Vec<f64> = (1..=8).map(|i| 0.05 * i as f64).collect();
    let sweep = sweep_noise(
        &setup.instance,
        &base_schedule(),
        &scales,
        NOISE_K,
        TerminalRule::ZeroState,
        NOISE_SEED,
        Some(&setup.constants),
    )?;
    let admitted = sweep.admitted.iter().filter(|a| **a).count();
    match &sweep.fit {
        Some(f) => outcome(
            (0.8..=2.2).contains(&f.slope),
            format!("{admitted} admitted points, log-log slope {:.4}, r2 {:.4}", f.slope, f.r_squared),
        ),
        None => outcome(false, format!("{admitted} admitted points, no fit")),
    }
}

fn controllability_examples() -> Result<Outcome> {
    let params = PendulumParams::default();
    let family = mpclab::examples::pendulum_system(params.clone())?;
    let system = System::quadratic(family);
    let mass_xi = 0.0;
    let truth = ParamSeq::constant(DVector::from_element(1, mass_xi), 4);
    let m = controllability_matrix(&system, 0, 4, &truth)?;
    let det = m.determinant().abs();
    let closed = params.controllability_determinant(params.cart_mass(mass_xi));
    let rel = (det - closed).abs() / closed;

    let grid = GridParams::path(3, 1.0, 2.0, 0.1);
    let bound = grid.determinant_lower_bound();
    let mut grid_ok = true;
    for i in 0..50 {
        let now = grid.inertia(i as f64 / 49.0);
        for j in 0..50 {
            let next = grid.inertia(j as f64 / 49.0);
            grid_ok &= grid.two_step_determinant(now, next) >= bound;
        }
    }
    outcome(
        rel <= 1e-8 && grid_ok,
        format!("pendulum relative error {rel:.3e}, grid bound holds on 50x50 sweep {grid_ok}"),
    )
}

fn main() {
    // built by the first check that needs it, so its cost counts toward that check's budget
    let cell = OnceCell::new();
    let noisy = &cell;
    type Check<'a> = (usize, &'a str, Duration, Box<dyn Fn() -> Result<Outcome> + 'a>);
    let setup_err = |e: &mpclab::Error| Outcome {
        pass: false,
        detail: format!("setup failed: {e}"),
    };
    let with_setup = |f: fn(&NoisyRuns) -> Result<Outcome>| -> Box<dyn Fn() -> Result<Outcome> + '_> {
        Box::new(move || match noisy.get_or_init(noisy_setup) {
            Ok(s) => f(s),
            Err(e) => Ok(setup_err(e)),
        })
    };
    let checks: Vec<Check> = vec![
        (1, "inventory non-decay", Duration::from_secs(5), Box::new(inventory_non_decay)),
        (2, "inventory decay", Duration::from_secs(10), Box::new(inventory_decay)),
        (3, "kkt inverse decay", Duration::from_secs(60), Box::new(kkt_inverse_decay)),
        (4, "block spectrum bounds", Duration::from_secs(10), Box::new(block_spectrum_bounds)),
        (5, "per-step error bound", Duration::from_secs(60), with_setup(per_step_error)),
        (6, "regret inequality", Duration::from_secs(30), with_setup(regret_inequality)),
        (7, "full-horizon exactness", Duration::from_secs(10), Box::new(full_horizon_exactness)),
        (8, "geometric horizon decay", Duration::from_secs(120), Box::new(horizon_decay)),
        (9, "noise scaling", Duration::from_secs(120), with_setup(noise_scaling)),
        (10, "controllability examples", Duration::from_secs(5), Box::new(controllability_examples)),
    ];
    let mut passed = 0;
    let total = checks.len();
    for (id, name, budget, check) in checks {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        passed += usize::from(pass);
        println!(
            "{} [{id:>2}] {name}: {detail} ({:.2}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{passed}/{total} criteria passed");
}
