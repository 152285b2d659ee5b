//! `mpclab`: solves, closed-loop runs, sweeps and certificates as CSV/JSON artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use mpclab::examples::{inventory_counterexample_suite, max_eps, preset};
use mpclab::export::{config_hash, fmt_float, solution_table, trajectory_table, write_csv, write_json, write_key_values, Table};
use mpclab::ftocp::{ClairvoyantSolver, FtocpSpec};
use mpclab::instance::{load_instance, parse_instance, build_instance};
use mpclab::kkt::{
    assemble, block_inverse_profile, decay_from_spectrum, closed_form_decay, closed_form_general_decay, tracking_thresholds,
    DecayConstants, DecayInputs, SpectrumBounds,
};
use mpclab::mpc::{run_mpc, solve_opt, TerminalRule};
use mpclab::param::{NoiseSchedule, PredictionStream};
use mpclab::regret::{aggregate_e, regret_inequalities, sweep_horizon, sweep_noise, uniform_sigma, BoundMode, PipelineConstants};
use mpclab::system::Instance;
use mpclab::Error;

#[derive(Parser, Serialize)]
#[command(name = "mpclab", version, about = "MPC with noisy predictions: solves, runs, sweeps and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
struct Source {
    /// Named preset: inventory-two-sided, inventory-one-sided, tracking-rand, pendulum, grid, disturbance.
    #[arg(long, conflicts_with = "instance")]
    preset: Option<String>,
    /// Instance description file (TOML).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Horizon override.
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct Bounds {
    /// `measured` (finite-difference tables) or `theory` (closed-form tables).
    #[arg(long, default_value = "measured")]
    mode: String,
    /// Box-sampled parameter sequences used by measured tables.
    #[arg(long, default_value_t = 4)]
    samples: usize,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Offline optimum over the whole horizon.
    Solve {
        #[command(flatten)]
        source: Source,
    },
    /// One closed-loop run with its regret report.
    Mpc {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        k: usize,
        /// Constant prediction-error magnitude.
        #[arg(long, default_value_t = 0.0)]
        noise_scale: f64,
        /// zero-state, predicted-tracking, reference-trajectory or true-terminal.
        #[arg(long, default_value = "zero-state")]
        rule: String,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Zero-noise regret for k = k_min..=k_max.
    SweepHorizon {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 12)]
        k_max: usize,
        /// zero-state, predicted-tracking, reference-trajectory or true-terminal.
        #[arg(long, default_value = "zero-state")]
        rule: String,
    },
    /// Regret against the scale of a constant noise schedule.
    SweepNoise {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        k: usize,
        /// Comma-separated scales.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4")]
        noise_scale: Vec<f64>,
        /// zero-state, predicted-tracking, reference-trajectory or true-terminal.
        #[arg(long, default_value = "zero-state")]
        rule: String,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Block norms of the inverse KKT matrix against the closed-form decay bound.
    CertifyDecay {
        #[command(flatten)]
        source: Source,
        /// `theory` takes σ̲_H from the closed form, `measured` from the assembled blocks.
        #[arg(long, default_value = "theory")]
        mode: String,
    },
    /// Terminal-perturbation table for the two-sided inventory chain.
    InventorySuite {
        /// Comma-separated window lengths.
        #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8")]
        p: Vec<usize>,
        /// Comma-separated perturbations; fractions such as 2/35 are accepted. Defaults to the largest covered ε.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-form and measured constants as key-value text.
    Constants {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[command(flatten)]
        bounds: Bounds,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Solver(String),
    Certification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `a/b` or a decimal literal.
fn parse_fraction(text: &str) -> CliResult<f64> {
    let bad = || Failure::Config(format!("cannot parse `{text}` as a number or fraction"));
    match text.split_once('/') {
        Some((num, den)) => {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            let den: i64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            // both integers are exact in f64 here, so the quotient is correctly rounded
            if num.unsigned_abs() > 1 << 53 || den.unsigned_abs() > 1 << 53 {
                return Err(bad());
            }
            Ok(num as f64 / den as f64)
        }
        None => text.trim().parse().map_err(|_| bad()),
    }
}

fn load(source: &Source) -> CliResult<Instance> {
    match (&source.preset, &source.instance) {
        (Some(name), None) => Ok(preset(name, source.horizon, source.seed)?),
        (None, Some(path)) => {
            if source.horizon.is_none() {
                return Ok(load_instance(path)?);
            }
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let mut desc = parse_instance(&text)?;
            desc.horizon = source.horizon.unwrap_or(desc.horizon);
            Ok(build_instance(&desc)?)
        }
        _ => Err(Failure::Config("exactly one of --preset or --instance is required".into())),
    }
}

fn prepare(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))
}

fn parse_rule(text: &str) -> CliResult<TerminalRule> {
    Ok(text.parse::<TerminalRule>()?)
}

fn parse_mode(text: &str) -> CliResult<BoundMode> {
    Ok(text.parse::<BoundMode>()?)
}

fn solve(source: &Source, hash: &str) -> CliResult<()> {
    let inst = load(source)?;
    let sol = ClairvoyantSolver::for_instance(&inst).solve(0, &inst.initial_state)?;
    prepare(&source.out)?;
    write_csv(&source.out.join("solution.csv"), hash, &solution_table(&sol))?;
    let summary = json!({
        "instance": inst.name,
        "horizon": inst.horizon(),
        "value": sol.value,
        "kkt_residual": sol.kkt_residual,
        "d_xstar": sol.states.iter().map(|x| x.norm()).fold(0.0, f64::max),
        "active_set": sol.active_set,
    });
    write_json(&source.out.join("solve.json"), hash, &summary)?;
    println!("value {}", fmt_float(sol.value));
    Ok(())
}

fn mpc(source: &Source, k: usize, noise: f64, rule: &str, bounds: &Bounds, hash: &str) -> CliResult<()> {
    let inst = load(source)?;
    let rule = parse_rule(rule)?;
    let mode = parse_mode(&bounds.mode)?;
    let schedule = if noise == 0.0 {
        NoiseSchedule::Zero
    } else {
        NoiseSchedule::Constant { rho: noise }
    };
    schedule.validate()?;
    let stream = PredictionStream::new(inst.truth.clone(), schedule.clone(), source.seed)?;
    let run = run_mpc(&inst, &stream, k, rule)?;
    let opt = solve_opt(&inst)?;
    prepare(&source.out)?;
    write_csv(&source.out.join("trajectory.csv"), hash, &trajectory_table(&run))?;
    let mut report = json!({
        "instance": inst.name,
        "k": k,
        "rule": rule,
        "cost_alg": run.total_cost,
        "cost_opt": opt.total_cost,
        "regret": run.total_cost - opt.total_cost,
        "errors": run.errors,
        "distances": run.distances,
    });
    if inst.system.family().is_some() {
        let pipeline = PipelineConstants::build(&inst, k, rule, mode, bounds.samples, source.seed)?;
        let admission = pipeline.admission(inst.horizon(), &schedule)?;
        let ineq = regret_inequalities(&run, &opt, pipeline.smoothness, pipeline.action_lipschitz, &pipeline.tables)?;
        let power: Vec<f64> = (0..k).map(|tau| stream.power(tau)).collect();
        let e = aggregate_e(k, &pipeline.tables, &power, inst.horizon())?;
        report["mode"] = json!(mode);
        report["admission"] = json!(admission);
        report["aggregate_e"] = json!(e);
        report["radius"] = json!(pipeline.radius);
        report["c3"] = json!(pipeline.c3);
        report["inequalities"] = json!(ineq);
    }
    write_json(&source.out.join("regret.json"), hash, &report)?;
    println!("regret {}", fmt_float(run.total_cost - opt.total_cost));
    Ok(())
}

fn sweep_table(values: &[f64], regrets: &[f64], bounds: &[Option<f64>], admitted: &[bool]) -> Table {
    let mut table = Table::new(["value", "regret", "bound", "admitted"]);
    for i in 0..values.len() {
        table.push(vec![
            fmt_float(values[i]),
            fmt_float(regrets[i]),
            bounds[i].map(fmt_float).unwrap_or_default(),
            admitted[i].to_string(),
        ]);
    }
    table
}

fn sweep_k(source: &Source, k_min: usize, k_max: usize, rule: &str, hash: &str) -> CliResult<()> {
    let inst = load(source)?;
    if k_min == 0 || k_min > k_max {
        return Err(Failure::Config(format!("empty k range {k_min}..={k_max}")));
    }
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let sweep = sweep_horizon(&inst, &ks, parse_rule(rule)?)?;
    prepare(&source.out)?;
    write_csv(
        &source.out.join("sweep_horizon.csv"),
        hash,
        &sweep_table(&sweep.values, &sweep.regrets, &sweep.bounds, &sweep.admitted),
    )?;
    write_json(&source.out.join("sweep_horizon.json"), hash, &sweep)?;
    if let Some(f) = &sweep.fit {
        println!("slope {:.6} r2 {:.6}", f.slope, f.r_squared);
    }
    Ok(())
}

fn sweep_s(source: &Source, k: usize, scales: &[f64], rule: &str, bounds: &Bounds, hash: &str) -> CliResult<()> {
    let inst = load(source)?;
    let rule = parse_rule(rule)?;
    let pipeline = match inst.system.family() {
        Some(_) => Some(PipelineConstants::build(&inst, k, rule, parse_mode(&bounds.mode)?, bounds.samples, source.seed)?),
        None => None,
    };
    let base = NoiseSchedule::Constant { rho: 1.0 };
    let sweep = sweep_noise(&inst, &base, scales, k, rule, source.seed, pipeline.as_ref())?;
    prepare(&source.out)?;
    write_csv(
        &source.out.join("sweep_noise.csv"),
        hash,
        &sweep_table(&sweep.values, &sweep.regrets, &sweep.bounds, &sweep.admitted),
    )?;
    write_json(&source.out.join("sweep_noise.json"), hash, &sweep)?;
    if let Some(f) = &sweep.fit {
        println!("slope {:.6} r2 {:.6}", f.slope, f.r_squared);
    }
    Ok(())
}

fn decay_constants(inst: &Instance, mode: BoundMode, assembly: &mpclab::kkt::KktAssembly) -> CliResult<DecayConstants> {
    let family = inst
        .system
        .family()
        .ok_or_else(|| Failure::Config("decay certification needs a quadratic system".into()))?;
    let c = family.constants();
    Ok(match mode {
        BoundMode::Theory => closed_form_decay(&DecayInputs::from_declared(c, uniform_sigma(inst, inst.horizon())?))?,
        BoundMode::Measured => {
            let spec = SpectrumBounds::measured(assembly)?;
            decay_from_spectrum(spec.sigma_lower, spec.sigma_upper, c.ell, c.a, c.b, &c.lipschitz)?
        }
    })
}

fn certify(source: &Source, mode: &str, hash: &str) -> CliResult<()> {
    let inst = load(source)?;
    let mode = parse_mode(mode)?;
    let family = inst
        .system
        .family()
        .ok_or_else(|| Failure::Config("decay certification needs a quadratic system".into()))?;
    let horizon = inst.horizon();
    let spec = FtocpSpec::new(0, horizon, inst.initial_state.clone(), inst.truth.window(0, horizon), inst.true_terminal())?;
    let assembly = assemble(family.as_ref(), &spec)?;
    let profile = block_inverse_profile(&assembly)?;
    let decay = decay_constants(&inst, mode, &assembly)?;
    let mut table = Table::new(["offset", "max_block_norm", "theory_bound"]);
    let mut dominated = true;
    for (offset, norm) in profile.per_offset.iter().enumerate() {
        let bound = decay.bound(offset);
        dominated &= *norm <= bound * (1.0 + 1e-9);
        table.push(vec![offset.to_string(), fmt_float(*norm), fmt_float(bound)]);
    }
    prepare(&source.out)?;
    write_csv(&source.out.join("profile.csv"), hash, &table)?;
    let summary = json!({
        "mode": mode,
        "fit": profile.fit,
        "symmetry_error": profile.symmetry_error,
        "constants": decay,
        "dominated": dominated,
    });
    write_json(&source.out.join("certify_decay.json"), hash, &summary)?;
    println!(
        "fitted lambda {:.6}, closed-form lambda {:.6}, dominated {dominated}",
        profile.fit.lambda, decay.lambda
    );
    if dominated {
        Ok(())
    } else {
        Err(Failure::Certification("closed-form bound does not dominate the measured block norms".into()))
    }
}

fn inventory(ps: &[usize], eps: &[String], out: &Path, hash: &str) -> CliResult<()> {
    let explicit: Vec<f64> = eps.iter().map(|e| parse_fraction(e)).collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    for &p in ps {
        let grid = if explicit.is_empty() { vec![max_eps(p)] } else { explicit.clone() };
        rows.extend(inventory_counterexample_suite(&[p], &grid)?);
    }
    let mut table = Table::new(["p", "eps", "h", "x_base", "x_perturbed", "difference_error", "closed_form_error"]);
    for r in &rows {
        table.push(vec![
            r.p.to_string(),
            fmt_float(r.eps),
            r.h.to_string(),
            fmt_float(r.x_base),
            fmt_float(r.x_perturbed),
            fmt_float(r.difference_error),
            fmt_float(r.closed_form_error),
        ]);
    }
    prepare(out)?;
    write_csv(&out.join("inventory_suite.csv"), hash, &table)?;
    let failing = rows.iter().filter(|r| !r.passes(1e-6)).count();
    println!("{} rows, {failing} outside 1e-6", rows.len());
    if failing == 0 {
        Ok(())
    } else {
        Err(Failure::Certification(format!("{failing} rows differ from the closed form")))
    }
}

fn constants(source: &Source, k: usize, bounds: &Bounds, hash: &str) -> CliResult<()> {
    let inst = load(source)?;
    let family = inst
        .system
        .family()
        .ok_or_else(|| Failure::Config("constants need a quadratic system".into()))?;
    let c = family.constants();
    let sigma = uniform_sigma(&inst, k)?;
    let decay = closed_form_decay(&DecayInputs::from_declared(c, sigma))?;
    let general = closed_form_general_decay(decay.sigma_lower, decay.sigma_upper, decay.sigma_upper)?;
    let opt = solve_opt(&inst)?;
    let thresholds = tracking_thresholds(&decay, c, opt.max_state_norm(), inst.system.action_lipschitz());
    let pipeline = PipelineConstants::build(&inst, k, TerminalRule::ZeroState, parse_mode(&bounds.mode)?, bounds.samples, source.seed)?;
    let mut pairs: Vec<(String, f64)> = vec![
        ("mu".into(), c.mu),
        ("ell".into(), c.ell),
        ("a".into(), c.a),
        ("b".into(), c.b),
        ("d_w".into(), c.d_w),
        ("d_xref".into(), c.d_xref),
        ("sigma".into(), sigma),
        ("sigma_h_lower".into(), decay.sigma_lower),
        ("sigma_h_upper".into(), decay.sigma_upper),
        ("lambda2".into(), decay.lambda),
        ("c2".into(), decay.c2),
        ("c2_prime".into(), decay.c2_prime),
        ("h3".into(), general.h3),
        ("lambda3".into(), general.lambda3),
        ("h2".into(), thresholds.h2),
        ("noise_budget".into(), thresholds.noise_budget),
        ("horizon_budget".into(), thresholds.horizon_budget),
        ("radius".into(), pipeline.radius),
        ("c3".into(), pipeline.c3),
        ("decay_h".into(), pipeline.decay_h),
        ("decay_lambda".into(), pipeline.decay_lambda),
        ("d_xstar".into(), pipeline.d_xstar),
    ];
    if let Some(kmin) = thresholds.min_horizon {
        pairs.push(("min_horizon".into(), kmin as f64));
    }
    prepare(&source.out)?;
    write_key_values(&source.out.join("constants.txt"), hash, &pairs)?;
    for (key, v) in &pairs {
        println!("{key} = {}", fmt_float(*v));
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    if let Ok(text) = std::env::var("MPCLAB_THREADS") {
        let n: usize = text
            .parse()
            .map_err(|_| Failure::Config(format!("MPCLAB_THREADS must be a positive integer, got `{text}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    let hash = config_hash(cli)?;
    match &cli.command {
        Command::Solve { source } => solve(source, &hash),
        Command::Mpc {
            source,
            k,
            noise_scale,
            rule,
            bounds,
        } => mpc(source, *k, *noise_scale, rule, bounds, &hash),
        Command::SweepHorizon {
            source,
            k_min,
            k_max,
            rule,
        } => sweep_k(source, *k_min, *k_max, rule, &hash),
        Command::SweepNoise {
            source,
            k,
            noise_scale,
            rule,
            bounds,
        } => sweep_s(source, *k, noise_scale, rule, bounds, &hash),
        Command::CertifyDecay { source, mode } => certify(source, mode, &hash),
        Command::InventorySuite { p, eps, out } => inventory(p, eps, out, &hash),
        Command::Constants { source, k, bounds } => constants(source, *k, bounds, &hash),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Certification(msg)) => {
            eprintln!("certification failure: {msg}");
            ExitCode::from(4)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_parse_exactly() {
        assert_eq!(parse_fraction("2/35").ok(), Some(2.0 / 35.0));
        assert_eq!(parse_fraction("0.25").ok(), Some(0.25));
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("x").is_err());
    }
}
