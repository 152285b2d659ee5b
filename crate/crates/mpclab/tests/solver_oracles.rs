//! Solvers against dense, independently written oracles.

use mpclab::examples::preset;
use mpclab::ftocp::{ClairvoyantSolver, FtocpSpec};
use mpclab::mpc::solve_opt;
use mpclab::system::{ActionBounds, Instance, InventorySystem, LqFamily, TerminalCost};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Condensed problem in the stacked actions: f(u) = uᵀHu + 2gᵀu + const, x_end = J u + x_free.
struct Condensed {
    hessian: DMatrix<f64>,
    gradient: DVector<f64>,
    terminal_map: DMatrix<f64>,
    terminal_free: DVector<f64>,
}

fn condense(family: &dyn LqFamily, spec: &FtocpSpec) -> Condensed {
    let (n, m, len) = (family.state_dim(), family.action_dim(), spec.len());
    let dim = len * m;
    let mut hessian = DMatrix::zeros(dim, dim);
    let mut gradient = DVector::zeros(dim);
    // x_t = maps[t] u + free[t]
    let mut map = DMatrix::zeros(n, dim);
    let mut free = spec.initial_state.clone();
    for i in 0..len {
        let s = family.stage(spec.start + i, &spec.params[i]);
        let offset = &free - &s.x_ref;
        hessian += map.transpose() * &s.q * &map;
        gradient += map.transpose() * &s.q * &offset;
        let mut block = hessian.view_mut((i * m, i * m), (m, m));
        block += &s.r;
        let mut next_map = &s.a * &map;
        let mut column = next_map.view_mut((0, i * m), (n, m));
        column += &s.b;
        free = &s.a * &free + &s.w;
        map = next_map;
    }
    if let TerminalCost::Quadratic { weight, target } = &spec.terminal {
        let offset = &free - target;
        hessian += map.transpose() * weight * &map;
        gradient += map.transpose() * weight * &offset;
    }
    Condensed {
        hessian,
        gradient,
        terminal_map: map,
        terminal_free: free,
    }
}

/// Optimal stacked actions by direct elimination.
fn oracle_actions(family: &dyn LqFamily, spec: &FtocpSpec) -> DVector<f64> {
    let c = condense(family, spec);
    match &spec.terminal {
        TerminalCost::Indicator { target } => {
            let (dim, n) = (c.hessian.nrows(), target.len());
            let mut kkt = DMatrix::zeros(dim + n, dim + n);
            kkt.view_mut((0, 0), (dim, dim)).copy_from(&c.hessian);
            kkt.view_mut((dim, 0), (n, dim)).copy_from(&c.terminal_map);
            kkt.view_mut((0, dim), (dim, n)).copy_from(&c.terminal_map.transpose());
            let mut rhs = DVector::zeros(dim + n);
            rhs.rows_mut(0, dim).copy_from(&(-&c.gradient));
            rhs.rows_mut(dim, n).copy_from(&(target - &c.terminal_free));
            kkt.lu().solve(&rhs).expect("nonsingular").rows(0, dim).into_owned()
        }
        _ => c.hessian.cholesky().expect("positive definite").solve(&(-&c.gradient)),
    }
}

fn stacked(actions: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(actions.iter().map(|a| a.len()).sum(), actions.iter().flat_map(|a| a.iter().copied()))
}

fn path_cost(inst: &Instance, spec: &FtocpSpec, actions: &[DVector<f64>]) -> f64 {
    let mut x = spec.initial_state.clone();
    let mut total = 0.0;
    for (i, u) in actions.iter().enumerate() {
        let t = spec.start + i;
        total += inst.system.stage_cost(t, &x, u, &spec.params[i]);
        x = inst.system.step(t, &x, u, &spec.params[i]);
    }
    match &spec.terminal {
        TerminalCost::Indicator { .. } => total,
        terminal => total + terminal.evaluate(&x),
    }
}

fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

fn tracking(seed: u64) -> Instance {
    preset("tracking-rand", Some(10), seed).unwrap()
}

#[test]
fn quadratic_solver_matches_dense_oracle() {
    for seed in 0..8 {
        let inst = tracking(seed);
        let family = inst.system.family().unwrap();
        let horizon = inst.horizon();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for start in [0, 3] {
            let z = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let terminals = [
                inst.true_terminal(),
                TerminalCost::Indicator {
                    target: DVector::from_fn(2, |_, _| rng.gen_range(-0.5..0.5)),
                },
                TerminalCost::Zero,
            ];
            for terminal in terminals {
                let spec = FtocpSpec::new(start, horizon, z.clone(), inst.truth.window(start, horizon), terminal).unwrap();
                let sol = inst.system.solve(&spec).unwrap();
                let expected = oracle_actions(family.as_ref(), &spec);
                let got = stacked(&sol.actions);
                assert!(rel_diff(&got, &expected) < 1e-8, "seed {seed} start {start}: {}", rel_diff(&got, &expected));
                let value = path_cost(&inst, &spec, &sol.actions);
                assert!((sol.value - value).abs() < 1e-8 * (1.0 + value.abs()));
                assert!(sol.kkt_residual < 1e-8);
            }
        }
    }
}

#[test]
fn offline_optimum_matches_dense_oracle() {
    for seed in 0..4 {
        let inst = tracking(seed);
        let opt = solve_opt(&inst).unwrap();
        let spec = ClairvoyantSolver::for_instance(&inst).spec(0, &inst.initial_state).unwrap();
        let expected = oracle_actions(inst.system.family().unwrap().as_ref(), &spec);
        assert!(rel_diff(&stacked(&opt.actions), &expected) < 1e-8);
        assert!(opt.dynamics_residual(&inst) < 1e-10);
    }
}

#[test]
fn tails_of_optimal_plans_are_optimal() {
    let inst = tracking(3);
    let solver = ClairvoyantSolver::for_instance(&inst);
    let full = solver.solve(0, &inst.initial_state).unwrap();
    for t in [2, 5, 8] {
        let tail = solver.solve(t, full.state_at(t)).unwrap();
        for s in t..inst.horizon() {
            assert!((tail.action_at(s) - full.action_at(s)).amax() < 1e-8);
        }
    }
}

#[test]
fn tighter_terminal_costs_raise_the_value() {
    let inst = tracking(5);
    let horizon = inst.horizon();
    let target = match inst.true_terminal() {
        TerminalCost::Quadratic { target, .. } => target,
        _ => unreachable!(),
    };
    let value = |terminal| {
        let spec = FtocpSpec::new(0, horizon, inst.initial_state.clone(), inst.truth.window(0, horizon), terminal).unwrap();
        inst.system.solve(&spec).unwrap().value
    };
    let relaxed = value(TerminalCost::Zero);
    let soft = value(inst.true_terminal());
    let hard = value(TerminalCost::Indicator { target });
    assert!(relaxed <= soft + 1e-10 && soft <= hard + 1e-10, "{relaxed} {soft} {hard}");
}

/// Inventory window optimum by enumerating every candidate active set.
///
/// The optimum solves the equality-constrained problem of its own active set, so the best
/// feasible candidate is the optimum.
fn inventory_oracle(sys: &InventorySystem, z: f64, targets: &[f64]) -> (Vec<f64>, f64) {
    let len = targets.len() - 1;
    let r = sys.action_weight;
    let (lo, hi) = (sys.action_bounds.lower(), sys.action_bounds.upper());
    let objective = |y: &[f64]| -> f64 {
        let mut prev = z;
        let mut total = (z - targets[0]).powi(2);
        for h in 1..=len {
            total += r * (y[h - 1] - prev).powi(2) + (y[h - 1] - targets[h]).powi(2);
            prev = y[h - 1];
        }
        total
    };
    // gradient-zero system: G y = c for the objective above
    let mut g = DMatrix::zeros(len, len);
    let mut c = DVector::zeros(len);
    for h in 0..len {
        g[(h, h)] += 2.0;
        c[h] += 2.0 * targets[h + 1];
        g[(h, h)] += 2.0 * r;
        if h == 0 {
            c[h] += 2.0 * r * z;
        } else {
            g[(h - 1, h - 1)] += 2.0 * r;
            g[(h, h - 1)] -= 2.0 * r;
            g[(h - 1, h)] -= 2.0 * r;
        }
    }
    // rows a·y = b for each choice
    let feasible = |y: &[f64]| {
        let mut prev = z;
        y.iter().all(|v| {
            let u = v - prev;
            prev = *v;
            v.abs() <= 1.0 + 1e-9 && u >= lo - 1e-9 && u <= hi + 1e-9
        })
    };
    let mut best = (Vec::new(), f64::INFINITY);
    let state_choices = 3usize.pow(len as u32);
    let action_choices = if hi.is_finite() { 3usize.pow(len as u32) } else { 2usize.pow(len as u32) };
    for sc in 0..state_choices {
        for ac in 0..action_choices {
            let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
            let (mut s, mut a) = (sc, ac);
            for h in 0..len {
                match s % 3 {
                    1 => rows.push((DVector::from_fn(len, |i, _| if i == h { 1.0 } else { 0.0 }), -1.0)),
                    2 => rows.push((DVector::from_fn(len, |i, _| if i == h { 1.0 } else { 0.0 }), 1.0)),
                    _ => {}
                }
                s /= 3;
                let base = if hi.is_finite() { 3 } else { 2 };
                let bound = match a % base {
                    1 => Some(lo),
                    2 => Some(hi),
                    _ => None,
                };
                a /= base;
                if let Some(b) = bound {
                    let mut row = DVector::zeros(len);
                    row[h] = 1.0;
                    let rhs = if h == 0 { b + z } else {
                        row[h - 1] = -1.0;
                        b
                    };
                    rows.push((row, rhs));
                }
            }
            let k = rows.len();
            if k > len {
                continue;
            }
            let mut kkt = DMatrix::zeros(len + k, len + k);
            kkt.view_mut((0, 0), (len, len)).copy_from(&g);
            let mut rhs = DVector::zeros(len + k);
            rhs.rows_mut(0, len).copy_from(&c);
            for (i, (row, b)) in rows.iter().enumerate() {
                kkt.view_mut((len + i, 0), (1, len)).copy_from(&row.transpose());
                kkt.view_mut((0, len + i), (len, 1)).copy_from(row);
                rhs[len + i] = *b;
            }
            let Some(sol) = kkt.full_piv_lu().solve(&rhs) else { continue };
            let y: Vec<f64> = sol.rows(0, len).iter().copied().collect();
            if y.iter().all(|v| v.is_finite()) && feasible(&y) {
                let v = objective(&y);
                if v < best.1 {
                    best = (y, v);
                }
            }
        }
    }
    best
}

#[test]
fn one_sided_inventory_matches_enumeration() {
    let sys = InventorySystem::one_sided(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..4 {
        let targets: Vec<f64> = (0..=6).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let z = rng.gen_range(-1.0..1.0);
        let params = targets.iter().map(|v| DVector::from_element(1, *v)).collect();
        let spec = FtocpSpec::new(0, 6, DVector::from_element(1, z), params, sys.terminal_cost(targets[6])).unwrap();
        let sol = mpclab::ftocp::solve_inventory(&spec, &sys).unwrap();
        let (states, value) = inventory_oracle(&sys, z, &targets);
        for (h, y) in states.iter().enumerate() {
            assert!((sol.states[h + 1][0] - y).abs() < 1e-5, "state {h}: {} vs {y}", sol.states[h + 1][0]);
        }
        assert!((sol.value - value).abs() < 1e-5);
    }
}

#[test]
fn two_sided_inventory_matches_enumeration() {
    let sys = InventorySystem::new(ActionBounds::TwoSided { lower: -0.8, upper: 0.8 }, 0.3, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..2 {
        let targets: Vec<f64> = (0..=5).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let params = targets.iter().map(|v| DVector::from_element(1, *v)).collect();
        let spec = FtocpSpec::new(0, 5, DVector::from_element(1, 0.2), params, sys.terminal_cost(targets[5])).unwrap();
        let sol = mpclab::ftocp::solve_inventory(&spec, &sys).unwrap();
        let (states, value) = inventory_oracle(&sys, 0.2, &targets);
        for (h, y) in states.iter().enumerate() {
            assert!((sol.states[h + 1][0] - y).abs() < 1e-5);
        }
        assert!((sol.value - value).abs() < 1e-5);
    }
}

#[test]
fn inactive_inventory_is_unconstrained_quadratic() {
    let sys = InventorySystem::one_sided(0.5);
    let targets = [0.0, 0.1, -0.05, 0.12, 0.0, -0.1, 0.05];
    let params = targets.iter().map(|v| DVector::from_element(1, *v)).collect();
    let spec = FtocpSpec::new(0, 6, DVector::from_element(1, 0.05), params, sys.terminal_cost(targets[6])).unwrap();
    let sol = mpclab::ftocp::solve_inventory(&spec, &sys).unwrap();
    assert!(sol.active_set.is_empty());
    // stationarity of (y_h − ξ_h)² + r(y_h − y_{h−1})² at interior states
    let y: Vec<f64> = sol.states.iter().map(|s| s[0]).collect();
    for h in 1..6 {
        let grad = 2.0 * (y[h] - targets[h]) + 2.0 * 0.5 * (y[h] - y[h - 1]) - 2.0 * 0.5 * (y[h + 1] - y[h]);
        assert!(grad.abs() < 1e-9, "h = {h}: {grad}");
    }
}
