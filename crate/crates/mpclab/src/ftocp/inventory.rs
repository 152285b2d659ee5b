use nalgebra::{DMatrix, DVector};

use super::{degenerate_solution, ActiveConstraint, FtocpSolution, FtocpSpec};
use crate::error::{Error, Result};
use crate::system::{InventorySystem, TerminalCost};

const TIE_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-8;

/// Linear inequality Σ coeffs·x ≥ rhs over the free states.
#[derive(Debug, Clone)]
struct Constraint {
    label: ActiveConstraint,
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
}

impl Constraint {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.iter().map(|(i, c)| c * x[*i]).sum()
    }

    fn slack(&self, x: &DVector<f64>) -> f64 {
        self.eval(x) - self.rhs
    }
}

/// Chain data with states y_0..y_L, some of them fixed.
struct Chain<'a> {
    sys: &'a InventorySystem,
    spec: &'a FtocpSpec,
    len: usize,
    /// Index of y_h among the free variables.
    free: Vec<Option<usize>>,
    fixed: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(sys: &'a InventorySystem, spec: &'a FtocpSpec) -> Result<Self> {
        let len = spec.len();
        let z = spec.initial_state[0];
        let bound = sys.state_bound;
        if z.abs() > bound + 1e-12 {
            return Err(Error::Infeasible(format!("initial state {z} outside the state box")));
        }
        let terminal_fixed = match &spec.terminal {
            TerminalCost::Indicator { target } => {
                let v = target[0];
                if v.abs() > bound + 1e-12 {
                    return Err(Error::Infeasible(format!("terminal target {v} outside the state box")));
                }
                Some(v)
            }
            _ => None,
        };
        let mut free = vec![None; len + 1];
        let mut fixed = vec![f64::NAN; len + 1];
        fixed[0] = z;
        let mut next = 0;
        for h in 1..=len {
            if h == len {
                if let Some(v) = terminal_fixed {
                    fixed[h] = v;
                    continue;
                }
            }
            free[h] = Some(next);
            next += 1;
        }
        Ok(Self {
            sys,
            spec,
            len,
            free,
            fixed,
        })
    }

    fn n_free(&self) -> usize {
        self.free.iter().flatten().count()
    }

    fn target(&self, h: usize) -> f64 {
        self.spec.params[h][0]
    }

    fn state(&self, x: &DVector<f64>, h: usize) -> f64 {
        match self.free[h] {
            Some(i) => x[i],
            None => self.fixed[h],
        }
    }

    /// ½xᵀGx + cᵀx representation of the objective in the free states.
    fn objective(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.n_free();
        let r = self.sys.action_weight;
        let mut g = DMatrix::zeros(p, p);
        let mut c = DVector::zeros(p);
        for h in 1..self.len {
            if let Some(i) = self.free[h] {
                g[(i, i)] += 2.0;
                c[i] -= 2.0 * self.target(h);
            }
        }
        if r > 0.0 {
            for h in 0..self.len {
                match (self.free[h + 1], self.free[h]) {
                    (Some(a), Some(b)) => {
                        g[(a, a)] += 2.0 * r;
                        g[(b, b)] += 2.0 * r;
                        g[(a, b)] -= 2.0 * r;
                        g[(b, a)] -= 2.0 * r;
                    }
                    (Some(a), None) => {
                        g[(a, a)] += 2.0 * r;
                        c[a] -= 2.0 * r * self.fixed[h];
                    }
                    (None, Some(b)) => {
                        g[(b, b)] += 2.0 * r;
                        c[b] -= 2.0 * r * self.fixed[h + 1];
                    }
                    (None, None) => {}
                }
            }
        }
        if let (Some(i), TerminalCost::Quadratic { weight, target }) = (self.free[self.len], &self.spec.terminal) {
            g[(i, i)] += 2.0 * weight[(0, 0)];
            c[i] -= 2.0 * weight[(0, 0)] * target[0];
        }
        (g, c)
    }

    fn constraints(&self) -> Result<Vec<Constraint>> {
        let bound = self.sys.state_bound;
        let lo = self.sys.action_bounds.lower();
        let hi = self.sys.action_bounds.upper();
        let start = self.spec.start;
        let mut out = Vec::new();
        for h in 1..=self.len {
            if let Some(i) = self.free[h] {
                out.push(Constraint {
                    label: ActiveConstraint::StateLower(start + h),
                    coeffs: vec![(i, 1.0)],
                    rhs: -bound,
                });
                out.push(Constraint {
                    label: ActiveConstraint::StateUpper(start + h),
                    coeffs: vec![(i, -1.0)],
                    rhs: -bound,
                });
            }
        }
        for h in 0..self.len {
            // u_h = y_{h+1} − y_h
            let mut coeffs = Vec::new();
            let mut constant = 0.0;
            match self.free[h + 1] {
                Some(i) => coeffs.push((i, 1.0)),
                None => constant += self.fixed[h + 1],
            }
            match self.free[h] {
                Some(i) => coeffs.push((i, -1.0)),
                None => constant -= self.fixed[h],
            }
            if coeffs.is_empty() {
                if constant < lo - 1e-12 || constant > hi + 1e-12 {
                    return Err(Error::Infeasible(format!(
                        "fixed action {constant} at t = {} violates its bounds",
                        start + h
                    )));
                }
                continue;
            }
            out.push(Constraint {
                label: ActiveConstraint::ActionLower(start + h),
                coeffs: coeffs.clone(),
                rhs: lo - constant,
            });
            if hi.is_finite() {
                out.push(Constraint {
                    label: ActiveConstraint::ActionUpper(start + h),
                    coeffs: coeffs.iter().map(|(i, c)| (*i, -c)).collect(),
                    rhs: -hi + constant,
                });
            }
        }
        Ok(out)
    }

    /// Feasible point from forward/backward interval propagation, pulled toward the targets.
    fn feasible_start(&self) -> Result<DVector<f64>> {
        let bound = self.sys.state_bound;
        let lo = self.sys.action_bounds.lower();
        let hi = self.sys.action_bounds.upper();
        let len = self.len;
        let mut forward = vec![(0.0, 0.0); len + 1];
        forward[0] = (self.fixed[0], self.fixed[0]);
        for h in 1..=len {
            let (a, b) = forward[h - 1];
            forward[h] = ((a + lo).max(-bound), (b + hi).min(bound));
        }
        let mut backward = vec![(-bound, bound); len + 1];
        if self.free[len].is_none() {
            backward[len] = (self.fixed[len], self.fixed[len]);
        }
        for h in (0..len).rev() {
            let (a, b) = backward[h + 1];
            backward[h] = ((a - hi).max(-bound), (b - lo).min(bound));
        }
        let mut x = DVector::zeros(self.n_free());
        let mut prev = self.fixed[0];
        if prev < backward[0].0 - 1e-12 || prev > backward[0].1 + 1e-12 {
            return Err(Error::Infeasible(format!(
                "terminal state unreachable from {prev} within the window starting at t = {}",
                self.spec.start
            )));
        }
        for h in 1..=len {
            let low = forward[h].0.max(backward[h].0).max(prev + lo);
            let high = forward[h].1.min(backward[h].1).min(prev + hi);
            if low > high + 1e-12 {
                return Err(Error::Infeasible(format!(
                    "empty feasible interval at t = {}",
                    self.spec.start + h
                )));
            }
            let value = match self.free[h] {
                Some(i) => {
                    let v = self.target(h).clamp(low, high.max(low));
                    x[i] = v;
                    v
                }
                None => self.fixed[h],
            };
            prev = value;
        }
        Ok(x)
    }
}

/// Primal active-set solve of a (constrained) inventory window.
pub fn solve_inventory(spec: &FtocpSpec, sys: &InventorySystem) -> Result<FtocpSolution> {
    if spec.initial_state.len() != 1 {
        return Err(Error::dim("inventory state", 1, spec.initial_state.len()));
    }
    if let Some(xi) = spec.params.iter().find(|p| p.len() != 1) {
        return Err(Error::dim("inventory parameter", 1, xi.len()));
    }
    if spec.is_empty() {
        return degenerate_solution(spec);
    }
    let chain = Chain::new(sys, spec)?;
    let constraints = chain.constraints()?;
    let mut x = chain.feasible_start()?;
    let (g, c) = chain.objective();
    let p = x.len();
    if p > 0 && g.clone().cholesky().is_none() {
        return Err(Error::NotStronglyConvex);
    }

    let cap = 10 * (spec.len() * spec.len()).max(1);
    let mut working: Vec<usize> = Vec::new();
    let mut multipliers = vec![0.0; constraints.len()];
    let mut converged = p == 0;
    for _ in 0..cap {
        if converged {
            break;
        }
        let grad = &g * &x + &c;
        let (step, mu) = equality_step(&g, &grad, &constraints, &working);
        let step_norm = step.amax();
        if step_norm <= 1e-12 * (1.0 + x.amax()) {
            // λ = −μ are the multipliers of the working constraints
            let (pos, worst) = mu
                .iter()
                .enumerate()
                .map(|(k, m)| (k, -m))
                .fold((usize::MAX, 0.0), |acc, (k, l)| if l < acc.1 - 1e-14 { (k, l) } else { acc });
            if pos == usize::MAX || worst >= -1e-12 {
                multipliers.iter_mut().for_each(|v| *v = 0.0);
                for (k, &j) in working.iter().enumerate() {
                    multipliers[j] = -mu[k];
                }
                converged = true;
                break;
            }
            working.remove(pos);
        } else {
            let ratios: Vec<(usize, f64)> = constraints
                .iter()
                .enumerate()
                .filter(|(j, _)| !working.contains(j))
                .filter_map(|(j, con)| {
                    let ap: f64 = con.coeffs.iter().map(|(i, c)| c * step[*i]).sum();
                    (ap < -1e-14).then(|| (j, (con.slack(&x) / -ap).max(0.0)))
                })
                .collect();
            let alpha = ratios.iter().map(|r| r.1).fold(1.0, f64::min);
            // lowest index among near-ties keeps the iteration deterministic
            let blocking = ratios
                .iter()
                .find(|(_, ratio)| *ratio <= alpha + TIE_TOL)
                .map(|(j, _)| *j);
            x += &step * alpha;
            if let Some(j) = blocking {
                working.push(j);
            }
        }
    }
    if !converged {
        return Err(Error::IterationLimit(cap));
    }
    let sol = assemble_solution(&chain, &constraints, &multipliers, &x);
    if sol.kkt_residual > KKT_TOL {
        return Err(Error::IterationLimit(cap));
    }
    Ok(sol)
}

/// Solves min ½pᵀGp + gradᵀp s.t. a_jᵀp = 0 for j in the working set; returns (p, μ).
fn equality_step(
    g: &DMatrix<f64>,
    grad: &DVector<f64>,
    constraints: &[Constraint],
    working: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let p = g.nrows();
    let w = working.len();
    let mut kkt = DMatrix::zeros(p + w, p + w);
    kkt.view_mut((0, 0), (p, p)).copy_from(g);
    for (k, &j) in working.iter().enumerate() {
        for (i, c) in &constraints[j].coeffs {
            kkt[(p + k, *i)] = *c;
            kkt[(*i, p + k)] = *c;
        }
    }
    let mut rhs = DVector::zeros(p + w);
    rhs.rows_mut(0, p).copy_from(&(-grad));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .unwrap_or_else(|| DVector::zeros(p + w));
    (sol.rows(0, p).into_owned(), sol.rows(p, w).into_owned())
}

fn assemble_solution(
    chain: &Chain<'_>,
    constraints: &[Constraint],
    multipliers: &[f64],
    x: &DVector<f64>,
) -> FtocpSolution {
    let len = chain.len;
    let sys = chain.sys;
    let spec = chain.spec;
    let r = sys.action_weight;
    let ys: Vec<f64> = (0..=len).map(|h| chain.state(x, h)).collect();
    let us: Vec<f64> = (0..len).map(|h| ys[h + 1] - ys[h]).collect();

    let mut nu_x = vec![(0.0, 0.0); len + 1];
    let mut nu_u = vec![(0.0, 0.0); len];
    let mut active_set = Vec::new();
    let mut residual: f64 = 0.0;
    for (con, &lam) in constraints.iter().zip(multipliers) {
        let slack = con.slack(x);
        residual = residual.max((-slack).max(0.0)).max((-lam).max(0.0)).max((lam * slack).abs());
        if lam != 0.0 {
            active_set.push(con.label);
        }
        match con.label {
            ActiveConstraint::StateLower(t) => nu_x[t - spec.start].0 = lam,
            ActiveConstraint::StateUpper(t) => nu_x[t - spec.start].1 = lam,
            ActiveConstraint::ActionLower(t) => nu_u[t - spec.start].0 = lam,
            ActiveConstraint::ActionUpper(t) => nu_u[t - spec.start].1 = lam,
        }
    }
    active_set.sort();

    // unscaled multipliers of the dynamics from stationarity in u
    let mut eta = vec![0.0; len + 1];
    for h in 0..len {
        eta[h + 1] = 2.0 * r * us[h] - nu_u[h].0 + nu_u[h].1;
    }
    eta[0] = eta[1] - 2.0 * (ys[0] - chain.target(0));
    for h in 1..len {
        let stat = 2.0 * (ys[h] - chain.target(h)) - nu_x[h].0 + nu_x[h].1 + eta[h] - eta[h + 1];
        residual = residual.max(stat.abs());
    }
    if chain.free[len].is_some() {
        let fprime = match &spec.terminal {
            TerminalCost::Quadratic { weight, target } => 2.0 * weight[(0, 0)] * (ys[len] - target[0]),
            _ => 0.0,
        };
        let stat = fprime + eta[len] - nu_x[len].0 + nu_x[len].1;
        residual = residual.max(stat.abs());
    }

    let mut value: f64 = (0..len)
        .map(|h| sys.stage_cost(ys[h], us[h], chain.target(h)))
        .sum();
    value += match &spec.terminal {
        TerminalCost::Quadratic { weight, target } => weight[(0, 0)] * (ys[len] - target[0]).powi(2),
        TerminalCost::Indicator { .. } if sys.include_terminal_stage => (ys[len] - chain.target(len)).powi(2),
        _ => 0.0,
    };

    FtocpSolution {
        start: spec.start,
        states: ys.iter().map(|v| DVector::from_element(1, *v)).collect(),
        actions: us.iter().map(|v| DVector::from_element(1, *v)).collect(),
        // halved to match the quadratic solver's dual convention
        duals: eta.iter().map(|v| DVector::from_element(1, 0.5 * v)).collect(),
        value,
        active_set,
        kkt_residual: residual,
    }
}
