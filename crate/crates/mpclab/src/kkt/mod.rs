//! KKT matrices of quadratic windows, inverse block decay and closed-form decay constants.

mod constants;
mod perturbation;
mod profile;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use constants::{
    block_matrix_spectrum_bounds, decay_from_spectrum, closed_form_decay, closed_form_general_decay, tracking_sensitivity,
    tracking_thresholds, SaddleSpectrum, DecayConstants, DecayInputs, GeneralDecay, SpectrumBounds, SpectrumSource,
    TrackingThresholds,
};
pub use perturbation::{measure_perturbation_bounds, PerturbationTables};
pub use profile::{block_inverse_profile, BlockProfile, DecayFit};

use crate::error::{Error, Result};
use crate::ftocp::{ActiveConstraint, FtocpSolution, FtocpSpec};
use crate::system::{InventorySystem, LqFamily, StageData, TerminalCost};

/// Which saddle matrix an assembly represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssemblyVariant {
    /// Free terminal state: H with last block (y_L, η_L).
    Full,
    /// Indicator terminal: Ĥ with last block (η_L).
    Hat,
    /// Inventory window with its active inequality constraints turned into equality rows.
    InventoryActiveSet,
}

/// H = [[M, Nᵀ], [N, 0]] in time-major order, together with its per-step permutation Υ = Φ H Φᵀ.
#[derive(Debug, Clone)]
pub struct KktAssembly {
    pub start: usize,
    pub end: usize,
    pub variant: AssemblyVariant,
    pub state_dim: usize,
    pub action_dim: usize,
    /// M = diag(Q, R, ..., [P]).
    pub cost: DMatrix<f64>,
    /// N (or N̂ when the terminal state is fixed).
    pub dynamics: DMatrix<f64>,
    /// Extra equality rows from active inequality constraints.
    pub active_rows: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Row i of Υ is row `permutation[i]` of H.
    pub permutation: Vec<usize>,
    pub upsilon: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub block_sizes: Vec<usize>,
    pub block_offsets: Vec<usize>,
}

struct Layout {
    n: usize,
    m: usize,
    len: usize,
    free_terminal: bool,
}

impl Layout {
    fn primal_dim(&self) -> usize {
        self.len * (self.n + self.m) + if self.free_terminal { self.n } else { 0 }
    }

    fn y(&self, i: usize) -> usize {
        i * (self.n + self.m)
    }

    fn v(&self, i: usize) -> usize {
        i * (self.n + self.m) + self.n
    }

    fn eta(&self, i: usize) -> usize {
        self.primal_dim() + i * self.n
    }

    fn dual_dim(&self) -> usize {
        (self.len + 1) * self.n
    }
}

/// An equality row `e_index · χ = value` attached to a time block.
struct ExtraRow {
    block: usize,
    primal_index: usize,
    value: f64,
}

fn build(
    start: usize,
    variant: AssemblyVariant,
    layout: Layout,
    stages: &[StageData],
    terminal: (&DMatrix<f64>, &DVector<f64>),
    z: &DVector<f64>,
    terminal_state: Option<&DVector<f64>>,
    extras: &[ExtraRow],
) -> KktAssembly {
    let (n, m, len) = (layout.n, layout.m, layout.len);
    let np = layout.primal_dim();
    let nd = layout.dual_dim();
    let ne = extras.len();

    let mut cost = DMatrix::zeros(np, np);
    let mut rhs = DVector::zeros(np + nd + ne);
    for (i, s) in stages.iter().enumerate() {
        cost.view_mut((layout.y(i), layout.y(i)), (n, n)).copy_from(&s.q);
        cost.view_mut((layout.v(i), layout.v(i)), (m, m)).copy_from(&s.r);
        rhs.rows_mut(layout.y(i), n).copy_from(&(&s.q * &s.x_ref));
    }
    if layout.free_terminal {
        let (p, target) = terminal;
        cost.view_mut((layout.y(len), layout.y(len)), (n, n)).copy_from(p);
        rhs.rows_mut(layout.y(len), n).copy_from(&(p * target));
    }

    let mut dynamics = DMatrix::zeros(nd, np);
    dynamics.view_mut((0, layout.y(0)), (n, n)).fill_with_identity();
    rhs.rows_mut(np, n).copy_from(z);
    for (i, s) in stages.iter().enumerate() {
        let row = (i + 1) * n;
        dynamics.view_mut((row, layout.y(i)), (n, n)).copy_from(&(-&s.a));
        dynamics.view_mut((row, layout.v(i)), (n, m)).copy_from(&(-&s.b));
        let mut w = s.w.clone();
        if i + 1 < len || layout.free_terminal {
            dynamics.view_mut((row, layout.y(i + 1)), (n, n)).fill_with_identity();
        } else if let Some(zeta) = terminal_state {
            w -= zeta;
        }
        rhs.rows_mut(np + row, n).copy_from(&w);
    }

    let mut active_rows = DMatrix::zeros(ne, np);
    for (k, e) in extras.iter().enumerate() {
        active_rows[(k, e.primal_index)] = 1.0;
        rhs[np + nd + k] = e.value;
    }

    let total = np + nd + ne;
    let mut h = DMatrix::zeros(total, total);
    h.view_mut((0, 0), (np, np)).copy_from(&cost);
    h.view_mut((np, 0), (nd, np)).copy_from(&dynamics);
    h.view_mut((0, np), (np, nd)).copy_from(&dynamics.transpose());
    h.view_mut((np + nd, 0), (ne, np)).copy_from(&active_rows);
    h.view_mut((0, np + nd), (np, ne)).copy_from(&active_rows.transpose());

    let mut permutation = Vec::with_capacity(total);
    let mut block_sizes = Vec::with_capacity(len + 1);
    for i in 0..=len {
        let before = permutation.len();
        if i < len || layout.free_terminal {
            permutation.extend(layout.y(i)..layout.y(i) + n);
        }
        if i < len {
            permutation.extend(layout.v(i)..layout.v(i) + m);
        }
        permutation.extend(layout.eta(i)..layout.eta(i) + n);
        permutation.extend(
            extras
                .iter()
                .enumerate()
                .filter(|(_, e)| e.block == i)
                .map(|(k, _)| np + nd + k),
        );
        block_sizes.push(permutation.len() - before);
    }
    let block_offsets = block_sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let upsilon = DMatrix::from_fn(total, total, |i, j| h[(permutation[i], permutation[j])]);
    let beta = DVector::from_fn(total, |i, _| rhs[permutation[i]]);

    KktAssembly {
        start,
        end: start + len,
        variant,
        state_dim: n,
        action_dim: m,
        cost,
        dynamics,
        active_rows,
        h,
        rhs,
        permutation,
        upsilon,
        beta,
        block_sizes,
        block_offsets,
    }
}

/// Assembles H, b, Φ, Υ, β for a quadratic window.
pub fn assemble(family: &dyn LqFamily, spec: &FtocpSpec) -> Result<KktAssembly> {
    let n = family.state_dim();
    let m = family.action_dim();
    let len = spec.len();
    if len == 0 {
        return Err(Error::InvalidConfig("KKT assembly needs a nonempty window".into()));
    }
    if spec.initial_state.len() != n {
        return Err(Error::dim("initial state", n, spec.initial_state.len()));
    }
    let stages: Vec<StageData> = (0..len)
        .map(|i| family.stage(spec.start + i, &spec.params[i]))
        .collect();
    let zero_p = DMatrix::zeros(n, n);
    let zero_x = DVector::zeros(n);
    let (variant, weight, target, zeta) = match &spec.terminal {
        TerminalCost::Quadratic { weight, target } => (AssemblyVariant::Full, weight, target, None),
        TerminalCost::Zero => (AssemblyVariant::Full, &zero_p, &zero_x, None),
        TerminalCost::Indicator { target } => (AssemblyVariant::Hat, &zero_p, &zero_x, Some(target)),
    };
    let layout = Layout {
        n,
        m,
        len,
        free_terminal: variant == AssemblyVariant::Full,
    };
    Ok(build(
        spec.start,
        variant,
        layout,
        &stages,
        (weight, target),
        &spec.initial_state,
        zeta,
        &[],
    ))
}

/// Assembles the inventory KKT system at a given solution's active set.
pub fn assemble_inventory(sys: &InventorySystem, spec: &FtocpSpec, solution: &FtocpSolution) -> Result<KktAssembly> {
    let len = spec.len();
    if len == 0 {
        return Err(Error::InvalidConfig("KKT assembly needs a nonempty window".into()));
    }
    let one = DMatrix::from_element(1, 1, 1.0);
    let stages: Vec<StageData> = (0..len)
        .map(|i| StageData {
            a: one.clone(),
            b: one.clone(),
            w: DVector::zeros(1),
            q: one.clone(),
            r: DMatrix::from_element(1, 1, sys.action_weight),
            x_ref: spec.params[i].clone(),
        })
        .collect();
    let zero_p = DMatrix::zeros(1, 1);
    let zero_x = DVector::zeros(1);
    let (free_terminal, weight, target, zeta) = match &spec.terminal {
        TerminalCost::Quadratic { weight, target } => (true, weight, target, None),
        TerminalCost::Zero => (true, &zero_p, &zero_x, None),
        TerminalCost::Indicator { target } => (false, &zero_p, &zero_x, Some(target)),
    };
    let layout = Layout {
        n: 1,
        m: 1,
        len,
        free_terminal,
    };
    let upper_u = sys.action_bounds.upper();
    let lower_u = sys.action_bounds.lower();
    let extras: Vec<ExtraRow> = solution
        .active_set
        .iter()
        .filter_map(|c| {
            let (t, value, is_state) = match *c {
                ActiveConstraint::StateLower(t) => (t, -sys.state_bound, true),
                ActiveConstraint::StateUpper(t) => (t, sys.state_bound, true),
                ActiveConstraint::ActionLower(t) => (t, lower_u, false),
                ActiveConstraint::ActionUpper(t) => (t, upper_u, false),
            };
            let i = t - spec.start;
            if is_state {
                (i < len || free_terminal).then(|| ExtraRow {
                    block: i,
                    primal_index: layout.y(i),
                    value,
                })
            } else {
                Some(ExtraRow {
                    block: i,
                    primal_index: layout.v(i),
                    value,
                })
            }
        })
        .collect();
    Ok(build(
        spec.start,
        AssemblyVariant::InventoryActiveSet,
        layout,
        &stages,
        (weight, target),
        &spec.initial_state,
        zeta,
        &extras,
    ))
}

impl KktAssembly {
    pub fn blocks(&self) -> usize {
        self.block_sizes.len()
    }

    /// Rebuilds H from Υ by undoing the permutation.
    pub fn unpermute(&self) -> DMatrix<f64> {
        let total = self.permutation.len();
        let mut h = DMatrix::zeros(total, total);
        for i in 0..total {
            for j in 0..total {
                h[(self.permutation[i], self.permutation[j])] = self.upsilon[(i, j)];
            }
        }
        h
    }

    /// Largest |i − j| over nonzero blocks of Υ.
    pub fn block_bandwidth(&self) -> usize {
        let mut width = 0;
        for bi in 0..self.blocks() {
            for bj in 0..self.blocks() {
                let block = self.upsilon.view(
                    (self.block_offsets[bi], self.block_offsets[bj]),
                    (self.block_sizes[bi], self.block_sizes[bj]),
                );
                if block.iter().any(|v| *v != 0.0) {
                    width = width.max(bi.abs_diff(bj));
                }
            }
        }
        width
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftocp::QuadraticKkt;
    use crate::system::TrackingSystem;

    fn spec(family: &TrackingSystem, len: usize, terminal: TerminalCost) -> FtocpSpec {
        let truth = family.sample_truth(len, 3);
        FtocpSpec::new(0, len, DVector::from_vec(vec![0.3, -0.1]), truth.window(0, len), terminal).unwrap()
    }

    #[test]
    fn full_window_block_partition() {
        let family = TrackingSystem::random(2, 1, 2, 0.5, 2.0, 1).unwrap();
        let terminal = TerminalCost::Quadratic {
            weight: DMatrix::identity(2, 2),
            target: DVector::zeros(2),
        };
        let asm = assemble(&family, &spec(&family, 3, terminal)).unwrap();
        assert_eq!(asm.block_sizes, vec![5, 5, 5, 4]);
        assert_eq!(asm.block_bandwidth(), 1);
        assert_eq!(asm.unpermute(), asm.h);
        assert_eq!(asm.h, asm.h.transpose());
    }

    #[test]
    fn hat_window_ends_with_dual_block() {
        let family = TrackingSystem::random(2, 1, 2, 0.5, 2.0, 2).unwrap();
        let terminal = TerminalCost::Indicator {
            target: DVector::from_vec(vec![0.1, 0.2]),
        };
        let asm = assemble(&family, &spec(&family, 3, terminal)).unwrap();
        assert_eq!(asm.block_sizes, vec![5, 5, 5, 2]);
        // N̂ is N without the y_L column block
        assert_eq!(asm.dynamics.ncols(), 3 * 3);
    }

    #[test]
    fn matches_solver_matrix() {
        let family = TrackingSystem::random(2, 1, 2, 0.5, 2.0, 5).unwrap();
        for terminal in [
            TerminalCost::Quadratic {
                weight: DMatrix::identity(2, 2),
                target: DVector::from_vec(vec![0.5, 0.0]),
            },
            TerminalCost::Indicator {
                target: DVector::from_vec(vec![0.1, 0.2]),
            },
        ] {
            let s = spec(&family, 6, terminal);
            let asm = assemble(&family, &s).unwrap();
            let kkt = QuadraticKkt::assemble(&family, &s).unwrap();
            assert_eq!(asm.upsilon, kkt.dense());
            assert_eq!(asm.beta, kkt.rhs(&s.initial_state, None));
        }
    }
}
