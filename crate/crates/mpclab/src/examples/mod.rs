//! Ready-made systems: cart-pole, frequency regulation, inventory chains and random tracking.

mod grid;
mod inventory_suite;
mod pendulum;
mod presets;

use nalgebra::DMatrix;

pub use grid::{grid_system, GridParams, GridSystem};
pub use inventory_suite::{
    inventory_counterexample_suite, max_eps, one_sided_sensitivity_profile, terminal_sensitivity_profile,
    two_sided_sensitivity_profile, SensitivityProfile, SuiteRow,
};
pub use pendulum::{pendulum_system, PendulumParams, PendulumSystem};
pub use presets::{preset, preset_description, PRESET_NAMES};

use crate::linalg::{spectral_norm, sym_eig_range};
use crate::system::{DeclaredConstants, Lipschitz, StageData};

const SWEEP_POINTS: usize = 401;
/// Inflation applied to difference quotients measured on the sweep grid.
const LIPSCHITZ_MARGIN: f64 = 1.01;

/// Bounds and Lipschitz constants of a one-dimensional family, measured on a dense grid of [0, 1].
pub(crate) fn sweep_constants(stage: impl Fn(f64) -> StageData, terminal_weight: DMatrix<f64>) -> DeclaredConstants {
    let grid: Vec<(f64, StageData)> = (0..SWEEP_POINTS)
        .map(|i| {
            let xi = i as f64 / (SWEEP_POINTS - 1) as f64;
            (xi, stage(xi))
        })
        .collect();
    let (pmu, pell) = sym_eig_range(&terminal_weight);
    let mut c = DeclaredConstants {
        mu: pmu,
        ell: pell,
        a: 0.0,
        b: 0.0,
        d_w: 0.0,
        d_xref: 0.0,
        lipschitz: Lipschitz::default(),
    };
    for (_, s) in &grid {
        let (qmu, qell) = sym_eig_range(&s.q);
        let (rmu, rell) = sym_eig_range(&s.r);
        c.mu = c.mu.min(qmu).min(rmu);
        c.ell = c.ell.max(qell).max(rell);
        c.a = c.a.max(spectral_norm(&s.a));
        c.b = c.b.max(spectral_norm(&s.b));
        c.d_w = c.d_w.max(s.w.norm());
        c.d_xref = c.d_xref.max(s.x_ref.norm());
    }
    let lip = &mut c.lipschitz;
    for pair in grid.windows(2) {
        let (x0, s0) = &pair[0];
        let (x1, s1) = &pair[1];
        let h = x1 - x0;
        lip.a = lip.a.max(spectral_norm(&(&s1.a - &s0.a)) / h);
        lip.b = lip.b.max(spectral_norm(&(&s1.b - &s0.b)) / h);
        lip.q = lip.q.max(spectral_norm(&(&s1.q - &s0.q)) / h);
        lip.r = lip.r.max(spectral_norm(&(&s1.r - &s0.r)) / h);
        lip.w = lip.w.max((&s1.w - &s0.w).norm() / h);
        lip.x_ref = lip.x_ref.max((&s1.x_ref - &s0.x_ref).norm() / h);
    }
    for v in [&mut lip.a, &mut lip.b, &mut lip.q, &mut lip.r, &mut lip.w, &mut lip.x_ref] {
        *v *= LIPSCHITZ_MARGIN;
    }
    c
}
