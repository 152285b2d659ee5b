//! Controllability matrices of time-varying linear systems.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::param::ParamSeq;
use crate::system::System;

fn linear_parts(system: &System, t: usize, xi: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    match system {
        System::Quadratic(f) => {
            let s = f.stage(t, xi);
            (s.a, s.b)
        }
        System::Inventory(_) => (DMatrix::identity(1, 1), DMatrix::identity(1, 1)),
    }
}

/// M(t, p) = [Φ(t+p, t+1) B_t, ..., Φ(t+p, t+p) B_{t+p-1}] with Φ(s, r) = A_{s-1} ⋯ A_r.
pub fn controllability_matrix(system: &System, t: usize, p: usize, xi: &ParamSeq) -> Result<DMatrix<f64>> {
    let horizon = xi.horizon();
    if p == 0 || t + p > horizon {
        return Err(Error::WindowOutOfRange {
            start: t,
            end: t + p,
            horizon,
        });
    }
    let n = system.state_dim();
    let m = system.action_dim();
    let mut out = DMatrix::zeros(n, m * p);
    // walk backwards so the transition product accumulates on the left
    let mut transition = DMatrix::<f64>::identity(n, n);
    for j in (0..p).rev() {
        let (a, b) = linear_parts(system, t + j, xi.get(t + j));
        out.view_mut((0, j * m), (n, m)).copy_from(&(&transition * &b));
        transition *= a;
    }
    Ok(out)
}

/// Result of a uniform controllability scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllabilityReport {
    pub index: usize,
    /// min_t σ_min(M(t, d)); zero when some window is rank deficient.
    pub sigma: f64,
    pub worst_step: usize,
    pub controllable: bool,
}

/// Smallest row-rank singular value of an n×k matrix (zero when k < n).
pub fn row_rank_sigma(m: &DMatrix<f64>) -> f64 {
    if m.ncols() < m.nrows() || m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// min over t ∈ [0, T−d] of σ_min(M(t, d)).
pub fn min_singular_controllability(system: &System, index: usize, xi: &ParamSeq) -> Result<ControllabilityReport> {
    let horizon = xi.horizon();
    if index == 0 || index > horizon {
        return Err(Error::WindowOutOfRange {
            start: 0,
            end: index,
            horizon,
        });
    }
    let mut sigma = f64::INFINITY;
    let mut worst_step = 0;
    let mut scale: f64 = 0.0;
    for t in 0..=horizon - index {
        let mat = controllability_matrix(system, t, index, xi)?;
        scale = scale.max(mat.amax());
        let s = row_rank_sigma(&mat);
        if s < sigma {
            sigma = s;
            worst_step = t;
        }
    }
    let controllable = sigma > 1e-12 * scale.max(1.0);
    if !controllable {
        sigma = 0.0;
    }
    Ok(ControllabilityReport {
        index,
        sigma,
        worst_step,
        controllable,
    })
}
