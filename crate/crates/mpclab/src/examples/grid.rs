use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sweep_constants;
use crate::error::{ensure_positive, Error, Result};
use crate::param::ParamBox;
use crate::system::{DeclaredConstants, LqFamily, StageData, TerminalData};

/// Swing-equation network with a scalar unknown inertia coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Diagonal of the droop matrix D.
    pub droop: Vec<f64>,
    /// Network Laplacian, row-major n×n.
    pub laplacian: Vec<Vec<f64>>,
    pub inertia_min: f64,
    pub inertia_max: f64,
    pub delta: f64,
}

impl GridParams {
    /// Path graph on `nodes` vertices with unit edge weights.
    pub fn path(nodes: usize, inertia_min: f64, inertia_max: f64, delta: f64) -> Self {
        let mut laplacian = vec![vec![0.0; nodes]; nodes];
        for i in 0..nodes.saturating_sub(1) {
            laplacian[i][i] += 1.0;
            laplacian[i + 1][i + 1] += 1.0;
            laplacian[i][i + 1] -= 1.0;
            laplacian[i + 1][i] -= 1.0;
        }
        let droop = (0..nodes).map(|i| 1.0 + 0.2 * (i % 3) as f64).collect();
        Self {
            droop,
            laplacian,
            inertia_min,
            inertia_max,
            delta,
        }
    }

    pub fn nodes(&self) -> usize {
        self.droop.len()
    }

    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let n = self.nodes();
        DMatrix::from_fn(n, n, |i, j| self.laplacian[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes();
        if n == 0 {
            return Err(Error::InvalidConfig("grid needs at least one node".into()));
        }
        if self.laplacian.len() != n || self.laplacian.iter().any(|row| row.len() != n) {
            return Err(Error::dim("Laplacian", n, self.laplacian.len()));
        }
        let lap = self.laplacian_matrix();
        if (&lap - lap.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidConfig("Laplacian must be symmetric".into()));
        }
        if lap.row_iter().any(|row| row.sum().abs() > 1e-12) {
            return Err(Error::InvalidConfig("Laplacian rows must sum to zero".into()));
        }
        for d in &self.droop {
            ensure_positive("droop", *d)?;
        }
        ensure_positive("inertia_min", self.inertia_min)?;
        ensure_positive("delta", self.delta)?;
        if self.inertia_max < self.inertia_min {
            return Err(Error::InvalidConfig("inertia_max must be at least inertia_min".into()));
        }
        Ok(())
    }

    pub fn inertia(&self, xi: f64) -> f64 {
        self.inertia_min + (self.inertia_max - self.inertia_min) * xi
    }

    /// A = I + δ [[0, I], [−L/m, −D/m]].
    pub fn a_matrix(&self, inertia: f64) -> DMatrix<f64> {
        let n = self.nodes();
        let mut hat = DMatrix::zeros(2 * n, 2 * n);
        hat.view_mut((0, n), (n, n)).fill_with_identity();
        hat.view_mut((n, 0), (n, n)).copy_from(&(-self.laplacian_matrix() / inertia));
        for i in 0..n {
            hat[(n + i, n + i)] = -self.droop[i] / inertia;
        }
        DMatrix::identity(2 * n, 2 * n) + hat * self.delta
    }

    /// B = δ [0; I/m].
    pub fn b_matrix(&self, inertia: f64) -> DMatrix<f64> {
        let n = self.nodes();
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            b[(n + i, i)] = self.delta / inertia;
        }
        b
    }

    /// |det[B(m_next), A(m_next) B(m_now)]|.
    pub fn two_step_determinant(&self, inertia_now: f64, inertia_next: f64) -> f64 {
        let n = self.nodes();
        let mut mat = DMatrix::zeros(2 * n, 2 * n);
        mat.view_mut((0, 0), (2 * n, n)).copy_from(&self.b_matrix(inertia_next));
        mat.view_mut((0, n), (2 * n, n))
            .copy_from(&(self.a_matrix(inertia_next) * self.b_matrix(inertia_now)));
        mat.determinant().abs()
    }

    /// δ^{3n} / m̄^{2n}.
    pub fn determinant_lower_bound(&self) -> f64 {
        let n = self.nodes() as i32;
        self.delta.powi(3 * n) / self.inertia_max.powi(2 * n)
    }
}

/// Frequency regulation with Q = I, R = I, P = I and zero references.
#[derive(Debug, Clone)]
pub struct GridSystem {
    pub params: GridParams,
    pbox: ParamBox,
    constants: DeclaredConstants,
}

fn stage_at(params: &GridParams, xi: f64) -> StageData {
    let n = params.nodes();
    let inertia = params.inertia(xi);
    StageData {
        a: params.a_matrix(inertia),
        b: params.b_matrix(inertia),
        w: DVector::zeros(2 * n),
        q: DMatrix::identity(2 * n, 2 * n),
        r: DMatrix::identity(n, n),
        x_ref: DVector::zeros(2 * n),
    }
}

/// Builds the frequency-regulation family.
pub fn grid_system(params: GridParams) -> Result<GridSystem> {
    params.validate()?;
    let n = params.nodes();
    let constants = sweep_constants(|xi| stage_at(&params, xi), DMatrix::identity(2 * n, 2 * n));
    Ok(GridSystem {
        params,
        pbox: ParamBox::unit_interval(),
        constants,
    })
}

impl LqFamily for GridSystem {
    fn state_dim(&self) -> usize {
        2 * self.params.nodes()
    }

    fn action_dim(&self) -> usize {
        self.params.nodes()
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn stage(&self, _t: usize, xi: &DVector<f64>) -> StageData {
        stage_at(&self.params, xi[0])
    }

    fn terminal(&self, _xi: &DVector<f64>) -> TerminalData {
        let n = self.params.nodes();
        TerminalData {
            p: DMatrix::identity(2 * n, 2 * n),
            x_ref: DVector::zeros(2 * n),
        }
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn param_box(&self) -> &ParamBox {
        &self.pbox
    }

    fn matrices_depend_on_params(&self) -> bool {
        self.params.inertia_max > self.params.inertia_min
    }
}
