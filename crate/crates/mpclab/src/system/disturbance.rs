use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DeclaredConstants, LqFamily, Lipschitz, StageData, TerminalData};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, sym_eig_range};
use crate::param::ParamBox;

/// Known time-varying (A_t, B_t), fixed costs minimized at the origin, disturbance w_t = W ξ_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSystem {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub w_map: DMatrix<f64>,
    pub pbox: ParamBox,
    pub constants: DeclaredConstants,
}

impl DisturbanceSystem {
    /// `a` and `b` hold one matrix per step; the last entry is reused past the end.
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        w_map: DMatrix<f64>,
        pbox: ParamBox,
    ) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::dim("A/B sequence length", a.len().max(1), b.len()));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        for (at, bt) in a.iter().zip(&b) {
            if at.shape() != (n, n) {
                return Err(Error::dim("A_t shape", n, at.nrows()));
            }
            if bt.shape() != (n, m) {
                return Err(Error::dim("B_t shape", n * m, bt.nrows() * bt.ncols()));
            }
        }
        if q.shape() != (n, n) || p.shape() != (n, n) {
            return Err(Error::dim("Q/P shape", n, q.nrows()));
        }
        if r.shape() != (m, m) {
            return Err(Error::dim("R shape", m, r.nrows()));
        }
        if w_map.shape() != (n, pbox.dim()) {
            return Err(Error::dim("W columns", pbox.dim(), w_map.ncols()));
        }
        let ranges = [sym_eig_range(&q), sym_eig_range(&r), sym_eig_range(&p)];
        let mu = ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let ell = ranges.iter().map(|r| r.1).fold(0.0, f64::max);
        if !(mu > 0.0) {
            return Err(Error::NonPositive { name: "mu", value: mu });
        }
        let l_w = spectral_norm(&w_map);
        let constants = DeclaredConstants {
            mu,
            ell,
            a: a.iter().map(spectral_norm).fold(0.0, f64::max),
            b: b.iter().map(spectral_norm).fold(0.0, f64::max),
            d_w: l_w * pbox.max_norm(),
            d_xref: 0.0,
            lipschitz: Lipschitz {
                w: l_w,
                ..Lipschitz::default()
            },
        };
        Ok(Self {
            a,
            b,
            q,
            r,
            p,
            w_map,
            pbox,
            constants,
        })
    }

    fn at(&self, t: usize) -> usize {
        t.min(self.a.len() - 1)
    }
}

impl LqFamily for DisturbanceSystem {
    fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    fn action_dim(&self) -> usize {
        self.r.nrows()
    }

    fn param_dim(&self) -> usize {
        self.pbox.dim()
    }

    fn stage(&self, t: usize, xi: &DVector<f64>) -> StageData {
        let i = self.at(t);
        StageData {
            a: self.a[i].clone(),
            b: self.b[i].clone(),
            w: &self.w_map * xi,
            q: self.q.clone(),
            r: self.r.clone(),
            x_ref: DVector::zeros(self.q.nrows()),
        }
    }

    fn terminal(&self, _xi: &DVector<f64>) -> TerminalData {
        TerminalData {
            p: self.p.clone(),
            x_ref: DVector::zeros(self.q.nrows()),
        }
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn param_box(&self) -> &ParamBox {
        &self.pbox
    }

    fn matrices_depend_on_params(&self) -> bool {
        false
    }
}
