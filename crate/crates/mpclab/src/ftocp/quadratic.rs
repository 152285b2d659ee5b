use nalgebra::{DMatrix, DVector};

use super::{degenerate_solution, FtocpSolution, FtocpSpec};
use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::system::{LqFamily, StageData, TerminalCost};

/// Problems with fewer variables are factored densely.
const DENSE_LIMIT: usize = 200;
const PIVOT_TOL: f64 = 1e-13;

/// Which KKT matrix a window produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktVariant {
    /// Free terminal state with a quadratic (or zero) terminal cost; last block (y_L, η_L).
    Full,
    /// Terminal state fixed by an indicator; last block (η_L).
    Hat,
}

#[derive(Debug, Clone)]
enum Factor {
    Band(BandLu),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Permuted, block-tridiagonal KKT system of a quadratic window.
///
/// Block i < L holds (y_i, v_i, η_i); the last block holds (y_L, η_L) or (η_L).
#[derive(Debug, Clone)]
pub struct QuadraticKkt {
    pub start: usize,
    pub len: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub variant: KktVariant,
    pub block_offsets: Vec<usize>,
    pub block_sizes: Vec<usize>,
    matrix: BandMatrix,
    stages: Vec<StageData>,
    terminal_weight: DMatrix<f64>,
    terminal_target: DVector<f64>,
    factor: Option<Factor>,
}

impl QuadraticKkt {
    /// Assembles Υ for a window of positive length.
    pub fn assemble(family: &dyn LqFamily, spec: &FtocpSpec) -> Result<Self> {
        let n = family.state_dim();
        let m = family.action_dim();
        let len = spec.len();
        if len == 0 {
            return Err(Error::InvalidConfig("KKT assembly needs a nonempty window".into()));
        }
        if spec.initial_state.len() != n {
            return Err(Error::dim("initial state", n, spec.initial_state.len()));
        }
        for xi in &spec.params {
            if xi.len() != family.param_dim() {
                return Err(Error::dim("window parameter", family.param_dim(), xi.len()));
            }
        }
        let (variant, terminal_weight, terminal_target) = match &spec.terminal {
            TerminalCost::Quadratic { weight, target } => {
                if weight.shape() != (n, n) || target.len() != n {
                    return Err(Error::dim("terminal weight", n, weight.nrows()));
                }
                (KktVariant::Full, weight.clone(), target.clone())
            }
            TerminalCost::Zero => (KktVariant::Full, DMatrix::zeros(n, n), DVector::zeros(n)),
            TerminalCost::Indicator { target } => {
                if target.len() != n {
                    return Err(Error::dim("terminal target", n, target.len()));
                }
                (KktVariant::Hat, DMatrix::zeros(n, n), target.clone())
            }
        };
        let stages: Vec<StageData> = (0..len)
            .map(|i| family.stage(spec.start + i, &spec.params[i]))
            .collect();

        let inner = 2 * n + m;
        let last = match variant {
            KktVariant::Full => 2 * n,
            KktVariant::Hat => n,
        };
        let mut block_sizes = vec![inner; len];
        block_sizes.push(last);
        let mut block_offsets = Vec::with_capacity(len + 1);
        let mut acc = 0;
        for s in &block_sizes {
            block_offsets.push(acc);
            acc += s;
        }
        let total = acc;
        let band = block_sizes
            .windows(2)
            .map(|w| w[0] + w[1] - 1)
            .max()
            .unwrap_or(1);
        let mut matrix = BandMatrix::zeros(total, band, band);

        let y = |i: usize| block_offsets[i];
        let v = |i: usize| block_offsets[i] + n;
        let eta = |i: usize| {
            if i < len {
                block_offsets[i] + n + m
            } else {
                match variant {
                    KktVariant::Full => block_offsets[i] + n,
                    KktVariant::Hat => block_offsets[i],
                }
            }
        };
        let mut put = |r0: usize, c0: usize, block: &DMatrix<f64>, sign: f64| {
            for j in 0..block.ncols() {
                for i in 0..block.nrows() {
                    let val = block[(i, j)];
                    if val != 0.0 {
                        matrix.add(r0 + i, c0 + j, sign * val);
                    }
                }
            }
        };
        let eye = DMatrix::<f64>::identity(n, n);
        for (i, s) in stages.iter().enumerate() {
            put(y(i), y(i), &s.q, 1.0);
            put(v(i), v(i), &s.r, 1.0);
            put(y(i), eta(i), &eye, 1.0);
            put(eta(i), y(i), &eye, 1.0);
            put(y(i), eta(i + 1), &s.a.transpose(), -1.0);
            put(eta(i + 1), y(i), &s.a, -1.0);
            put(v(i), eta(i + 1), &s.b.transpose(), -1.0);
            put(eta(i + 1), v(i), &s.b, -1.0);
        }
        if variant == KktVariant::Full {
            put(y(len), y(len), &terminal_weight, 1.0);
            put(y(len), eta(len), &eye, 1.0);
            put(eta(len), y(len), &eye, 1.0);
        }
        Ok(Self {
            start: spec.start,
            len,
            state_dim: n,
            action_dim: m,
            variant,
            block_offsets,
            block_sizes,
            matrix,
            stages,
            terminal_weight,
            terminal_target,
            factor: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// Dense copy of Υ.
    pub fn dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    pub fn band(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn y_index(&self, i: usize) -> Option<usize> {
        match (i < self.len, self.variant) {
            (true, _) | (false, KktVariant::Full) => Some(self.block_offsets[i]),
            (false, KktVariant::Hat) => None,
        }
    }

    pub fn v_index(&self, i: usize) -> usize {
        self.block_offsets[i] + self.state_dim
    }

    pub fn eta_index(&self, i: usize) -> usize {
        if i < self.len {
            self.block_offsets[i] + self.state_dim + self.action_dim
        } else {
            match self.variant {
                KktVariant::Full => self.block_offsets[i] + self.state_dim,
                KktVariant::Hat => self.block_offsets[i],
            }
        }
    }

    /// β for initial state z; `terminal_state` replaces the indicator target when given.
    pub fn rhs(&self, z: &DVector<f64>, terminal_state: Option<&DVector<f64>>) -> DVector<f64> {
        let n = self.state_dim;
        let mut beta = DVector::zeros(self.dim());
        for (i, s) in self.stages.iter().enumerate() {
            let qx = &s.q * &s.x_ref;
            beta.rows_mut(self.block_offsets[i], n).copy_from(&qx);
            beta.rows_mut(self.eta_index(i + 1), n).copy_from(&s.w);
        }
        beta.rows_mut(self.eta_index(0), n).copy_from(z);
        match self.variant {
            KktVariant::Full => {
                let px = &self.terminal_weight * &self.terminal_target;
                beta.rows_mut(self.block_offsets[self.len], n).copy_from(&px);
            }
            KktVariant::Hat => {
                let target = terminal_state.unwrap_or(&self.terminal_target);
                let mut tail = beta.rows_mut(self.eta_index(self.len), n);
                tail -= target;
            }
        }
        beta
    }

    pub fn is_factored(&self) -> bool {
        self.factor.is_some()
    }

    pub fn factorize(&mut self) -> Result<()> {
        if self.factor.is_some() {
            return Ok(());
        }
        let singular = Error::SingularKkt {
            start: self.start,
            end: self.end(),
        };
        let factor = if self.dim() < DENSE_LIMIT {
            let lu = self.dense().lu();
            let u = lu.u();
            let scale = self.matrix.max_abs();
            let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if !(min_pivot > PIVOT_TOL * scale) {
                return Err(singular);
            }
            Factor::Dense(lu)
        } else {
            Factor::Band(self.matrix.factor(PIVOT_TOL).ok_or(singular)?)
        };
        self.factor = Some(factor);
        Ok(())
    }

    /// Solves Υ χ = β with one step of iterative refinement.
    pub fn solve_vec(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let factor = self.factor.as_ref().ok_or_else(|| {
            Error::InvalidConfig("KKT system must be factorized before solving".into())
        })?;
        let raw = |rhs: &DVector<f64>| -> DVector<f64> {
            match factor {
                Factor::Band(lu) => lu.solve(rhs),
                Factor::Dense(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::from_element(rhs.len(), f64::NAN)),
            }
        };
        let mut chi = raw(beta);
        let residual = beta - self.matrix.mul_vec(&chi);
        chi += raw(&residual);
        let res = (self.matrix.mul_vec(&chi) - beta).norm();
        if !res.is_finite() || res > 1e-6 * (1.0 + beta.norm()) {
            return Err(Error::SingularKkt {
                start: self.start,
                end: self.end(),
            });
        }
        Ok(chi)
    }

    pub fn residual(&self, chi: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        (self.matrix.mul_vec(chi) - beta).norm()
    }

    /// Solves the window from z, optionally overriding the indicator target.
    pub fn solve_from(&self, z: &DVector<f64>, terminal_state: Option<&DVector<f64>>) -> Result<FtocpSolution> {
        let beta = self.rhs(z, terminal_state);
        let chi = self.solve_vec(&beta)?;
        Ok(self.unpack(&chi, &beta, terminal_state))
    }

    fn unpack(&self, chi: &DVector<f64>, beta: &DVector<f64>, terminal_state: Option<&DVector<f64>>) -> FtocpSolution {
        let n = self.state_dim;
        let m = self.action_dim;
        let mut states: Vec<DVector<f64>> = (0..self.len)
            .map(|i| chi.rows(self.block_offsets[i], n).into_owned())
            .collect();
        states.push(match self.variant {
            KktVariant::Full => chi.rows(self.block_offsets[self.len], n).into_owned(),
            KktVariant::Hat => terminal_state.unwrap_or(&self.terminal_target).clone(),
        });
        let actions: Vec<DVector<f64>> = (0..self.len)
            .map(|i| chi.rows(self.v_index(i), m).into_owned())
            .collect();
        let duals = (0..=self.len)
            .map(|i| chi.rows(self.eta_index(i), n).into_owned())
            .collect();
        let mut value = 0.0;
        for (i, s) in self.stages.iter().enumerate() {
            let d = &states[i] - &s.x_ref;
            value += d.dot(&(&s.q * &d)) + actions[i].dot(&(&s.r * &actions[i]));
        }
        if self.variant == KktVariant::Full {
            let d = &states[self.len] - &self.terminal_target;
            value += d.dot(&(&self.terminal_weight * &d));
        }
        FtocpSolution {
            start: self.start,
            states,
            actions,
            duals,
            value,
            active_set: Vec::new(),
            kkt_residual: self.residual(chi, beta),
        }
    }
}

/// Solves an unconstrained time-varying quadratic window exactly.
pub fn solve_quadratic(spec: &FtocpSpec, family: &dyn LqFamily) -> Result<FtocpSolution> {
    if spec.is_empty() {
        return degenerate_solution(spec);
    }
    let mut kkt = QuadraticKkt::assemble(family, spec)?;
    kkt.factorize()?;
    kkt.solve_from(&spec.initial_state, None)
}
