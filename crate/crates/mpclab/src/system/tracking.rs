use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DeclaredConstants, LqFamily, Lipschitz, StageData, TerminalData};
use crate::error::{ensure_positive, Error, Result};
use crate::linalg::{orthogonal_from, spectral_norm};
use crate::param::{ParamBox, ParamSeq};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Symmetric matrix U diag(floor_i + span_i·logistic(α_i + c_iᵀξ)) Uᵀ.
///
/// Eigenvalues stay inside [min floor, max (floor + span)] for every ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMap {
    pub basis: DMatrix<f64>,
    pub floors: Vec<f64>,
    pub spans: Vec<f64>,
    pub offsets: Vec<f64>,
    pub slopes: Vec<DVector<f64>>,
}

impl SpectrumMap {
    /// Constant map equal to a symmetric positive definite matrix.
    pub fn constant(matrix: &DMatrix<f64>, param_dim: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::dim("square cost matrix", matrix.nrows(), matrix.ncols()));
        }
        let k = matrix.nrows();
        let eig = ((matrix + matrix.transpose()) * 0.5).symmetric_eigen();
        Ok(Self {
            basis: eig.eigenvectors,
            floors: eig.eigenvalues.iter().copied().collect(),
            spans: vec![0.0; k],
            offsets: vec![0.0; k],
            slopes: vec![DVector::zeros(param_dim); k],
        })
    }

    pub fn mu(&self) -> f64 {
        self.floors.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ell(&self) -> f64 {
        self.floors
            .iter()
            .zip(&self.spans)
            .map(|(f, s)| f + s)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eigenvalues(&self, xi: &DVector<f64>) -> Vec<f64> {
        (0..self.floors.len())
            .map(|i| self.floors[i] + self.spans[i] * logistic(self.offsets[i] + self.slopes[i].dot(xi)))
            .collect()
    }

    pub fn eval(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_vec(self.eigenvalues(xi)));
        let m = &self.basis * d * self.basis.transpose();
        (&m + m.transpose()) * 0.5
    }

    /// Lipschitz constant in ξ: the logistic slope is at most 1/4.
    pub fn lipschitz(&self) -> f64 {
        self.spans
            .iter()
            .zip(&self.slopes)
            .map(|(s, c)| s / 4.0 * c.norm())
            .fold(0.0, f64::max)
    }

    fn depends_on_params(&self) -> bool {
        self.spans
            .iter()
            .zip(&self.slopes)
            .any(|(s, c)| *s != 0.0 && c.iter().any(|v| *v != 0.0))
    }

    fn random(rng: &mut ChaCha8Rng, dim: usize, param_dim: usize, mu: f64, ell: f64, slope: f64) -> Self {
        let basis = orthogonal_from(gaussian(rng, dim, dim, 1.0));
        let offsets = (0..dim).map(|_| 1.5 * normal(rng)).collect();
        let slopes = (0..dim).map(|_| gaussian_vec(rng, param_dim, slope)).collect();
        Self {
            basis,
            floors: vec![mu; dim],
            spans: vec![ell - mu; dim],
            offsets,
            slopes,
        }
    }
}

/// Affine map ξ ↦ base + Σ_j ξ_j coeffs[j].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrixMap {
    pub base: DMatrix<f64>,
    pub coeffs: Vec<DMatrix<f64>>,
}

impl AffineMatrixMap {
    pub fn eval(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        self.coeffs
            .iter()
            .zip(xi.iter())
            .fold(self.base.clone(), |acc, (c, x)| acc + c * *x)
    }

    pub fn bound(&self, pbox: &ParamBox) -> f64 {
        spectral_norm(&self.base)
            + self
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| pbox.max_abs(j) * spectral_norm(c))
                .sum::<f64>()
    }

    pub fn lipschitz(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| spectral_norm(c).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Quadratic tracking family where A, B, w, x̄ are affine in ξ and Q, R, P follow [`SpectrumMap`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSystem {
    pub a: AffineMatrixMap,
    pub b: AffineMatrixMap,
    /// Column maps for w and x̄.
    pub w: AffineMatrixMap,
    pub x_ref: AffineMatrixMap,
    pub q: SpectrumMap,
    pub r: SpectrumMap,
    pub p: SpectrumMap,
    pub pbox: ParamBox,
    pub constants: DeclaredConstants,
}

impl TrackingSystem {
    pub fn new(
        a: AffineMatrixMap,
        b: AffineMatrixMap,
        w: AffineMatrixMap,
        x_ref: AffineMatrixMap,
        q: SpectrumMap,
        r: SpectrumMap,
        p: SpectrumMap,
        pbox: ParamBox,
    ) -> Result<Self> {
        let n = a.base.nrows();
        let m = b.base.ncols();
        let d = pbox.dim();
        if a.base.ncols() != n {
            return Err(Error::dim("A columns", n, a.base.ncols()));
        }
        if b.base.nrows() != n {
            return Err(Error::dim("B rows", n, b.base.nrows()));
        }
        for (name, map) in [("A", &a), ("B", &b), ("w", &w), ("x_ref", &x_ref)] {
            if map.coeffs.len() != d {
                return Err(Error::dim(format!("{name} coefficient count"), d, map.coeffs.len()));
            }
        }
        if w.base.nrows() != n || x_ref.base.nrows() != n {
            return Err(Error::dim("w/x_ref length", n, w.base.nrows().min(x_ref.base.nrows())));
        }
        for (name, s, dim) in [("Q", &q, n), ("R", &r, m), ("P", &p, n)] {
            if s.basis.nrows() != dim {
                return Err(Error::dim(format!("{name} dimension"), dim, s.basis.nrows()));
            }
        }
        let mu = q.mu().min(r.mu()).min(p.mu());
        let ell = q.ell().max(r.ell()).max(p.ell());
        ensure_positive("mu", mu)?;
        let constants = DeclaredConstants {
            mu,
            ell,
            a: a.bound(&pbox),
            b: b.bound(&pbox),
            d_w: w.bound(&pbox),
            d_xref: x_ref.bound(&pbox),
            lipschitz: Lipschitz {
                a: a.lipschitz(),
                b: b.lipschitz(),
                q: q.lipschitz(),
                r: r.lipschitz(),
                p: p.lipschitz(),
                w: w.lipschitz(),
                x_ref: x_ref.lipschitz(),
            },
        };
        Ok(Self {
            a,
            b,
            w,
            x_ref,
            q,
            r,
            p,
            pbox,
            constants,
        })
    }

    /// Random family on the centered unit-diameter cube.
    pub fn random(n: usize, m: usize, d: usize, mu: f64, ell: f64, seed: u64) -> Result<Self> {
        ensure_positive("mu", mu)?;
        if ell < mu {
            return Err(Error::InvalidConfig("ell must be at least mu".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a0 = gaussian(&mut rng, n, n, 1.0 / (n as f64).sqrt());
        let a = AffineMatrixMap {
            base: a0,
            coeffs: (0..d).map(|_| gaussian(&mut rng, n, n, 0.3)).collect(),
        };
        let b = AffineMatrixMap {
            base: gaussian(&mut rng, n, m, 1.0),
            coeffs: (0..d).map(|_| gaussian(&mut rng, n, m, 0.3)).collect(),
        };
        let w = AffineMatrixMap {
            base: gaussian(&mut rng, n, 1, 0.3),
            coeffs: (0..d).map(|_| gaussian(&mut rng, n, 1, 1.0)).collect(),
        };
        let x_ref = AffineMatrixMap {
            base: gaussian(&mut rng, n, 1, 1.0),
            coeffs: (0..d).map(|_| gaussian(&mut rng, n, 1, 1.0)).collect(),
        };
        let q = SpectrumMap::random(&mut rng, n, d, mu, ell, 1.0);
        let r = SpectrumMap::random(&mut rng, m, d, mu, ell, 1.0);
        let p = SpectrumMap::random(&mut rng, n, d, mu, ell, 1.0);
        Self::new(a, b, w, x_ref, q, r, p, ParamBox::centered_unit(d))
    }

    /// Ground truth drawn uniformly from the box, deterministic in `seed`.
    pub fn sample_truth(&self, horizon: usize, seed: u64) -> ParamSeq {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        ParamSeq::new((0..=horizon).map(|_| self.pbox.sample(&mut rng)).collect())
            .expect("horizon is at least one")
    }
}

impl LqFamily for TrackingSystem {
    fn state_dim(&self) -> usize {
        self.a.base.nrows()
    }

    fn action_dim(&self) -> usize {
        self.b.base.ncols()
    }

    fn param_dim(&self) -> usize {
        self.pbox.dim()
    }

    fn stage(&self, _t: usize, xi: &DVector<f64>) -> StageData {
        StageData {
            a: self.a.eval(xi),
            b: self.b.eval(xi),
            w: self.w.eval(xi).column(0).into_owned(),
            q: self.q.eval(xi),
            r: self.r.eval(xi),
            x_ref: self.x_ref.eval(xi).column(0).into_owned(),
        }
    }

    fn terminal(&self, xi: &DVector<f64>) -> TerminalData {
        TerminalData {
            p: self.p.eval(xi),
            x_ref: self.x_ref.eval(xi).column(0).into_owned(),
        }
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn param_box(&self) -> &ParamBox {
        &self.pbox
    }

    fn matrices_depend_on_params(&self) -> bool {
        let nonzero = |cs: &[DMatrix<f64>]| cs.iter().any(|c| c.iter().any(|v| *v != 0.0));
        nonzero(&self.a.coeffs)
            || nonzero(&self.b.coeffs)
            || self.q.depends_on_params()
            || self.r.depends_on_params()
            || self.p.depends_on_params()
    }
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = scale * normal(rng);
        }
    }
    m
}

pub(crate) fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| scale * normal(rng)))
}
