use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sweep_constants;
use crate::error::{ensure_positive, Error, Result};
use crate::param::ParamBox;
use crate::system::{DeclaredConstants, LqFamily, StageData, TerminalData};

/// Physical parameters of the linearized cart-pole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumParams {
    pub mass_min: f64,
    pub mass_max: f64,
    /// Pendulum mass.
    pub m: f64,
    /// Cart friction coefficient.
    pub friction: f64,
    /// Distance to the pendulum's center of mass.
    pub l: f64,
    /// Moment of inertia of the pendulum.
    pub inertia: f64,
    pub g: f64,
    pub delta: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass_min: 0.5,
            mass_max: 1.0,
            m: 0.2,
            friction: 0.1,
            l: 0.3,
            inertia: 0.006,
            g: 9.8,
            delta: 0.02,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass_min", self.mass_min),
            ("m", self.m),
            ("friction", self.friction),
            ("l", self.l),
            ("inertia", self.inertia),
            ("g", self.g),
            ("delta", self.delta),
        ] {
            ensure_positive(name, v)?;
        }
        if self.mass_max < self.mass_min {
            return Err(Error::InvalidConfig("mass_max must be at least mass_min".into()));
        }
        Ok(())
    }

    /// Cart mass for normalized parameter ξ ∈ [0, 1].
    pub fn cart_mass(&self, xi: f64) -> f64 {
        self.mass_min + (self.mass_max - self.mass_min) * xi
    }

    fn denominator(&self, mass: f64) -> f64 {
        self.inertia * (mass + self.m) + mass * self.m * self.l * self.l
    }

    /// A(M) as printed for the discretized cart-pole.
    #[rustfmt::skip]
    pub fn a_matrix(&self, mass: f64) -> DMatrix<f64> {
        let (m, l, b, i, g, d) = (self.m, self.l, self.friction, self.inertia, self.g, self.delta);
        let den = self.denominator(mass);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, d, 0.0, 0.0,
                0.0, 1.0 - (i + m * l * l) * b * d / den, m * m * g * l * l * d / den, 0.0,
                0.0, 0.0, 1.0, d,
                0.0, -m * l * b * d / den, m * g * l * (mass + m) * d / den, 1.0,
            ],
        )
    }

    pub fn b_matrix(&self, mass: f64) -> DMatrix<f64> {
        let (m, l, i, d) = (self.m, self.l, self.inertia, self.delta);
        let den = self.denominator(mass);
        DMatrix::from_column_slice(4, 1, &[0.0, (i + m * l * l) * d / den, 0.0, m * l * d / den])
    }

    /// Closed form |det[B, AB, A²B, A³B]| = δ¹⁰g²l⁴m⁴ / (IM + m(I + l²M))⁴.
    pub fn controllability_determinant(&self, mass: f64) -> f64 {
        let (m, l, i, g, d) = (self.m, self.l, self.inertia, self.g, self.delta);
        d.powi(10) * g * g * l.powi(4) * m.powi(4) / (i * mass + m * (i + l * l * mass)).powi(4)
    }
}

/// Cart-pole with unknown cart mass; Q = I₄, R = 1, P = I₄, x̄ = 0, w = 0.
#[derive(Debug, Clone)]
pub struct PendulumSystem {
    pub params: PendulumParams,
    pbox: ParamBox,
    constants: DeclaredConstants,
}

impl PendulumSystem {
    pub fn new(params: PendulumParams) -> Result<Self> {
        params.validate()?;
        let pbox = ParamBox::unit_interval();
        let constants = sweep_constants(|xi| stage_at(&params, xi), DMatrix::identity(4, 4));
        Ok(Self {
            params,
            pbox,
            constants,
        })
    }
}

fn stage_at(params: &PendulumParams, xi: f64) -> StageData {
    let mass = params.cart_mass(xi);
    StageData {
        a: params.a_matrix(mass),
        b: params.b_matrix(mass),
        w: DVector::zeros(4),
        q: DMatrix::identity(4, 4),
        r: DMatrix::identity(1, 1),
        x_ref: DVector::zeros(4),
    }
}

/// Builds the cart-pole family.
pub fn pendulum_system(params: PendulumParams) -> Result<PendulumSystem> {
    PendulumSystem::new(params)
}

impl LqFamily for PendulumSystem {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn stage(&self, _t: usize, xi: &DVector<f64>) -> StageData {
        stage_at(&self.params, xi[0])
    }

    fn terminal(&self, _xi: &DVector<f64>) -> TerminalData {
        TerminalData {
            p: DMatrix::identity(4, 4),
            x_ref: DVector::zeros(4),
        }
    }

    fn constants(&self) -> &DeclaredConstants {
        &self.constants
    }

    fn param_box(&self) -> &ParamBox {
        &self.pbox
    }

    fn matrices_depend_on_params(&self) -> bool {
        self.params.mass_max > self.params.mass_min
    }
}
