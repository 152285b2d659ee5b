//! Named instances loadable by the CLI.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{grid_system, pendulum_system, GridParams, PendulumParams};
use crate::error::{Error, Result};
use crate::param::{ParamBox, ParamSeq};
use crate::system::{DisturbanceSystem, Instance, InventorySystem, System, TrackingSystem};

pub const PRESET_NAMES: [&str; 6] = [
    "inventory-two-sided",
    "inventory-one-sided",
    "tracking-rand",
    "pendulum",
    "grid",
    "disturbance",
];

pub fn preset_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "inventory-two-sided" => "scalar inventory chain, u in [-4/5, 4/5], alternating targets, T = 8",
        "inventory-one-sided" => "scalar inventory chain, u >= -4/5, action weight 1, alternating targets, T = 12",
        "tracking-rand" => "random quadratic tracking family, n = 2, m = 1, d = 2, mu = 0.5, ell = 2, T = 40",
        "pendulum" => "linearized cart-pole with unknown cart mass in [0.5, 1], T = 30",
        "grid" => "frequency regulation on a 3-node path with inertia in [1, 2], T = 30",
        "disturbance" => "time-varying 2-state system with predicted disturbances, T = 60",
        _ => return None,
    })
}

fn uniform_truth(pbox: &ParamBox, horizon: usize, seed: u64) -> Result<ParamSeq> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParamSeq::new((0..=horizon).map(|_| pbox.sample(&mut rng)).collect())
}

fn inventory(name: &str, sys: InventorySystem, horizon: usize, seed: u64) -> Result<Instance> {
    let truth = ParamSeq::new(
        InventorySystem::alternating_targets(horizon)
            .into_iter()
            .map(|v| DVector::from_element(1, v))
            .collect(),
    )?;
    Instance::new(name, System::Inventory(sys), truth, DVector::zeros(1), seed)
}

/// Contracting, slowly varying dynamics driven by one actuator that reaches both states.
pub(crate) fn disturbance_family(horizon: usize) -> Result<DisturbanceSystem> {
    let (a, b): (Vec<_>, Vec<_>) = (0..horizon.max(1))
        .map(|t| {
            let phase = 0.3 * t as f64;
            let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.2 + 0.1 * phase.sin(), -0.1, 0.25]);
            let b = DMatrix::from_column_slice(2, 1, &[0.5 + 0.1 * phase.cos(), 1.0]);
            (a, b)
        })
        .unzip();
    DisturbanceSystem::new(
        a,
        b,
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2) * 0.5,
        ParamBox::centered_unit(2),
    )
}

/// Builds a preset; `horizon` overrides its default T.
pub fn preset(name: &str, horizon: Option<usize>, seed: u64) -> Result<Instance> {
    match name {
        "inventory-two-sided" => inventory(name, InventorySystem::two_sided(), horizon.unwrap_or(8), seed),
        "inventory-one-sided" => inventory(name, InventorySystem::one_sided(1.0), horizon.unwrap_or(12), seed),
        "tracking-rand" => {
            let horizon = horizon.unwrap_or(40);
            let family = TrackingSystem::random(2, 1, 2, 0.5, 2.0, seed)?;
            let truth = family.sample_truth(horizon, seed);
            Instance::new(name, System::quadratic(family), truth, DVector::from_vec(vec![0.5, -0.5]), seed)
        }
        "pendulum" => {
            let horizon = horizon.unwrap_or(30);
            let family = pendulum_system(PendulumParams::default())?;
            let truth = uniform_truth(&ParamBox::unit_interval(), horizon, seed)?;
            let x0 = DVector::from_vec(vec![0.1, 0.0, 0.05, 0.0]);
            Instance::new(name, System::quadratic(family), truth, x0, seed)
        }
        "grid" => {
            let horizon = horizon.unwrap_or(30);
            let family = grid_system(GridParams::path(3, 1.0, 2.0, 0.1))?;
            let truth = uniform_truth(&ParamBox::unit_interval(), horizon, seed)?;
            let x0 = DVector::from_vec(vec![0.2, -0.1, 0.0, 0.0, 0.1, -0.2]);
            Instance::new(name, System::quadratic(family), truth, x0, seed)
        }
        "disturbance" => {
            let horizon = horizon.unwrap_or(60);
            let family = disturbance_family(horizon)?;
            let truth = uniform_truth(&family.pbox, horizon, seed)?;
            Instance::new(name, System::quadratic(family), truth, DVector::from_vec(vec![0.5, -0.3]), seed)
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown preset `{other}`; expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}
