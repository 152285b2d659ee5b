//! Instance description files (TOML).
//!
//! ```toml
//! name = "small-disturbance"
//! horizon = 20
//! seed = 7
//! initial_state = [0.5, -0.3]
//!
//! [system]
//! kind = "disturbance"
//! a = [[0.9, 0.2], [0.0, 0.8]]
//! b = [[0.0], [1.0]]
//! q = [[1.0, 0.0], [0.0, 1.0]]
//! r = [[1.0]]
//! p = [[1.0, 0.0], [0.0, 1.0]]
//! w_map = [[0.5, 0.0], [0.0, 0.5]]
//! param_lower = [-0.5, -0.5]
//! param_upper = [0.5, 0.5]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::examples::{grid_system, pendulum_system, GridParams, PendulumParams};
use crate::param::{ParamBox, ParamSeq};
use crate::system::{ActionBounds, DisturbanceSystem, Instance, InventorySystem, System, TrackingSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDescription {
    pub name: String,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the origin.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    /// Ground truth ξ_0..ξ_T in user coordinates; sampled from the box when absent.
    #[serde(default)]
    pub truth: Option<Vec<Vec<f64>>>,
    pub system: SystemDescription,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemDescription {
    /// Random tracking family drawn from `family_seed` (defaults to the instance seed).
    Tracking {
        n: usize,
        m: usize,
        param_dim: usize,
        mu: f64,
        ell: f64,
        #[serde(default)]
        family_seed: Option<u64>,
    },
    /// Time-invariant (A, B) with disturbance w = W ξ.
    Disturbance {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        p: Vec<Vec<f64>>,
        w_map: Vec<Vec<f64>>,
        param_lower: Vec<f64>,
        param_upper: Vec<f64>,
    },
    Inventory {
        two_sided: bool,
        #[serde(default = "default_lower")]
        action_lower: f64,
        #[serde(default = "default_upper")]
        action_upper: f64,
        #[serde(default)]
        action_weight: f64,
        #[serde(default = "default_true")]
        include_terminal_stage: bool,
        /// Targets ξ_0..ξ_T; alternating ∓4/5 when absent.
        #[serde(default)]
        targets: Option<Vec<f64>>,
    },
    Pendulum {
        #[serde(flatten)]
        params: PendulumParams,
    },
    Grid {
        #[serde(flatten)]
        params: GridParams,
    },
}

fn default_lower() -> f64 {
    -0.8
}

fn default_upper() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidConfig(format!("matrix `{name}` is empty")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dim(format!("row length of `{name}`"), ncols, bad.len()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vectors(values: &[Vec<f64>], scale: f64) -> Result<ParamSeq> {
    ParamSeq::new(values.iter().map(|v| DVector::from_column_slice(v) / scale).collect())
}

fn sampled(pbox: &ParamBox, horizon: usize, seed: u64) -> Result<ParamSeq> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParamSeq::new((0..=horizon).map(|_| pbox.sample(&mut rng)).collect())
}

fn check_truth_len(truth: &Option<Vec<Vec<f64>>>, horizon: usize) -> Result<()> {
    match truth {
        Some(t) if t.len() != horizon + 1 => Err(Error::dim("truth length", horizon + 1, t.len())),
        _ => Ok(()),
    }
}

/// Builds the system, realizes the ground truth and checks dimensions.
pub fn build_instance(desc: &InstanceDescription) -> Result<Instance> {
    let horizon = desc.horizon;
    if horizon < 2 {
        return Err(Error::InvalidConfig(format!("horizon must be at least 2, got {horizon}")));
    }
    check_truth_len(&desc.truth, horizon)?;
    let seed = desc.seed;
    let (system, truth) = match &desc.system {
        SystemDescription::Tracking {
            n,
            m,
            param_dim,
            mu,
            ell,
            family_seed,
        } => {
            let family = TrackingSystem::random(*n, *m, *param_dim, *mu, *ell, family_seed.unwrap_or(seed))?;
            let truth = match &desc.truth {
                Some(v) => vectors(v, 1.0)?,
                None => family.sample_truth(horizon, seed),
            };
            (System::quadratic(family), truth)
        }
        SystemDescription::Disturbance {
            a,
            b,
            q,
            r,
            p,
            w_map,
            param_lower,
            param_upper,
        } => {
            let user_box = ParamBox::new(DVector::from_column_slice(param_lower), DVector::from_column_slice(param_upper))?;
            // rescale so the box has diameter at most one; w = W ξ is unchanged
            let scale = user_box.diameter().max(1.0);
            let pbox = ParamBox::new(&user_box.lower / scale, &user_box.upper / scale)?;
            let family = DisturbanceSystem::new(
                vec![matrix("a", a)?],
                vec![matrix("b", b)?],
                matrix("q", q)?,
                matrix("r", r)?,
                matrix("p", p)?,
                matrix("w_map", w_map)? * scale,
                pbox.clone(),
            )?;
            let truth = match &desc.truth {
                Some(v) => vectors(v, scale)?,
                None => sampled(&pbox, horizon, seed)?,
            };
            (System::quadratic(family), truth)
        }
        SystemDescription::Inventory {
            two_sided,
            action_lower,
            action_upper,
            action_weight,
            include_terminal_stage,
            targets,
        } => {
            let bounds = if *two_sided {
                ActionBounds::TwoSided {
                    lower: *action_lower,
                    upper: *action_upper,
                }
            } else {
                ActionBounds::OneSided { lower: *action_lower }
            };
            let sys = InventorySystem::new(bounds, *action_weight, *include_terminal_stage)?;
            let targets = targets
                .clone()
                .unwrap_or_else(|| InventorySystem::alternating_targets(horizon));
            if targets.len() != horizon + 1 {
                return Err(Error::dim("inventory targets", horizon + 1, targets.len()));
            }
            let truth = ParamSeq::new(targets.into_iter().map(|v| DVector::from_element(1, v)).collect())?;
            (System::Inventory(sys), truth)
        }
        SystemDescription::Pendulum { params } => {
            let family = pendulum_system(params.clone())?;
            let truth = match &desc.truth {
                Some(v) => vectors(v, 1.0)?,
                None => sampled(&ParamBox::unit_interval(), horizon, seed)?,
            };
            (System::quadratic(family), truth)
        }
        SystemDescription::Grid { params } => {
            let family = grid_system(params.clone())?;
            let truth = match &desc.truth {
                Some(v) => vectors(v, 1.0)?,
                None => sampled(&ParamBox::unit_interval(), horizon, seed)?,
            };
            (System::quadratic(family), truth)
        }
    };
    let x0 = match &desc.initial_state {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(system.state_dim()),
    };
    Instance::new(desc.name.clone(), system, truth, x0, seed)
}

pub fn parse_instance(text: &str) -> Result<InstanceDescription> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("instance file: {e}")))
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    build_instance(&parse_instance(&text)?)
}
