//! Parameter sequences, admissible parameter boxes and the noisy prediction stream.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth or predicted parameters ξ_0, ..., ξ_T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSeq {
    values: Vec<DVector<f64>>,
}

impl ParamSeq {
    pub fn new(values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidConfig(
                "a parameter sequence needs at least two entries".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Every step carries the same constant parameter.
    pub fn constant(value: DVector<f64>, horizon: usize) -> Self {
        Self {
            values: vec![value; horizon + 1],
        }
    }

    pub fn zeros(dim: usize, horizon: usize) -> Self {
        Self::constant(DVector::zeros(dim), horizon)
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dim(&self, t: usize) -> usize {
        self.values[t].len()
    }

    pub fn get(&self, t: usize) -> &DVector<f64> {
        &self.values[t]
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// ξ_{start..=end}.
    pub fn window(&self, start: usize, end: usize) -> Vec<DVector<f64>> {
        self.values[start..=end].to_vec()
    }

    pub fn check_dims(&self, dim: usize) -> Result<()> {
        match self.values.iter().find(|v| v.len() != dim) {
            Some(v) => Err(Error::dim("parameter vector", dim, v.len())),
            None => Ok(()),
        }
    }
}

/// Axis-aligned admissible parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl ParamBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("parameter box", lower.len(), upper.len()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidConfig("parameter box has lower > upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Centered cube of diameter one in `dim` dimensions.
    pub fn centered_unit(dim: usize) -> Self {
        let half = 0.5 / (dim as f64).sqrt();
        Self {
            lower: DVector::from_element(dim, -half),
            upper: DVector::from_element(dim, half),
        }
    }

    /// The interval [0, 1].
    pub fn unit_interval() -> Self {
        Self {
            lower: DVector::from_element(1, 0.0),
            upper: DVector::from_element(1, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    /// Largest Euclidean norm of a point in the box.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute value of coordinate `j` over the box.
    pub fn max_abs(&self, j: usize) -> f64 {
        self.lower[j].abs().max(self.upper[j].abs())
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, xi: &DVector<f64>, tol: f64) -> bool {
        xi.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(self.upper.iter())
                .map(|(l, u)| if u > l { rng.gen_range(*l..=*u) } else { *l }),
        )
    }

    /// Normalized box with diameter at most one and the affine map back to user coordinates.
    ///
    /// Returns `(box, scale)`: a user point is `lower + scale * xi` for `xi` in the returned box.
    pub fn normalized(&self) -> (ParamBox, f64) {
        let diam = self.diameter();
        let scale = if diam > 1.0 { diam } else { 1.0 };
        let lower = DVector::zeros(self.dim());
        let upper = (&self.upper - &self.lower) / scale;
        (ParamBox { lower, upper }, scale)
    }
}

/// Prediction error magnitudes ρ(t, τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSchedule {
    Zero,
    Constant { rho: f64 },
    /// ρ(t, τ) = values[τ]; zero beyond the table.
    PerOffset { values: Vec<f64> },
    /// ρ(t, τ) = values[t][τ]; zero beyond the table.
    Table { values: Vec<Vec<f64>> },
}

impl NoiseSchedule {
    /// Error magnitude for the τ-step prediction made at time t, zero past the horizon.
    pub fn rho(&self, t: usize, offset: usize, horizon: usize) -> f64 {
        if t + offset > horizon {
            return 0.0;
        }
        match self {
            NoiseSchedule::Zero => 0.0,
            NoiseSchedule::Constant { rho } => *rho,
            NoiseSchedule::PerOffset { values } => values.get(offset).copied().unwrap_or(0.0),
            NoiseSchedule::Table { values } => values
                .get(t)
                .and_then(|row| row.get(offset))
                .copied()
                .unwrap_or(0.0),
        }
    }

    pub fn scaled(&self, s: f64) -> NoiseSchedule {
        match self {
            NoiseSchedule::Zero => NoiseSchedule::Zero,
            NoiseSchedule::Constant { rho } => NoiseSchedule::Constant { rho: rho * s },
            NoiseSchedule::PerOffset { values } => NoiseSchedule::PerOffset {
                values: values.iter().map(|v| v * s).collect(),
            },
            NoiseSchedule::Table { values } => NoiseSchedule::Table {
                values: values
                    .iter()
                    .map(|row| row.iter().map(|v| v * s).collect())
                    .collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |v: f64| !(v >= 0.0 && v.is_finite());
        let any_bad = match self {
            NoiseSchedule::Zero => false,
            NoiseSchedule::Constant { rho } => bad(*rho),
            NoiseSchedule::PerOffset { values } => values.iter().copied().any(bad),
            NoiseSchedule::Table { values } => values.iter().flatten().copied().any(bad),
        };
        if any_bad {
            Err(Error::InvalidConfig(
                "noise magnitudes must be finite and nonnegative".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// P(τ) = Σ_{t=0}^{T-τ} ρ(t, τ)².
    pub fn power(&self, offset: usize, horizon: usize) -> f64 {
        if offset > horizon {
            return 0.0;
        }
        (0..=horizon - offset)
            .map(|t| self.rho(t, offset, horizon).powi(2))
            .sum()
    }
}

/// Predictions ξ_{t+τ|t} = ξ*_{t+τ} + ρ(t, τ)·d_{t,τ} with random unit directions d.
///
/// Directions depend only on the seed and (t, τ), so rescaling the schedule moves every
/// prediction along the same ray.
#[derive(Debug, Clone)]
pub struct PredictionStream {
    truth: ParamSeq,
    schedule: NoiseSchedule,
    seed: u64,
    directions: Vec<Vec<DVector<f64>>>,
}

impl PredictionStream {
    pub fn new(truth: ParamSeq, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        let horizon = truth.horizon();
        let directions = (0..=horizon)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                (0..=horizon - t)
                    .map(|offset| unit_direction(&mut rng, truth.dim(t + offset)))
                    .collect()
            })
            .collect();
        Ok(Self {
            truth,
            schedule,
            seed,
            directions,
        })
    }

    pub fn exact(truth: ParamSeq) -> Self {
        Self::new(truth, NoiseSchedule::Zero, 0).expect("zero schedule is valid")
    }

    pub fn truth(&self) -> &ParamSeq {
        &self.truth
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> usize {
        self.truth.horizon()
    }

    pub fn rho(&self, t: usize, offset: usize) -> f64 {
        self.schedule.rho(t, offset, self.horizon())
    }

    /// ξ_{t+τ|t}.
    pub fn prediction(&self, t: usize, offset: usize) -> DVector<f64> {
        let truth = self.truth.get(t + offset);
        let rho = self.rho(t, offset);
        if rho == 0.0 {
            truth.clone()
        } else {
            truth + &self.directions[t][offset] * rho
        }
    }

    /// ξ_{t:end|t}.
    pub fn window(&self, t: usize, end: usize) -> Vec<DVector<f64>> {
        (0..=end - t).map(|offset| self.prediction(t, offset)).collect()
    }

    /// P(τ) implied by the schedule.
    pub fn power(&self, offset: usize) -> f64 {
        self.schedule.power(offset, self.horizon())
    }

    /// P(τ) recomputed from the realized predictions.
    pub fn realized_power(&self, offset: usize) -> f64 {
        let horizon = self.horizon();
        if offset > horizon {
            return 0.0;
        }
        (0..=horizon - offset)
            .map(|t| (self.prediction(t, offset) - self.truth.get(t + offset)).norm_squared())
            .sum()
    }
}

/// Uniform direction on the unit sphere.
pub fn unit_direction<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> ParamSeq {
        ParamSeq::new(
            (0..=6)
                .map(|t| DVector::from_vec(vec![t as f64 * 0.1, -0.2]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_schedule_is_bitwise_truth() {
        let stream = PredictionStream::new(truth(), NoiseSchedule::Zero, 5).unwrap();
        for t in 0..=6 {
            for offset in 0..=6 - t {
                assert_eq!(stream.prediction(t, offset), *stream.truth().get(t + offset));
            }
        }
    }

    #[test]
    fn magnitude_is_exact() {
        let stream = PredictionStream::new(truth(), NoiseSchedule::Constant { rho: 0.3 }, 1).unwrap();
        let err = (stream.prediction(2, 3) - stream.truth().get(5)).norm();
        assert!((err - 0.3).abs() < 1e-14);
    }

    #[test]
    fn rho_vanishes_past_horizon() {
        let s = NoiseSchedule::Constant { rho: 1.0 };
        assert_eq!(s.rho(4, 3, 6), 0.0);
        assert_eq!(s.rho(3, 3, 6), 1.0);
    }

    #[test]
    fn normalized_box_has_unit_diameter() {
        let b = ParamBox::new(DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![3.0, 5.0])).unwrap();
        let (nb, scale) = b.normalized();
        assert!((nb.diameter() - 1.0).abs() < 1e-15);
        assert!((scale - 5.0).abs() < 1e-15);
        assert!((ParamBox::centered_unit(3).diameter() - 1.0).abs() < 1e-15);
    }
}
