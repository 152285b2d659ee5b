use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::KktAssembly;
use crate::error::{Error, Result};
use crate::fit::log_linear_fit;
use crate::linalg::spectral_norm;

/// Relative slack allowed when re-checking domination.
const DOMINATION_SLACK: f64 = 1e-9;

/// Geometric envelope C·λ^offset fitted to a per-offset profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub c: f64,
    pub lambda: f64,
    pub r_squared: f64,
    pub profile: Vec<f64>,
}

impl DecayFit {
    /// Least squares on the log of the positive entries, then C inflated until the envelope dominates.
    pub fn fit(profile: &[f64]) -> Self {
        let peak = profile.iter().copied().fold(0.0, f64::max);
        let floor = peak * 1e-14;
        let xs: Vec<f64> = (0..profile.len()).map(|i| i as f64).collect();
        let positive_offsets = profile.iter().skip(1).filter(|v| **v > floor).count();
        let (lambda, r_squared) = if positive_offsets == 0 {
            (0.0, 1.0)
        } else {
            match log_linear_fit(&xs, profile, floor) {
                Some(f) => (f.slope.exp(), f.r_squared),
                None => (0.0, 1.0),
            }
        };
        let c = profile
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, v)| v / lambda.powi(i as i32))
            .fold(0.0, f64::max);
        Self {
            c,
            lambda,
            r_squared,
            profile: profile.to_vec(),
        }
    }

    pub fn envelope(&self, offset: usize) -> f64 {
        self.c * self.lambda.powi(offset as i32)
    }

    pub fn dominates(&self, profile: &[f64]) -> bool {
        profile
            .iter()
            .enumerate()
            .all(|(i, v)| *v <= self.envelope(i) * (1.0 + DOMINATION_SLACK))
    }
}

/// Norms of all blocks of Υ⁻¹ and their per-offset maxima.
#[derive(Debug, Clone, Serialize)]
pub struct BlockProfile {
    /// norms[i][j] = ‖(Υ⁻¹)_{ij}‖.
    pub norms: Vec<Vec<f64>>,
    /// Maximum block norm for each |i − j|.
    pub per_offset: Vec<f64>,
    pub fit: DecayFit,
    pub symmetry_error: f64,
}

pub fn block_inverse_profile(assembly: &KktAssembly) -> Result<BlockProfile> {
    let singular = || Error::SingularKkt {
        start: assembly.start,
        end: assembly.end,
    };
    let inverse: DMatrix<f64> = assembly.upsilon.clone().try_inverse().ok_or_else(singular)?;
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let blocks = assembly.blocks();
    let (offs, sizes) = (&assembly.block_offsets, &assembly.block_sizes);
    let norms: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|i| {
            (0..blocks)
                .map(|j| spectral_norm(&inverse.view((offs[i], offs[j]), (sizes[i], sizes[j])).into_owned()))
                .collect()
        })
        .collect();
    let mut per_offset = vec![0.0; blocks];
    for (i, row) in norms.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let d = i.abs_diff(j);
            per_offset[d] = f64::max(per_offset[d], *v);
        }
    }
    let scale = inverse.amax().max(1.0);
    let symmetry_error = (&inverse - inverse.transpose()).amax() / scale;
    let fit = DecayFit::fit(&per_offset);
    Ok(BlockProfile {
        norms,
        per_offset,
        fit,
        symmetry_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_profile_has_zero_rate() {
        let fit = DecayFit::fit(&[2.0, 0.0, 0.0]);
        assert_eq!(fit.lambda, 0.0);
        assert_eq!(fit.c, 2.0);
        assert!(fit.dominates(&[2.0, 0.0, 0.0]));
    }

    #[test]
    fn fit_dominates_noisy_decay() {
        let profile: Vec<f64> = (0..10)
            .map(|i| 3.0 * 0.6f64.powi(i) * if i % 2 == 0 { 1.3 } else { 0.8 })
            .collect();
        let fit = DecayFit::fit(&profile);
        assert!(fit.dominates(&profile));
        assert!(fit.lambda > 0.5 && fit.lambda < 0.7);
    }

    #[test]
    fn flat_profile_does_not_decay() {
        let fit = DecayFit::fit(&[1.0; 6]);
        assert!((fit.lambda - 1.0).abs() < 1e-12);
    }
}
