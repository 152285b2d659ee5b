use serde::Serialize;

use super::KktAssembly;
use crate::error::{Error, Result};
use crate::linalg::{singular_range, sym_eig_range};
use crate::system::{DeclaredConstants, Lipschitz};

fn ensure_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}

fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}

/// Lower and upper bounds on the singular values of [[M, Nᵀ], [N, 0]].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleSpectrum {
    /// min(σ̲_M, 1)·σ̄_N·√(σ̄_M / (2σ̲_Mσ̄_M + σ̲_Mσ̲_N²)); not a valid bound in general.
    pub nominal_lower: f64,
    /// min(σ̲_M, 1)·σ̲_N·√(σ̲_M / (2σ̲_Mσ̄_M + σ̄_Mσ̄_N²)); holds for every saddle matrix with these block spectra.
    pub certified_lower: f64,
    /// √2 (σ̄_M + σ̄_N).
    pub upper: f64,
}

/// Singular-value bounds of the saddle matrix from the spectra of its blocks.
pub fn block_matrix_spectrum_bounds(m_lower: f64, m_upper: f64, n_lower: f64, n_upper: f64) -> Result<SaddleSpectrum> {
    ensure_positive("sigma_M lower", m_lower)?;
    ensure_positive("sigma_N lower", n_lower)?;
    if m_upper < m_lower || n_upper < n_lower {
        return Err(Error::InvalidConfig("spectrum bounds need lower <= upper".into()));
    }
    let floor = m_lower.min(1.0);
    Ok(SaddleSpectrum {
        nominal_lower: floor * n_upper * (m_upper / (2.0 * m_lower * m_upper + m_lower * n_lower * n_lower)).sqrt(),
        certified_lower: floor * n_lower * (m_lower / (2.0 * m_lower * m_upper + m_upper * n_upper * n_upper)).sqrt(),
        upper: std::f64::consts::SQRT_2 * (m_upper + n_upper),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpectrumSource {
    Declared,
    Measured,
}

/// Uniform singular-value bounds σ̲_H ≤ σ(H) ≤ σ̄_H plus σ̄_R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumBounds {
    pub sigma_lower: f64,
    pub sigma_upper: f64,
    pub sigma_r_upper: f64,
    pub source: SpectrumSource,
}

impl SpectrumBounds {
    pub fn declared(sigma_lower: f64, sigma_upper: f64, sigma_r_upper: f64) -> Result<Self> {
        ensure_positive("sigma_H lower", sigma_lower)?;
        ensure_positive("sigma_R upper", sigma_r_upper)?;
        if sigma_upper < sigma_lower {
            return Err(Error::InvalidConfig("sigma_H lower exceeds upper".into()));
        }
        Ok(Self {
            sigma_lower,
            sigma_upper,
            sigma_r_upper,
            source: SpectrumSource::Declared,
        })
    }

    /// Bounds from the measured spectra of M and N; σ̄_R is taken as max(σ̄_M, σ̄_N).
    pub fn measured(assembly: &KktAssembly) -> Result<Self> {
        let (m_lo, m_hi) = sym_eig_range(&assembly.cost);
        let (n_lo, n_hi) = singular_range(&assembly.dynamics);
        let saddle = block_matrix_spectrum_bounds(m_lo, m_hi, n_lo, n_hi)?;
        Ok(Self {
            sigma_lower: saddle.certified_lower,
            sigma_upper: saddle.upper,
            sigma_r_upper: m_hi.max(n_hi),
            source: SpectrumSource::Measured,
        })
    }
}

/// Inputs of the KKT-inverse decay constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayInputs {
    pub mu: f64,
    pub ell: f64,
    pub a: f64,
    pub b: f64,
    /// Uniform lower bound on σ_min(N) and σ_min(N̂).
    pub sigma: f64,
    pub lipschitz: Lipschitz,
}

impl DecayInputs {
    pub fn from_declared(c: &DeclaredConstants, sigma: f64) -> Self {
        Self {
            mu: c.mu,
            ell: c.ell,
            a: c.a,
            b: c.b,
            sigma,
            lipschitz: c.lipschitz.clone(),
        }
    }
}

/// Decay constants (λ₂, C₂, C₂′) together with the spectrum bounds they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstants {
    pub lambda: f64,
    pub c2: f64,
    pub c2_prime: f64,
    pub sigma_lower: f64,
    pub sigma_upper: f64,
    /// λ₂ = 0, which makes C₂ infinite.
    pub degenerate: bool,
}

impl DecayConstants {
    /// C₂ λ₂^offset.
    pub fn bound(&self, offset: usize) -> f64 {
        self.c2 * self.lambda.powi(offset as i32)
    }
}

/// Evaluates λ₂, C₂, C₂′ from given σ̲_H, σ̄_H.
pub fn decay_from_spectrum(
    sigma_lower: f64,
    sigma_upper: f64,
    ell: f64,
    a: f64,
    b: f64,
    lipschitz: &Lipschitz,
) -> Result<DecayConstants> {
    ensure_positive("sigma_H lower", sigma_lower)?;
    if sigma_upper < sigma_lower {
        return Err(Error::InvalidConfig("sigma_H lower exceeds upper".into()));
    }
    let lambda = ((sigma_upper - sigma_lower) / (sigma_upper + sigma_lower)).sqrt();
    let degenerate = lambda == 0.0;
    let c2 = 4.0 * (ell + 1.0 + a + b) / (sigma_lower * sigma_lower * lambda);
    let lip = lipschitz;
    let c2_prime = c2 * c2 * ((lip.q + lip.r).max(lip.p) + 2.0 / lambda * (lip.a + lip.b));
    Ok(DecayConstants {
        lambda,
        c2,
        c2_prime,
        sigma_lower,
        sigma_upper,
        degenerate,
    })
}

/// Closed-form decay constants of the inverse KKT matrix from the declared bounds.
pub fn closed_form_decay(inputs: &DecayInputs) -> Result<DecayConstants> {
    ensure_positive("mu", inputs.mu)?;
    ensure_positive("ell", inputs.ell)?;
    ensure_positive("sigma", inputs.sigma)?;
    ensure_nonnegative("a", inputs.a)?;
    ensure_nonnegative("b", inputs.b)?;
    let lip = &inputs.lipschitz;
    for (name, v) in [
        ("L_A", lip.a),
        ("L_B", lip.b),
        ("L_Q", lip.q),
        ("L_R", lip.r),
        ("L_P", lip.p),
    ] {
        ensure_nonnegative(name, v)?;
    }
    if inputs.mu > inputs.ell {
        return Err(Error::InvalidConfig("mu must not exceed ell".into()));
    }
    let (mu, ell, a, b, sigma) = (inputs.mu, inputs.ell, inputs.a, inputs.b, inputs.sigma);
    let sigma_lower = mu.min(1.0) * (a + b + 1.0) * (ell / (2.0 * mu * ell + mu * sigma * sigma)).sqrt();
    let sigma_upper = std::f64::consts::SQRT_2 * (ell + a + b + 1.0);
    decay_from_spectrum(sigma_lower, sigma_upper, ell, a, b, lip)
}

/// H₃ and λ₃ of the decay estimate for general constrained windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneralDecay {
    pub h3: f64,
    pub lambda3: f64,
}

pub fn closed_form_general_decay(sigma_lower: f64, sigma_upper: f64, sigma_r_upper: f64) -> Result<GeneralDecay> {
    ensure_positive("sigma_H lower", sigma_lower)?;
    ensure_positive("sigma_R upper", sigma_r_upper)?;
    if sigma_upper < sigma_lower {
        return Err(Error::InvalidConfig("sigma_H lower exceeds upper".into()));
    }
    let (lo2, hi2) = (sigma_lower * sigma_lower, sigma_upper * sigma_upper);
    Ok(GeneralDecay {
        h3: (sigma_upper * sigma_r_upper / lo2).sqrt(),
        lambda3: ((hi2 - lo2) / (hi2 + lo2)).powf(0.125),
    })
}

/// Sensitivity constant H₂ of parameter-dependent families for ball radius `radius`.
pub fn tracking_sensitivity(decay: &DecayConstants, c: &DeclaredConstants, radius: f64, d_xstar: f64) -> f64 {
    let lip = &c.lipschitz;
    decay.c2_prime * (2.0 * (c.ell * c.d_xref + c.d_w) / (1.0 - decay.lambda) + radius + d_xstar + 1.0)
        + decay.c2 * (lip.w + c.ell * lip.x_ref + c.d_xref * lip.q + 1.0)
}

/// Sufficient conditions on the noise and the horizon for the tracking regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingThresholds {
    pub h2: f64,
    /// Bound on Σ_τ λ₂^τ ρ_{t,τ}.
    pub noise_budget: f64,
    /// Bound on λ₂^k.
    pub horizon_budget: f64,
    /// Smallest k with λ₂^k within budget; `None` when λ₂ ≥ 1.
    pub min_horizon: Option<usize>,
}

/// Evaluates the sufficient conditions with R = D_{x*} + D_x̄.
pub fn tracking_thresholds(decay: &DecayConstants, c: &DeclaredConstants, d_xstar: f64, action_lipschitz: f64) -> TrackingThresholds {
    let lam = decay.lambda;
    let h2 = tracking_sensitivity(decay, c, d_xstar + c.d_xref, d_xstar);
    let span = d_xstar + c.d_xref;
    let denom = h2 * h2 * action_lipschitz * ((1.0 - lam) * span + h2 * (d_xstar + 1.0));
    let noise_budget = (1.0 - lam).powi(2) * span / (2.0 * denom);
    let horizon_budget = (1.0 - lam).powi(2) / (4.0 * denom);
    let min_horizon = (lam > 0.0 && lam < 1.0 && horizon_budget > 0.0)
        .then(|| (horizon_budget.ln() / lam.ln()).ceil().max(0.0) as usize);
    TrackingThresholds {
        h2,
        noise_budget,
        horizon_budget,
        min_horizon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Second transcription of the decay constants, written term by term.
    fn g2_oracle(mu: f64, ell: f64, a: f64, b: f64, sigma: f64, lip: [f64; 5]) -> [f64; 5] {
        let [la, lb, lq, lr, lp] = lip;
        let m = if mu < 1.0 { mu } else { 1.0 };
        let radicand = ell / (mu * (2.0 * ell + sigma.powi(2)));
        let lo = m * (1.0 + a + b) * radicand.sqrt();
        let hi = 2f64.sqrt() * (1.0 + a + b + ell);
        let lam = ((hi - lo) / (hi + lo)).powf(0.5);
        let c2 = 4.0 * (1.0 + a + b + ell) / (lo.powi(2) * lam);
        let worst = if lq + lr > lp { lq + lr } else { lp };
        let c2p = c2.powi(2) * (worst + 2.0 * (la + lb) / lam);
        [lam, c2, c2p, lo, hi]
    }

    fn inputs(mu: f64, ell: f64, a: f64, b: f64, sigma: f64) -> DecayInputs {
        DecayInputs {
            mu,
            ell,
            a,
            b,
            sigma,
            lipschitz: Lipschitz {
                a: 0.3,
                b: 0.2,
                q: 0.1,
                r: 0.4,
                p: 0.7,
                ..Lipschitz::default()
            },
        }
    }

    #[test]
    fn unit_inputs_upper_bound() {
        let g = closed_form_decay(&inputs(1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((g.sigma_upper - 4.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((g.sigma_upper - 5.65685).abs() < 1e-5);
    }

    #[test]
    fn matches_second_transcription() {
        let g = closed_form_decay(&inputs(0.5, 2.0, 1.0, 1.0, 0.5)).unwrap();
        let o = g2_oracle(0.5, 2.0, 1.0, 1.0, 0.5, [0.3, 0.2, 0.1, 0.4, 0.7]);
        for (x, y) in [g.lambda, g.c2, g.c2_prime, g.sigma_lower, g.sigma_upper].iter().zip(o) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
        let again = closed_form_decay(&inputs(0.5, 2.0, 1.0, 1.0, 0.5)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn equal_spectrum_bounds_are_degenerate() {
        let g = decay_from_spectrum(2.0, 2.0, 1.0, 1.0, 1.0, &Lipschitz::default()).unwrap();
        assert_eq!(g.lambda, 0.0);
        assert!(g.degenerate);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(closed_form_decay(&inputs(0.0, 1.0, 1.0, 1.0, 1.0)).is_err());
        assert!(closed_form_decay(&inputs(1.0, 1.0, 1.0, 1.0, -1.0)).is_err());
    }

    #[test]
    fn h2_closed_form() {
        let h = closed_form_general_decay(1.0, 2.0, 1.0).unwrap();
        assert!((h.h3 - 2f64.sqrt()).abs() < 1e-14);
        assert!((h.lambda3 - 0.6f64.powf(0.125)).abs() < 1e-14);
        assert_eq!(closed_form_general_decay(1.5, 1.5, 1.0).unwrap().lambda3, 0.0);
        assert!(closed_form_general_decay(2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn h2_is_scale_invariant() {
        let h = closed_form_general_decay(0.7, 3.1, 1.3).unwrap();
        let s = closed_form_general_decay(0.7 * 4.0, 3.1 * 4.0, 1.3 * 4.0).unwrap();
        assert!((h.h3 - s.h3).abs() < 1e-12);
        assert!((h.lambda3 - s.lambda3).abs() < 1e-12);
    }

    #[test]
    fn g1_lower_vanishes_with_n() {
        let b = block_matrix_spectrum_bounds(1.0, 2.0, 1e-12, 1.0).unwrap();
        assert!(b.certified_lower < 1e-11);
    }
}
