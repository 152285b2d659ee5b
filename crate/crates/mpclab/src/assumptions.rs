//! Sampled checks of the bounds a family declares.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, sym_eig_range};
use crate::system::LqFamily;

/// Relative slack on every comparison.
const SLACK: f64 = 1e-9;

/// Worst sampled value of one declared bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub declared: f64,
    pub worst: f64,
    /// Positive when the bound holds; for lower bounds, worst − declared.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub checks: Vec<BoundCheck>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn violations(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect()
    }
}

fn upper(name: &'static str, declared: f64, worst: f64) -> BoundCheck {
    BoundCheck {
        name,
        declared,
        worst,
        margin: declared - worst,
        pass: worst <= declared * (1.0 + SLACK) + SLACK,
    }
}

fn lower(name: &'static str, declared: f64, worst: f64) -> BoundCheck {
    BoundCheck {
        name,
        declared,
        worst,
        margin: worst - declared,
        pass: worst >= declared * (1.0 - SLACK) - SLACK,
    }
}

/// Samples `samples` (t, ξ, ξ′) triples with t < `steps` and compares against the declared constants.
pub fn validate_assumptions(family: &dyn LqFamily, steps: usize, samples: usize, seed: u64) -> Result<AssumptionReport> {
    if samples == 0 || steps == 0 {
        return Err(Error::InvalidConfig("need at least one sample and one step".into()));
    }
    let c = family.constants();
    let pbox = family.param_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cost_lo = f64::INFINITY;
    let mut cost_hi = 0.0_f64;
    let mut norms = [0.0_f64; 4];
    let mut lips = [0.0_f64; 7];
    for _ in 0..samples {
        let t = rng.gen_range(0..steps);
        let xi = pbox.sample(&mut rng);
        let xi2 = pbox.sample(&mut rng);
        let (s, s2) = (family.stage(t, &xi), family.stage(t, &xi2));
        let (term, term2) = (family.terminal(&xi), family.terminal(&xi2));
        for m in [&s.q, &s.r, &term.p] {
            let (lo, hi) = sym_eig_range(m);
            cost_lo = cost_lo.min(lo);
            cost_hi = cost_hi.max(hi);
        }
        for (acc, v) in norms
            .iter_mut()
            .zip([spectral_norm(&s.a), spectral_norm(&s.b), s.w.norm(), s.x_ref.norm()])
        {
            *acc = acc.max(v);
        }
        let dist = (&xi - &xi2).norm();
        if dist > 1e-12 {
            let diffs = [
                spectral_norm(&(&s.a - &s2.a)),
                spectral_norm(&(&s.b - &s2.b)),
                spectral_norm(&(&s.q - &s2.q)),
                spectral_norm(&(&s.r - &s2.r)),
                spectral_norm(&(&term.p - &term2.p)),
                (&s.w - &s2.w).norm(),
                (&s.x_ref - &s2.x_ref).norm(),
            ];
            for (acc, d) in lips.iter_mut().zip(diffs) {
                *acc = acc.max(d / dist);
            }
        }
    }
    let l = &c.lipschitz;
    let checks = vec![
        lower("mu", c.mu, cost_lo),
        upper("ell", c.ell, cost_hi),
        upper("a", c.a, norms[0]),
        upper("b", c.b, norms[1]),
        upper("d_w", c.d_w, norms[2]),
        upper("d_xref", c.d_xref, norms[3]),
        upper("lipschitz_a", l.a, lips[0]),
        upper("lipschitz_b", l.b, lips[1]),
        upper("lipschitz_q", l.q, lips[2]),
        upper("lipschitz_r", l.r, lips[3]),
        upper("lipschitz_p", l.p, lips[4]),
        upper("lipschitz_w", l.w, lips[5]),
        upper("lipschitz_xref", l.x_ref, lips[6]),
    ];
    Ok(AssumptionReport { samples, checks })
}

/// Box diameter ≤ 1 for the parameter space of `family`.
pub fn diameter_normalized(family: &dyn LqFamily) -> bool {
    family.param_box().diameter() <= 1.0 + SLACK
}
