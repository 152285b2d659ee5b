use std::sync::OnceLock;

use nalgebra::DVector;

use super::{FtocpSolution, FtocpSpec, QuadraticKkt};
use crate::error::{Error, Result};
use crate::param::ParamSeq;
use crate::system::{Instance, System, TerminalCost};

/// Clairvoyant solves ψ_t^T(x, ξ*_{t:T}; F_T) with one cached factorization per start time.
///
/// The cached path performs the same floating-point operations as a fresh solve, so results
/// are bit-identical.
#[derive(Debug)]
pub struct ClairvoyantSolver<'a> {
    system: &'a System,
    truth: &'a ParamSeq,
    terminal: TerminalCost,
    cache: Vec<OnceLock<Option<QuadraticKkt>>>,
}

impl<'a> ClairvoyantSolver<'a> {
    pub fn new(system: &'a System, truth: &'a ParamSeq, terminal: TerminalCost) -> Self {
        let cache = (0..=truth.horizon()).map(|_| OnceLock::new()).collect();
        Self {
            system,
            truth,
            terminal,
            cache,
        }
    }

    pub fn for_instance(instance: &'a Instance) -> Self {
        Self::new(&instance.system, &instance.truth, instance.true_terminal())
    }

    pub fn horizon(&self) -> usize {
        self.truth.horizon()
    }

    pub fn spec(&self, t: usize, z: &DVector<f64>) -> Result<FtocpSpec> {
        let horizon = self.horizon();
        if t > horizon {
            return Err(Error::WindowOutOfRange {
                start: t,
                end: horizon,
                horizon,
            });
        }
        FtocpSpec::new(t, horizon, z.clone(), self.truth.window(t, horizon), self.terminal.clone())
    }

    /// Solution of the window [t, T] from state z.
    pub fn solve(&self, t: usize, z: &DVector<f64>) -> Result<FtocpSolution> {
        let spec = self.spec(t, z)?;
        match self.system {
            System::Quadratic(family) if !spec.is_empty() => {
                let kkt = self.cache[t].get_or_init(|| {
                    let mut kkt = QuadraticKkt::assemble(family.as_ref(), &spec).ok()?;
                    kkt.factorize().ok()?;
                    Some(kkt)
                });
                match kkt {
                    Some(kkt) => kkt.solve_from(z, None),
                    None => self.system.solve(&spec),
                }
            }
            _ => self.system.solve(&spec),
        }
    }
}

/// Clairvoyant action ψ_t^T(x_t, ξ*_{t:T}; F)_{v_t} and the full solution.
pub fn clairvoyant_action(
    t: usize,
    state: &DVector<f64>,
    system: &System,
    truth: &ParamSeq,
    terminal: &TerminalCost,
) -> Result<(DVector<f64>, FtocpSolution)> {
    let horizon = truth.horizon();
    if t >= horizon {
        return Err(Error::WindowOutOfRange {
            start: t,
            end: horizon,
            horizon,
        });
    }
    let spec = FtocpSpec::new(t, horizon, state.clone(), truth.window(t, horizon), terminal.clone())?;
    let sol = system.solve(&spec)?;
    Ok((sol.actions[0].clone(), sol))
}
