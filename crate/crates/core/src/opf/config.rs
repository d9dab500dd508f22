use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where voltages and substation power come from after each primal update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The linearized model.
    Linear,
    /// The nonlinear power-flow oracle.
    Feedback,
}

/// Squared-voltage limits (p.u.²).
#[derive(Debug, Clone, PartialEq)]
pub enum VoltageLimits<T> {
    Uniform { lower: T, upper: T },
    PerCoord { lower: Vec<T>, upper: Vec<T> },
}

impl<T: Scalar> VoltageLimits<T> {
    /// Limits from voltage magnitudes, squared.
    pub fn from_magnitudes(vmin: T, vmax: T) -> Self {
        VoltageLimits::Uniform { lower: vmin * vmin, upper: vmax * vmax }
    }

    pub fn resolve(&self, n: usize) -> Result<(Vec<T>, Vec<T>)> {
        let (lo, hi) = match self {
            VoltageLimits::Uniform { lower, upper } => (vec![*lower; n], vec![*upper; n]),
            VoltageLimits::PerCoord { lower, upper } => {
                for v in [lower, upper] {
                    if v.len() != n {
                        return Err(Error::Dimension { expected: n, got: v.len() });
                    }
                }
                (lower.clone(), upper.clone())
            }
        };
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Parse("voltage lower limit must be below the upper limit".into()));
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Primal stepsize ε.
    pub eps: T,
    /// Dual stepsize is `eps · dual_mult`.
    pub dual_mult: T,
    /// Dual regularization η.
    pub eta: T,
    pub limits: VoltageLimits<T>,
    pub max_iters: usize,
    /// Threshold on `|P₀(t+1) − P₀(t)|`.
    pub sigma: T,
    /// Threshold on the ∞-norm of the iterate change.
    pub sigma_z: T,
    pub mode: Mode,
    /// Estimate M and L before solving and warn when ε ≥ 2M/L².
    pub check_stepsize: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            eps: T::of(3.5e-4),
            dual_mult: T::one(),
            eta: T::of(1e-3),
            limits: VoltageLimits::from_magnitudes(T::of(0.95), T::of(1.05)),
            max_iters: 200_000,
            sigma: T::of(1e-6),
            sigma_z: T::of(1e-8),
            mode: Mode::Linear,
            check_stepsize: true,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parse(format!("{name} must be positive and finite")))
            }
        };
        pos("eps", self.eps)?;
        pos("dual stepsize multiplier", self.dual_mult)?;
        pos("eta", self.eta)?;
        pos("sigma", self.sigma)?;
        pos("sigma_z", self.sigma_z)?;
        Ok(())
    }

    pub fn eps_dual(&self) -> T {
        self.eps * self.dual_mult
    }
}
