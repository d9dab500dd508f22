use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Phase;

/// Feasible injection region of a device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleSet<T> {
    /// Constant box, e.g. a small diesel unit.
    Box { p_min: T, p_max: T, q_min: T, q_max: T },
    /// `0 ≤ p ≤ p_av`, `p² + q² ≤ eta_cap²`.
    PvInverter { p_av: T, eta_cap: T },
    /// `p_min ≤ p ≤ p_max`, `p² + q² ≤ eta_cap²`.
    Storage { p_min: T, p_max: T, eta_cap: T },
}

impl<T: Scalar> FeasibleSet<T> {
    /// Active-power interval and optional apparent-power radius.
    pub fn p_interval_and_radius(&self) -> (T, T, Option<T>) {
        match *self {
            FeasibleSet::Box { p_min, p_max, .. } => (p_min, p_max, None),
            FeasibleSet::PvInverter { p_av, eta_cap } => (T::zero(), p_av, Some(eta_cap)),
            FeasibleSet::Storage { p_min, p_max, eta_cap } => (p_min, p_max, Some(eta_cap)),
        }
    }

    pub fn contains(&self, p: T, q: T, tol: T) -> bool {
        match *self {
            FeasibleSet::Box { p_min, p_max, q_min, q_max } => {
                p >= p_min - tol && p <= p_max + tol && q >= q_min - tol && q <= q_max + tol
            }
            _ => {
                let (lo, hi, r) = self.p_interval_and_radius();
                let r = r.expect("disk sets carry a radius");
                p >= lo - tol && p <= hi + tol && (p * p + q * q).sqrt() <= r + tol
            }
        }
    }

    /// A point of the set, or an error if the set is empty or malformed.
    pub fn witness(&self) -> Result<(T, T)> {
        let bad = |msg: &str| Err(Error::Device(msg.to_string()));
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        match *self {
            FeasibleSet::Box { p_min, p_max, q_min, q_max } => {
                if !finite(&[p_min, p_max, q_min, q_max]) {
                    return bad("box bounds must be finite");
                }
                if p_min > p_max || q_min > q_max {
                    return bad("box lower bound exceeds upper bound");
                }
                Ok((p_min, q_min))
            }
            FeasibleSet::PvInverter { p_av, eta_cap } => {
                if !finite(&[p_av, eta_cap]) || p_av < T::zero() {
                    return bad("PV available power must be finite and non-negative");
                }
                if eta_cap <= T::zero() {
                    return bad("apparent-power capacity must be positive");
                }
                Ok((T::zero(), T::zero()))
            }
            FeasibleSet::Storage { p_min, p_max, eta_cap } => {
                if !finite(&[p_min, p_max, eta_cap]) {
                    return bad("storage bounds must be finite");
                }
                if eta_cap <= T::zero() {
                    return bad("apparent-power capacity must be positive");
                }
                if p_min > p_max {
                    return bad("storage p_min exceeds p_max");
                }
                let p = p_min.max(-eta_cap).min(p_max);
                if p.abs() > eta_cap {
                    return bad("storage power interval lies outside its capacity disk");
                }
                Ok((p, T::zero()))
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> FeasibleSet<U> {
        let c = |x: T| U::of(x.as_f64());
        match *self {
            FeasibleSet::Box { p_min, p_max, q_min, q_max } => FeasibleSet::Box {
                p_min: c(p_min),
                p_max: c(p_max),
                q_min: c(q_min),
                q_max: c(q_max),
            },
            FeasibleSet::PvInverter { p_av, eta_cap } => FeasibleSet::PvInverter {
                p_av: c(p_av),
                eta_cap: c(eta_cap),
            },
            FeasibleSet::Storage { p_min, p_max, eta_cap } => FeasibleSet::Storage {
                p_min: c(p_min),
                p_max: c(p_max),
                eta_cap: c(eta_cap),
            },
        }
    }
}

/// `cp·(p − p0)² + cq·(q − q0)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost<T> {
    pub cp: T,
    pub cq: T,
    pub p0: T,
    pub q0: T,
}

impl<T: Scalar> QuadraticCost<T> {
    pub fn value(&self, p: T, q: T) -> T {
        let dp = p - self.p0;
        let dq = q - self.q0;
        self.cp * dp * dp + self.cq * dq * dq
    }

    pub fn gradient(&self, p: T, q: T) -> (T, T) {
        (T::two() * self.cp * (p - self.p0), T::two() * self.cq * (q - self.q0))
    }
}

/// User-supplied smooth cost for a device.
pub trait CostFunction<T>: Send + Sync {
    fn value(&self, p: T, q: T) -> T;
    fn gradient(&self, p: T, q: T) -> (T, T);
    /// `(min, max)` eigenvalue bounds of the Hessian over the feasible set.
    fn curvature_bounds(&self) -> Option<(T, T)> {
        None
    }
}

#[derive(Clone)]
pub enum DeviceCost<T> {
    Quadratic(QuadraticCost<T>),
    Custom(Arc<dyn CostFunction<T>>),
}

impl<T: fmt::Debug> fmt::Debug for DeviceCost<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceCost::Quadratic(q) => f.debug_tuple("Quadratic").field(q).finish(),
            DeviceCost::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl<T: Scalar> DeviceCost<T> {
    pub fn value(&self, p: T, q: T) -> T {
        match self {
            DeviceCost::Quadratic(c) => c.value(p, q),
            DeviceCost::Custom(c) => c.value(p, q),
        }
    }

    pub fn gradient(&self, p: T, q: T) -> (T, T) {
        match self {
            DeviceCost::Quadratic(c) => c.gradient(p, q),
            DeviceCost::Custom(c) => c.gradient(p, q),
        }
    }

    /// Curvature bounds used by the stepsize analysis, `None` when a custom
    /// cost does not declare them.
    pub fn curvature(&self) -> Option<Curvature<T>> {
        match self {
            DeviceCost::Quadratic(c) => Some(Curvature {
                min: T::two() * c.cp.min(c.cq),
                p: T::two() * c.cp,
                q: T::two() * c.cq,
            }),
            DeviceCost::Custom(c) => c
                .curvature_bounds()
                .map(|(lo, hi)| Curvature { min: lo, p: hi, q: hi }),
        }
    }
}

/// Strong-convexity modulus `min` and per-axis curvature upper bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature<T> {
    pub min: T,
    pub p: T,
    pub q: T,
}

#[derive(Debug, Clone)]
pub struct Device<T> {
    pub node: usize,
    pub phase: Phase,
    pub set: FeasibleSet<T>,
    pub cost: DeviceCost<T>,
}

impl<T: Scalar> Device<T> {
    pub fn validate(&self) -> Result<()> {
        let (p, q) = self.set.witness()?;
        if !self.set.contains(p, q, T::zero()) {
            return Err(Error::Device("feasible set witness rejected".into()));
        }
        if let DeviceCost::Quadratic(c) = &self.cost {
            if !(c.cp > T::zero() && c.cq > T::zero()) {
                return Err(Error::Device("cost curvature must be strictly positive".into()));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Device<U> {
        let cost = match &self.cost {
            DeviceCost::Quadratic(c) => DeviceCost::Quadratic(QuadraticCost {
                cp: U::of(c.cp.as_f64()),
                cq: U::of(c.cq.as_f64()),
                p0: U::of(c.p0.as_f64()),
                q0: U::of(c.q0.as_f64()),
            }),
            DeviceCost::Custom(_) => panic!("custom costs cannot be cast between scalar types"),
        };
        Device {
            node: self.node,
            phase: self.phase,
            set: self.set.cast(),
            cost,
        }
    }
}

/// `C0(P0) = alpha·(P0 − p0_target)²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SubstationCost<T> {
    pub alpha: T,
    pub p0_target: T,
}

impl<T: Scalar> SubstationCost<T> {
    pub fn value(&self, p0: T) -> T {
        let d = p0 - self.p0_target;
        self.alpha * d * d
    }

    pub fn derivative(&self, p0: T) -> T {
        T::two() * self.alpha * (p0 - self.p0_target)
    }

    pub fn curvature(&self) -> T {
        T::two() * self.alpha
    }
}
