//! Per-coordinate update rules shared by both engines. Only the coupling
//! values `α = (Rᵀ(μ̄−μ̲))_k` and `β = (Xᵀ(μ̄−μ̲))_k` differ in how they are
//! obtained.

use super::projection::project_feasible;
use crate::feeder::Device;
use crate::scalar::Scalar;

/// `[p − ε(∂C/∂p − C₀' + α), q − ε(∂C/∂q + β)]` projected onto the device
/// set; coordinates without a device stay at the origin.
#[inline]
pub fn primal<T: Scalar>(dev: Option<&Device<T>>, p: T, q: T, alpha: T, beta: T, c0_prime: T, eps: T) -> (T, T) {
    match dev {
        None => (T::zero(), T::zero()),
        Some(d) => {
            let (gp, gq) = d.cost.gradient(p, q);
            project_feasible(&d.set, p - eps * (gp - c0_prime + alpha), q - eps * (gq + beta))
        }
    }
}

/// `μ̲ ← [μ̲ + ε(v̲ − v − ημ̲)]₊`, `μ̄ ← [μ̄ + ε(v − v̄ − ημ̄)]₊`.
#[inline]
pub fn dual<T: Scalar>(v: T, lower: T, upper: T, mu_lo: T, mu_hi: T, eps: T, eta: T) -> (T, T) {
    let lo = (mu_lo + eps * (lower - v - eta * mu_lo)).max(T::zero());
    let hi = (mu_hi + eps * (v - upper - eta * mu_hi)).max(T::zero());
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{DeviceCost, FeasibleSet, Phase, QuadraticCost};
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_descent_step() {
        let d = Device {
            node: 1,
            phase: Phase::A,
            set: FeasibleSet::Box { p_min: -5.0, p_max: 5.0, q_min: -5.0, q_max: 5.0 },
            cost: DeviceCost::Quadratic(QuadraticCost { cp: 1.0, cq: 1.0, p0: 0.0, q0: 0.0 }),
        };
        let (p, q) = primal(Some(&d), 1.0, 0.0, 0.0, 0.0, 0.0, 0.1);
        assert_abs_diff_eq!(p, 0.8, epsilon = 1e-15);
        assert_eq!(q, 0.0);
        assert_eq!(primal(None, 1.0, 1.0, 3.0, 3.0, 3.0, 0.1), (0.0, 0.0));
    }

    #[test]
    fn overvoltage_dual_step() {
        let (lo, hi) = dual(1.11, 0.9, 1.1, 0.0, 0.0, 0.1, 0.01);
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 0.001, epsilon = 1e-15);
    }
}
