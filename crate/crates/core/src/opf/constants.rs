use serde::Serialize;

use super::problem::OpfProblem;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Strong-monotonicity and Lipschitz constants of `T`, computed in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceConstants {
    pub m: f64,
    pub l: f64,
    /// `2M/L²`.
    pub eps_bound: f64,
}

impl ConvergenceConstants {
    /// `Δ = 1 + ε²L² − 2εM`.
    pub fn contraction(&self, eps: f64) -> f64 {
        1.0 + eps * eps * self.l * self.l - 2.0 * eps * self.m
    }
}

/// The linear part of `T` over the free coordinates (devices only for the
/// primal blocks).
struct Jacobian<'a, T> {
    problem: &'a OpfProblem<T>,
    hp: Vec<f64>,
    hq: Vec<f64>,
    free: Vec<bool>,
    a0: f64,
    eta: f64,
}

impl<T: Scalar> Jacobian<'_, T> {
    fn n(&self) -> usize {
        self.free.len()
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.problem.pack.r(i, j).as_f64()
    }

    fn x(&self, i: usize, j: usize) -> f64 {
        self.problem.pack.x(i, j).as_f64()
    }

    /// Rows: p: `[H_p + C₀''·11ᵀ, 0, −Rᵀ, Rᵀ]`, q: `[0, H_q, −Xᵀ, Xᵀ]`,
    /// μ̲: `[R, X, η, 0]`, μ̄: `[−R, −X, 0, η]`.
    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let (p, q, lo, hi) = (&z[..n], &z[n..2 * n], &z[2 * n..3 * n], &z[3 * n..]);
        let mut out = vec![0.0; 4 * n];
        let sum_p: f64 = (0..n).filter(|&k| self.free[k]).map(|k| p[k]).sum();
        let d: Vec<f64> = (0..n).map(|k| hi[k] - lo[k]).collect();
        for i in 0..n {
            if self.free[i] {
                let mut rt = 0.0;
                let mut xt = 0.0;
                for j in 0..n {
                    rt += self.r(j, i) * d[j];
                    xt += self.x(j, i) * d[j];
                }
                out[i] = self.hp[i] * p[i] + self.a0 * sum_p + rt;
                out[n + i] = self.hq[i] * q[i] + xt;
            }
            let mut v = 0.0;
            for j in 0..n {
                if self.free[j] {
                    v += self.r(i, j) * p[j] + self.x(i, j) * q[j];
                }
            }
            out[2 * n + i] = v + self.eta * lo[i];
            out[3 * n + i] = -v + self.eta * hi[i];
        }
        out
    }

    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n();
        let (yp, yq, ylo, yhi) = (&y[..n], &y[n..2 * n], &y[2 * n..3 * n], &y[3 * n..]);
        let mut out = vec![0.0; 4 * n];
        let sum_yp: f64 = (0..n).filter(|&k| self.free[k]).map(|k| yp[k]).sum();
        let dy: Vec<f64> = (0..n).map(|k| ylo[k] - yhi[k]).collect();
        for j in 0..n {
            if self.free[j] {
                let mut rt = 0.0;
                let mut xt = 0.0;
                for i in 0..n {
                    rt += self.r(i, j) * dy[i];
                    xt += self.x(i, j) * dy[i];
                }
                out[j] = self.hp[j] * yp[j] + self.a0 * sum_yp + rt;
                out[n + j] = self.hq[j] * yq[j] + xt;
            }
            let mut s = 0.0;
            for i in 0..n {
                if self.free[i] {
                    s += self.r(j, i) * yp[i] + self.x(j, i) * yq[i];
                }
            }
            out[2 * n + j] = -s + self.eta * ylo[j];
            out[3 * n + j] = s + self.eta * yhi[j];
        }
        out
    }
}

/// `M` from the diagonal part of the operator, `L = ‖J‖₂` by power
/// iteration on `JᵀJ`.
///
/// The coupling blocks of the Jacobian are skew-symmetric and the
/// substation term is positive semidefinite, so `M = min(min curvature, η)`
/// is a valid modulus of strong monotonicity.
pub fn estimate_constants<T: Scalar>(problem: &OpfProblem<T>) -> Result<ConvergenceConstants> {
    let n = problem.dim();
    let mut hp = vec![0.0; n];
    let mut hq = vec![0.0; n];
    let mut free = vec![false; n];
    let eta = problem.config.eta.as_f64();
    let mut m = eta;
    for k in 0..n {
        if let Some(dev_idx) = problem.coord_devices()[k] {
            let c = problem.case.devices[dev_idx].cost.curvature().ok_or(Error::CurvatureUnavailable(dev_idx))?;
            hp[k] = c.p.as_f64();
            hq[k] = c.q.as_f64();
            free[k] = true;
            m = m.min(c.min.as_f64());
        }
    }
    let jac = Jacobian { problem, hp, hq, free, a0: problem.case.substation.curvature().as_f64(), eta };
    let l = power_norm(&jac, 1e-12, 20_000);
    debug_assert!(m <= l * (1.0 + 1e-9), "M must not exceed L");
    Ok(ConvergenceConstants { m, l, eps_bound: 2.0 * m / (l * l) })
}

fn power_norm<T: Scalar>(jac: &Jacobian<'_, T>, tol: f64, max_iters: usize) -> f64 {
    let n = jac.n();
    let mut x: Vec<f64> = (0..4 * n)
        .map(|i| {
            let k = i % n.max(1);
            let block = i / n.max(1);
            if block < 2 && !jac.free[k] {
                0.0
            } else {
                1.0 + 0.1 * ((i * 7919) % 13) as f64
            }
        })
        .collect();
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let ax = jac.apply(&x);
        let next = ax.iter().map(|v| v * v).sum::<f64>();
        x = jac.apply_t(&ax);
        if (next - lambda).abs() <= tol * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}
