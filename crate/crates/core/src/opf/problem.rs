use rand::Rng;
use serde::Serialize;

use super::config::{Mode, SolverConfig};
use super::projection::project_feasible;
use crate::error::{Error, Result};
use crate::feeder::{Case, Device};
use crate::powerflow::{linear_voltages, nonlinear_solve, substation_power};
use crate::scalar::Scalar;
use crate::sensitivity::SensitivityPack;

/// One iterate: primal injections, dual multipliers, and the voltages and
/// substation power seen at those injections. Vectors are indexed by
/// phase-expanded coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateState<T> {
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub mu_lo: Vec<T>,
    pub mu_hi: Vec<T>,
    pub v: Vec<T>,
    pub p0: T,
}

impl<T: Scalar> IterateState<T> {
    /// `z = (p, q, μ̲, μ̄)` stacked.
    pub fn z(&self) -> Vec<T> {
        [&self.p[..], &self.q, &self.mu_lo, &self.mu_hi].concat()
    }

    /// ∞-norm of the difference in `z`.
    pub fn z_dist_inf(&self, other: &Self) -> T {
        self.z().iter().zip(other.z()).fold(T::zero(), |m, (a, b)| m.max((*a - b).abs()))
    }

    pub fn z_dist2(&self, other: &Self) -> T {
        self.z().iter().zip(other.z()).fold(T::zero(), |m, (a, b)| m + (*a - b) * (*a - b)).sqrt()
    }

    /// ∞-norm over every field, voltages and `P₀` included.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut m = self.z_dist_inf(other);
        for (a, b) in self.v.iter().zip(&other.v) {
            m = m.max((*a - *b).abs());
        }
        m.max((self.p0 - other.p0).abs())
    }
}

/// `T(z)` split into its four blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent<T> {
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub mu_lo: Vec<T>,
    pub mu_hi: Vec<T>,
}

impl<T: Scalar> Tangent<T> {
    pub fn flat(&self) -> Vec<T> {
        [&self.p[..], &self.q, &self.mu_lo, &self.mu_hi].concat()
    }
}

/// A case prepared for solving: sensitivities, per-coordinate devices and
/// resolved limits. Coordinates without a device keep `p = q = 0`.
#[derive(Debug, Clone)]
pub struct OpfProblem<T> {
    pub case: Case<T>,
    pub pack: SensitivityPack<T>,
    pub config: SolverConfig<T>,
    coord_dev: Vec<Option<usize>>,
    v_tilde: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> OpfProblem<T> {
    pub fn new(case: Case<T>, config: SolverConfig<T>) -> Result<Self> {
        let pack = SensitivityPack::build(&case.feeder);
        Self::with_pack(case, pack, config)
    }

    pub fn with_pack(case: Case<T>, pack: SensitivityPack<T>, config: SolverConfig<T>) -> Result<Self> {
        config.validate()?;
        let n = case.feeder.index().len();
        if pack.dim() != n {
            return Err(Error::Dimension { expected: n, got: pack.dim() });
        }
        for d in &case.devices {
            d.validate()?;
        }
        let coord_dev = case.coord_devices()?;
        let (lower, upper) = config.limits.resolve(n)?;
        let v_tilde = case.feeder.v_tilde();
        Ok(OpfProblem { case, pack, config, coord_dev, v_tilde, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.coord_dev.len()
    }

    pub fn device(&self, k: usize) -> Option<&Device<T>> {
        self.coord_dev[k].map(|d| &self.case.devices[d])
    }

    pub fn coord_devices(&self) -> &[Option<usize>] {
        &self.coord_dev
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn v_tilde(&self) -> &[T] {
        &self.v_tilde
    }

    /// Voltages and substation power for the given injections, from the
    /// model selected by the configured mode.
    pub fn observe(&self, p: &[T], q: &[T]) -> Result<(Vec<T>, T)> {
        match self.config.mode {
            Mode::Linear => Ok((
                linear_voltages(&self.pack, p, q, &self.v_tilde)?,
                substation_power(&self.case.feeder, p)?,
            )),
            Mode::Feedback => {
                let (st, _) = nonlinear_solve(&self.case.feeder, p, q)?;
                Ok((st.v, st.p0))
            }
        }
    }

    /// State with the given primal and dual parts and refreshed `v`, `P₀`.
    pub fn state(&self, p: Vec<T>, q: Vec<T>, mu_lo: Vec<T>, mu_hi: Vec<T>) -> Result<IterateState<T>> {
        let n = self.dim();
        for v in [&p, &q, &mu_lo, &mu_hi] {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, got: v.len() });
            }
        }
        let (v, p0) = self.observe(&p, &q)?;
        Ok(IterateState { p, q, mu_lo, mu_hi, v, p0 })
    }

    /// Projected origin with zero duals.
    pub fn initial_state(&self) -> Result<IterateState<T>> {
        let n = self.dim();
        let mut p = vec![T::zero(); n];
        let mut q = vec![T::zero(); n];
        for k in 0..n {
            if let Some(d) = self.device(k) {
                (p[k], q[k]) = project_feasible(&d.set, T::zero(), T::zero());
            }
        }
        self.state(p, q, vec![T::zero(); n], vec![T::zero(); n])
    }

    /// Random feasible primal point and random duals in `[0, dual_scale)`.
    pub fn random_state<R: Rng>(&self, rng: &mut R, dual_scale: f64) -> Result<IterateState<T>> {
        let n = self.dim();
        let (mut p, mut q) = (vec![T::zero(); n], vec![T::zero(); n]);
        for k in 0..n {
            if let Some(d) = self.device(k) {
                let (a, b, r) = d.set.p_interval_and_radius();
                let (qa, qb) = match d.set {
                    crate::feeder::FeasibleSet::Box { q_min, q_max, .. } => (q_min, q_max),
                    _ => {
                        let r = r.unwrap();
                        (-r, r)
                    }
                };
                let pr = a.as_f64() + rng.gen::<f64>() * (b - a).as_f64();
                let qr = qa.as_f64() + rng.gen::<f64>() * (qb - qa).as_f64();
                (p[k], q[k]) = project_feasible(&d.set, T::of(pr), T::of(qr));
            }
        }
        let mut duals = || (0..n).map(|_| T::of(rng.gen::<f64>() * dual_scale)).collect::<Vec<T>>();
        let (lo, hi) = (duals(), duals());
        self.state(p, q, lo, hi)
    }

    /// `C₀'(P₀)`.
    pub fn c0_prime(&self, p0: T) -> T {
        self.case.substation.derivative(p0)
    }

    /// `T(z)` at a state, using the state's `v` and `P₀`. Blocks of
    /// coordinates without a device are zero.
    pub fn gradient(&self, s: &IterateState<T>) -> Result<Tangent<T>> {
        let n = self.dim();
        let d: Vec<T> = s.mu_hi.iter().zip(&s.mu_lo).map(|(&h, &l)| h - l).collect();
        let (alpha, beta) = self.pack.transpose_apply(&d)?;
        let c0p = self.c0_prime(s.p0);
        let eta = self.config.eta;
        let mut t = Tangent {
            p: vec![T::zero(); n],
            q: vec![T::zero(); n],
            mu_lo: vec![T::zero(); n],
            mu_hi: vec![T::zero(); n],
        };
        for k in 0..n {
            if let Some(dev) = self.device(k) {
                let (gp, gq) = dev.cost.gradient(s.p[k], s.q[k]);
                t.p[k] = gp - c0p + alpha[k];
                t.q[k] = gq + beta[k];
            }
            t.mu_lo[k] = -(self.lower[k] - s.v[k] - eta * s.mu_lo[k]);
            t.mu_hi[k] = -(s.v[k] - self.upper[k] - eta * s.mu_hi[k]);
        }
        Ok(t)
    }

    /// Device costs plus the substation cost.
    pub fn cost(&self, s: &IterateState<T>) -> T {
        let mut c = self.case.substation.value(s.p0);
        for k in 0..self.dim() {
            if let Some(dev) = self.device(k) {
                c += dev.cost.value(s.p[k], s.q[k]);
            }
        }
        c
    }

    /// `L_η = C + C₀ + μ̲ᵀ(v̲ − v) + μ̄ᵀ(v − v̄) − (η/2)(‖μ̲‖² + ‖μ̄‖²)`.
    pub fn lagrangian(&self, s: &IterateState<T>) -> T {
        let half_eta = self.config.eta / T::two();
        let mut l = self.cost(s);
        for k in 0..self.dim() {
            l += s.mu_lo[k] * (self.lower[k] - s.v[k]) + s.mu_hi[k] * (s.v[k] - self.upper[k]);
            l -= half_eta * (s.mu_lo[k] * s.mu_lo[k] + s.mu_hi[k] * s.mu_hi[k]);
        }
        l
    }

    /// Largest undervoltage and overvoltage (p.u.², zero when none).
    pub fn violations(&self, v: &[T]) -> (T, T) {
        let mut under = T::zero();
        let mut over = T::zero();
        for k in 0..v.len() {
            under = under.max(self.lower[k] - v[k]);
            over = over.max(v[k] - self.upper[k]);
        }
        (under, over)
    }
}
