use serde::Serialize;

use super::constants::estimate_constants;
use super::problem::{IterateState, OpfProblem};
use super::update;
use crate::clustering::OpCount;
use crate::error::Result;
use crate::scalar::{norm2, Scalar};

/// One row of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow<T> {
    pub iter: usize,
    pub step_norm: T,
    #[serde(rename = "P0")]
    pub p0: T,
    pub max_undervolt: T,
    pub max_overvolt: T,
    pub lagrangian: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveWarning {
    /// ε at or above the sufficient bound 2M/L².
    Stepsize { eps: f64, bound: f64 },
    ConstantsUnavailable { reason: String },
}

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub status: Status,
    pub iterations: usize,
    pub state: IterateState<T>,
    pub trajectory: Vec<TrajectoryRow<T>>,
    pub warnings: Vec<SolveWarning>,
}

/// Something that advances an iterate by one primal-dual step.
pub trait Engine<T: Scalar> {
    fn step(&mut self) -> Result<()>;
    fn state(&self) -> &IterateState<T>;
}

/// The centralized iteration over dense sensitivities.
pub struct CentralEngine<'a, T> {
    problem: &'a OpfProblem<T>,
    state: IterateState<T>,
    ops: OpCount,
}

impl<'a, T: Scalar> CentralEngine<'a, T> {
    pub fn new(problem: &'a OpfProblem<T>, init: IterateState<T>) -> Self {
        CentralEngine { problem, state: init, ops: OpCount::default() }
    }

    /// Coupling operations so far, one multiplication per coefficient-dual
    /// product.
    pub fn ops(&self) -> OpCount {
        self.ops
    }

    pub fn into_state(self) -> IterateState<T> {
        self.state
    }
}

impl<T: Scalar> Engine<T> for CentralEngine<'_, T> {
    fn step(&mut self) -> Result<()> {
        self.state = primal_dual_step(self.problem, &self.state)?;
        let n = self.problem.dim() as u64;
        self.ops += OpCount::new(n * n, n * n.saturating_sub(1));
        Ok(())
    }

    fn state(&self) -> &IterateState<T> {
        &self.state
    }
}

/// `z(t+1) = [z(t) − εT(z(t))]` followed by a refresh of `v` and `P₀`.
pub fn primal_dual_step<T: Scalar>(problem: &OpfProblem<T>, s: &IterateState<T>) -> Result<IterateState<T>> {
    let n = problem.dim();
    let cfg = &problem.config;
    let d: Vec<T> = s.mu_hi.iter().zip(&s.mu_lo).map(|(&h, &l)| h - l).collect();
    let (alpha, beta) = problem.pack.transpose_apply(&d)?;
    let c0p = problem.c0_prime(s.p0);
    let (eps, eps_d, eta) = (cfg.eps, cfg.eps_dual(), cfg.eta);
    let (lower, upper) = (problem.lower(), problem.upper());
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut mu_lo = vec![T::zero(); n];
    let mut mu_hi = vec![T::zero(); n];
    for k in 0..n {
        (p[k], q[k]) = update::primal(problem.device(k), s.p[k], s.q[k], alpha[k], beta[k], c0p, eps);
        (mu_lo[k], mu_hi[k]) = update::dual(s.v[k], lower[k], upper[k], s.mu_lo[k], s.mu_hi[k], eps_d, eta);
    }
    problem.state(p, q, mu_lo, mu_hi)
}

fn divergence_limit<T: Scalar>(first: T) -> T {
    T::of(1e3) * (T::one() + first)
}

/// Iterate an engine until the stopping rule `|ΔP₀| < σ` and
/// `‖Δz‖∞ < σ_z`, the iteration limit, or divergence.
pub fn drive<T: Scalar, E: Engine<T>>(problem: &OpfProblem<T>, engine: &mut E) -> Result<(Status, usize, Vec<TrajectoryRow<T>>)> {
    let cfg = &problem.config;
    let mut trajectory = Vec::new();
    let mut first_step: Option<T> = None;
    for it in 1..=cfg.max_iters {
        let prev = engine.state().clone();
        engine.step()?;
        let cur = engine.state();
        let diff: Vec<T> = prev.z().iter().zip(cur.z()).map(|(a, b)| b - *a).collect();
        let step_norm = norm2(&diff);
        let step_inf = diff.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let (under, over) = problem.violations(&cur.v);
        trajectory.push(TrajectoryRow {
            iter: it,
            step_norm,
            p0: cur.p0,
            max_undervolt: under,
            max_overvolt: over,
            lagrangian: problem.lagrangian(cur),
        });
        let first = *first_step.get_or_insert(step_norm);
        if !step_norm.is_finite() || step_norm > divergence_limit(first) {
            return Ok((Status::Diverged, it, trajectory));
        }
        if (cur.p0 - prev.p0).abs() < cfg.sigma && step_inf < cfg.sigma_z {
            return Ok((Status::Converged, it, trajectory));
        }
    }
    Ok((Status::MaxIters, cfg.max_iters, trajectory))
}

/// Stepsize check against the estimated constants, if enabled.
pub(crate) fn stepsize_warnings<T: Scalar>(problem: &OpfProblem<T>) -> Vec<SolveWarning> {
    if !problem.config.check_stepsize {
        return Vec::new();
    }
    match estimate_constants(problem) {
        Ok(c) if problem.config.eps.as_f64() >= c.eps_bound => {
            vec![SolveWarning::Stepsize { eps: problem.config.eps.as_f64(), bound: c.eps_bound }]
        }
        Ok(_) => Vec::new(),
        Err(e) => vec![SolveWarning::ConstantsUnavailable { reason: e.to_string() }],
    }
}

/// Run the centralized iteration from `init` (or the projected origin).
pub fn solve_centralized<T: Scalar>(problem: &OpfProblem<T>, init: Option<IterateState<T>>) -> Result<SolveResult<T>> {
    let warnings = stepsize_warnings(problem);
    let init = match init {
        Some(s) => s,
        None => problem.initial_state()?,
    };
    let mut engine = CentralEngine::new(problem, init);
    let (status, iterations, trajectory) = drive(problem, &mut engine)?;
    Ok(SolveResult { status, iterations, state: engine.into_state(), trajectory, warnings })
}
