//! Linear voltage model, substation power, and nonlinear sweep oracles.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feeder::{Feeder, Phase, SLACK};
use crate::scalar::{Cx, Scalar};
use crate::sensitivity::SensitivityPack;

const SWEEP_TOL: f64 = 1e-10;
const SWEEP_MAX_ITERS: usize = 100;

/// Injections, squared voltages and substation power at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerState<T> {
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub v: Vec<T>,
    pub p0: T,
}

/// Sending-end flow and squared current of one line phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchFlow<T> {
    pub line: usize,
    pub phase: Phase,
    pub p: T,
    pub q: T,
    pub ell: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BranchState<T> {
    pub flows: Vec<BranchFlow<T>>,
}

impl<T: Scalar> BranchState<T> {
    /// CSV `line,phase,P,Q,ell`, lines named `from->to` by external id.
    pub fn write_csv<W: Write>(&self, feeder: &Feeder<T>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["line", "phase", "P", "Q", "ell"])?;
        for f in &self.flows {
            let l = &feeder.lines()[f.line];
            w.write_record([
                format!("{}->{}", feeder.node(l.from).id, feeder.node(l.to).id),
                f.phase.to_string(),
                format!("{:.16e}", f.p.as_f64()),
                format!("{:.16e}", f.q.as_f64()),
                format!("{:.16e}", f.ell.as_f64()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `v = R·p + X·q + ṽ`.
pub fn linear_voltages<T: Scalar>(pack: &SensitivityPack<T>, p: &[T], q: &[T], v_tilde: &[T]) -> Result<Vec<T>> {
    if v_tilde.len() != pack.dim() {
        return Err(Error::Dimension { expected: pack.dim(), got: v_tilde.len() });
    }
    let mut v = pack.apply(p, q)?;
    for (vi, &t) in v.iter_mut().zip(v_tilde) {
        *vi += t;
    }
    Ok(v)
}

/// `P₀ = −Σ P_I − Σ p`, summed in ascending coordinate order.
pub fn substation_power<T: Scalar>(feeder: &Feeder<T>, p: &[T]) -> Result<T> {
    let n = feeder.index().len();
    if p.len() != n {
        return Err(Error::Dimension { expected: n, got: p.len() });
    }
    let mut total = T::zero();
    for &pi in &feeder.inelastic {
        total -= pi;
    }
    for &pi in p {
        total -= pi;
    }
    Ok(total)
}

fn check_dims<T: Scalar>(feeder: &Feeder<T>, p: &[T], q: &[T]) -> Result<()> {
    let n = feeder.index().len();
    for v in [p, q] {
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
    }
    Ok(())
}

fn slack_phasor<T: Scalar>(feeder: &Feeder<T>, ph: Phase) -> Cx<T> {
    let mag = feeder.slack_v2.get(ph).unwrap_or(T::one()).sqrt();
    let angle = match ph {
        Phase::A => 0.0,
        Phase::B => -2.0 * std::f64::consts::PI / 3.0,
        Phase::C => 2.0 * std::f64::consts::PI / 3.0,
    };
    Cx::from_polar(mag, T::of(angle))
}

/// Multi-phase backward/forward sweep with constant-power injections.
///
/// Starts flat at the slack phasors, stops once the largest phasor change of
/// a sweep is below 1e−10 p.u. `P̂₀` is the active power leaving the slack
/// minus the inelastic injections, and so includes line losses.
pub fn nonlinear_solve<T: Scalar>(feeder: &Feeder<T>, p: &[T], q: &[T]) -> Result<(PowerState<T>, BranchState<T>)> {
    check_dims(feeder, p, q)?;
    let n = feeder.num_nodes();
    let idx = feeder.index();
    let zero = Cx::new(T::zero(), T::zero());
    let mut volt = vec![[zero; 3]; n];
    for ph in feeder.node(SLACK).phases.iter() {
        let s = slack_phasor(feeder, ph);
        for row in volt.iter_mut() {
            row[ph.index()] = s;
        }
    }
    let mut cur = vec![[zero; 3]; n];
    let tol = T::of(SWEEP_TOL);
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    for _ in 0..SWEEP_MAX_ITERS {
        // backward: line current into each node, leaf to root
        for row in cur.iter_mut() {
            *row = [zero; 3];
        }
        for i in (1..n).rev() {
            for pos in idx.node_positions(i) {
                let ph = idx.coord(pos).phase.index();
                let s = Cx::new(p[pos], q[pos]);
                // negative of the current the node injects
                cur[i][ph] -= (s / volt[i][ph]).conj();
            }
            let par = feeder.parent(i).unwrap();
            if par != SLACK {
                let j = cur[i];
                for ph in 0..3 {
                    cur[par][ph] += j[ph];
                }
            }
        }
        // forward: voltage drop along each line
        let mut change = T::zero();
        for i in 1..n {
            let line = feeder.parent_line(i).unwrap();
            let drop = line.z.mul_vec(line.phases, &cur[i]);
            for ph in line.phases.iter() {
                let k = ph.index();
                let new = volt[line.from][k] - drop[k];
                change = change.max((new - volt[i][k]).norm());
                volt[i][k] = new;
            }
        }
        last_change = change.as_f64();
        if !last_change.is_finite() {
            break;
        }
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: SWEEP_MAX_ITERS, last_change });
    }
    let v: Vec<T> = idx.coords().iter().map(|c| volt[c.node][c.phase.index()].norm_sqr()).collect();
    let mut flows = Vec::with_capacity(feeder.lines().len());
    let mut p0 = T::zero();
    for &pi in &feeder.inelastic {
        p0 -= pi;
    }
    for (li, line) in feeder.lines().iter().enumerate() {
        for ph in line.phases.iter() {
            let k = ph.index();
            let j = cur[line.to][k];
            let s = volt[line.from][k] * j.conj();
            flows.push(BranchFlow { line: li, phase: ph, p: s.re, q: s.im, ell: j.norm_sqr() });
            if line.from == SLACK {
                p0 += s.re;
            }
        }
    }
    Ok((PowerState { p: p.to_vec(), q: q.to_vec(), v, p0 }, BranchState { flows }))
}

/// Single-phase DistFlow sweep on squared magnitudes. With `losses` off it
/// collapses to the linear model after one pass.
pub fn distflow_sweep<T: Scalar>(
    feeder: &Feeder<T>,
    p: &[T],
    q: &[T],
    losses: bool,
) -> Result<(PowerState<T>, BranchState<T>)> {
    let phase = feeder
        .single_phase()
        .ok_or_else(|| Error::Phase("DistFlow sweep needs a single-phase feeder".into()))?;
    check_dims(feeder, p, q)?;
    let n = feeder.num_nodes();
    let v0 = feeder.slack_v2.get(phase).unwrap_or(T::one());
    let mut v = vec![v0; n];
    let mut ell = vec![T::zero(); n];
    let mut pf = vec![T::zero(); n];
    let mut qf = vec![T::zero(); n];
    let rx = |i: usize| {
        let z = feeder.parent_line(i).unwrap().z.get(phase, phase);
        (z.re, z.im)
    };
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let max_iters = if losses { 200 } else { 1 };
    for _ in 0..max_iters {
        pf.iter_mut().for_each(|x| *x = T::zero());
        qf.iter_mut().for_each(|x| *x = T::zero());
        for i in (1..n).rev() {
            let (r, x) = rx(i);
            pf[i] += -p[i - 1] + r * ell[i];
            qf[i] += -q[i - 1] + x * ell[i];
            let par = feeder.parent(i).unwrap();
            if par != SLACK {
                let (a, b) = (pf[i], qf[i]);
                pf[par] += a;
                qf[par] += b;
            }
        }
        let mut change = T::zero();
        for i in 1..n {
            let (r, x) = rx(i);
            let par = feeder.parent(i).unwrap();
            let new = v[par] - T::two() * (r * pf[i] + x * qf[i]) + (r * r + x * x) * ell[i];
            change = change.max((new - v[i]).abs());
            v[i] = new;
        }
        if losses {
            for i in 1..n {
                let par = feeder.parent(i).unwrap();
                let new = (pf[i] * pf[i] + qf[i] * qf[i]) / v[par];
                change = change.max((new - ell[i]).abs());
                ell[i] = new;
            }
        }
        last_change = change.as_f64();
        if !last_change.is_finite() {
            break;
        }
        if !losses || change < T::of(1e-14) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: max_iters, last_change });
    }
    let mut p0 = T::zero();
    for &pi in &feeder.inelastic {
        p0 -= pi;
    }
    let mut flows = Vec::with_capacity(n - 1);
    for i in 1..n {
        let li = feeder.parent_line_index(i).unwrap();
        flows.push(BranchFlow { line: li, phase, p: pf[i], q: qf[i], ell: ell[i] });
        if feeder.parent(i) == Some(SLACK) {
            p0 += pf[i];
        }
    }
    flows.sort_by_key(|f| f.line);
    Ok((PowerState { p: p.to_vec(), q: q.to_vec(), v: v[1..].to_vec(), p0 }, BranchState { flows }))
}

/// `(‖v − v̂‖₂, |P₀ − P̂₀|)` between the linear model and the sweep.
pub fn model_discrepancy<T: Scalar>(feeder: &Feeder<T>, pack: &SensitivityPack<T>, p: &[T], q: &[T]) -> Result<(T, T)> {
    let (state, _) = nonlinear_solve(feeder, p, q)?;
    let v = linear_voltages(pack, p, q, &feeder.v_tilde())?;
    let e1 = v.iter().zip(&state.v).fold(T::zero(), |a, (&x, &y)| a + (x - y) * (x - y)).sqrt();
    let e2 = (substation_power(feeder, p)? - state.p0).abs();
    Ok((e1, e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_examples() {
        let f = synth::line3().feeder;
        let pack = SensitivityPack::build(&f);
        let vt = f.v_tilde();
        assert_eq!(linear_voltages(&pack, &[0.0; 2], &[0.0; 2], &vt).unwrap(), vt);
        let v = linear_voltages(&pack, &[-0.1, 0.0], &[0.0; 2], &vt).unwrap();
        assert_abs_diff_eq!(v[0], 0.98, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.98, epsilon = 1e-15);
        let v = linear_voltages(&pack, &[0.0; 2], &[0.0, -0.1], &vt).unwrap();
        assert_abs_diff_eq!(v[0], 0.98, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.94, epsilon = 1e-15);
        assert!(matches!(linear_voltages(&pack, &[0.0], &[0.0; 2], &vt), Err(Error::Dimension { .. })));
    }

    #[test]
    fn substation_examples() {
        let mut f = synth::line3().feeder;
        f.inelastic = [5.0, 0.0, 0.0];
        assert_eq!(substation_power(&f, &[1.0, -2.0]).unwrap(), -4.0);
        f.inelastic = [0.0; 3];
        assert_eq!(substation_power(&f, &[0.0, 0.0]).unwrap(), 0.0);
        let mut t = synth::tri2().feeder;
        t.inelastic = [0.1; 3];
        assert_abs_diff_eq!(substation_power(&t, &[-0.1; 3]).unwrap(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn two_node_sweep() {
        let f = synth::chain(2, 0.01, 0.01).feeder;
        let (st, br) = nonlinear_solve(&f, &[-0.1], &[0.0]).unwrap();
        assert!(st.v[0] < 0.998);
        assert!(0.998 - st.v[0] < 2e-4);
        assert_eq!(br.flows.len(), 1);
        let (st, br) = nonlinear_solve(&f, &[0.0], &[0.0]).unwrap();
        assert_eq!(st.v, vec![1.0]);
        assert!(br.flows.iter().all(|b| b.p == 0.0 && b.q == 0.0 && b.ell == 0.0));
        assert!(matches!(nonlinear_solve(&f, &[-1e6], &[0.0]), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn lossless_distflow_is_linear() {
        let case = synth::balanced_dary(40, 3, 5);
        let f = &case.feeder;
        let pack = SensitivityPack::build(f);
        let p: Vec<f64> = (0..39).map(|i| -0.001 * (i % 7) as f64).collect();
        let q: Vec<f64> = (0..39).map(|i| 0.0005 * (i % 5) as f64 - 0.001).collect();
        let (st, _) = distflow_sweep(f, &p, &q, false).unwrap();
        let v = linear_voltages(&pack, &p, &q, &f.v_tilde()).unwrap();
        for (a, b) in st.v.iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn discrepancy_grows_with_load() {
        let f = synth::line3().feeder;
        let pack = SensitivityPack::build(&f);
        let (e1_light, _) = model_discrepancy(&f, &pack, &[-0.05, -0.05], &[-0.02, -0.02]).unwrap();
        let (e1_heavy, _) = model_discrepancy(&f, &pack, &[-0.25, -0.25], &[-0.1, -0.1]).unwrap();
        assert!(e1_light < 1e-3);
        assert!(e1_heavy > e1_light);
        let (a, b) = model_discrepancy(&f, &pack, &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }
}
