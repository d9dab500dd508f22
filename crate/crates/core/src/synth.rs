//! Reference and synthetic feeders.
//!
//! Fixed fixtures (`line3`, `tri2`, `star8`, `binary63`, `tri2_extended`)
//! are deterministic; generated families take a seed and are fully
//! determined by it.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clustering::{Partition, Subtree};
use crate::feeder::{
    Case, Device, DeviceCost, FeasibleSet, Feeder, Line, Node, PerPhase, Phase, PhaseMatrix, PhaseSet,
    QuadraticCost, SubstationCost,
};

fn unit_slack(phases: PhaseSet) -> PerPhase<f64> {
    let mut v = PerPhase::empty();
    for p in phases.iter() {
        v.set(p, 1.0);
    }
    v
}

/// Impedance over `phases` with self terms `r + ix` and mutual terms
/// `mutual·(r + ix)`.
pub fn phase_impedance(phases: PhaseSet, r: f64, x: f64, mutual: f64) -> PhaseMatrix<f64> {
    let mut z = PhaseMatrix::zero();
    for a in phases.iter() {
        for b in phases.iter() {
            let k = if a == b { 1.0 } else { mutual };
            z.set(a, b, Complex::new(k * r, k * x));
        }
    }
    z
}

fn quad(cp: f64, cq: f64, p0: f64, q0: f64) -> DeviceCost<f64> {
    DeviceCost::Quadratic(QuadraticCost { cp, cq, p0, q0 })
}

fn boxed(p_min: f64, p_max: f64, q_min: f64, q_max: f64) -> FeasibleSet<f64> {
    FeasibleSet::Box { p_min, p_max, q_min, q_max }
}

fn assemble(
    nodes: Vec<Node>,
    lines: Vec<Line<f64>>,
    devices: Vec<Device<f64>>,
    substation: SubstationCost<f64>,
) -> Case<f64> {
    let slack = unit_slack(nodes[0].phases);
    let feeder = Feeder::new(nodes, lines, slack, [0.0; 3], 1.0).expect("synthetic feeder is valid");
    let case = Case { feeder, devices, substation, clusters: None };
    case.coord_devices().expect("synthetic devices are valid");
    case
}

fn node(id: impl ToString, phases: PhaseSet) -> Node {
    Node { id: id.to_string(), phases }
}

fn single(from: usize, to: usize, r: f64, x: f64) -> Line<f64> {
    let a = PhaseSet::single(Phase::A);
    Line { from, to, phases: a, z: phase_impedance(a, r, x, 0.0) }
}

/// Three single-phase nodes in a chain, `r = x = [0.1, 0.2]`. At nominal
/// load node 2 sits below 0.95 p.u.
pub fn line3() -> Case<f64> {
    let a = PhaseSet::single(Phase::A);
    let nodes = (0..3).map(|i| node(i, a)).collect();
    let lines = vec![single(0, 1, 0.1, 0.1), single(1, 2, 0.2, 0.2)];
    let devices = [(1, -0.1), (2, -0.15)]
        .into_iter()
        .map(|(n, p0)| Device {
            node: n,
            phase: Phase::A,
            set: boxed(-0.2, 0.0, -0.1, 0.1),
            cost: quad(1.0, 1.0, p0, -0.05),
        })
        .collect();
    assemble(nodes, lines, devices, SubstationCost::default())
}

/// Single-phase chain of `n` nodes (slack included), no devices.
pub fn chain(n: usize, r: f64, x: f64) -> Case<f64> {
    let a = PhaseSet::single(Phase::A);
    let nodes = (0..n).map(|i| node(i, a)).collect();
    let lines = (1..n).map(|i| single(i - 1, i, r, x)).collect();
    assemble(nodes, lines, Vec::new(), SubstationCost::default())
}

/// Slack with `k` single-phase leaves, no devices.
pub fn star_single_phase(k: usize, r: f64, x: f64) -> Case<f64> {
    let a = PhaseSet::single(Phase::A);
    let nodes = (0..=k).map(|i| node(i, a)).collect();
    let lines = (1..=k).map(|i| single(0, i, r, x)).collect();
    assemble(nodes, lines, Vec::new(), SubstationCost::default())
}

/// One three-phase line, self impedance `0.1+0.3i`, mutual `0.05+0.15i`.
pub fn tri2() -> Case<f64> {
    let abc = PhaseSet::ABC;
    let nodes = vec![node(0, abc), node(1, abc)];
    let lines = vec![Line { from: 0, to: 1, phases: abc, z: phase_impedance(abc, 0.1, 0.3, 0.5) }];
    let devices = Phase::ALL
        .into_iter()
        .enumerate()
        .map(|(k, ph)| Device {
            node: 1,
            phase: ph,
            set: boxed(-0.2, 0.1, -0.1, 0.1),
            cost: quad(1.0, 1.0, -0.05 - 0.01 * k as f64, -0.02),
        })
        .collect();
    assemble(nodes, lines, devices, SubstationCost { alpha: 0.1, p0_target: 0.1 })
}

/// Three-phase slack feeding eight leaves with mixed phase sets and every
/// device kind.
pub fn star8() -> Case<f64> {
    let sets = ["abc", "a", "b", "c", "ab", "bc", "ca", "abc"];
    let mut nodes = vec![node(0, PhaseSet::ABC)];
    let mut lines = Vec::new();
    let mut devices = Vec::new();
    for (k, s) in sets.iter().enumerate() {
        let i = k + 1;
        let ph: PhaseSet = s.parse().unwrap();
        nodes.push(node(i, ph));
        let r = 0.01 + 0.002 * k as f64;
        lines.push(Line { from: 0, to: i, phases: ph, z: phase_impedance(ph, r, 2.0 * r, 0.4) });
        for (j, p) in ph.iter().enumerate() {
            let set = match (k + j) % 3 {
                0 => boxed(-0.1, 0.05, -0.05, 0.05),
                1 => FeasibleSet::PvInverter { p_av: 0.05, eta_cap: 0.06 },
                _ => FeasibleSet::Storage { p_min: -0.05, p_max: 0.05, eta_cap: 0.07 },
            };
            let p0 = if (k + j) % 3 == 1 { 0.03 } else { -0.04 };
            devices.push(Device { node: i, phase: p, set, cost: quad(1.0 + 0.1 * j as f64, 1.5, p0, -0.01) });
        }
    }
    assemble(nodes, lines, devices, SubstationCost { alpha: 0.05, p0_target: 0.0 })
}

/// Complete binary tree of 63 nodes (slack at the root), single-phase, a
/// box device on every node.
pub fn binary63() -> Case<f64> {
    let mut case = balanced_dary(63, 2, 63);
    case.substation = SubstationCost { alpha: 0.02, p0_target: 0.3 };
    case
}

/// Balanced `d`-ary tree with `n` nodes in heap order, per-line impedance
/// log-uniform in [0.01, 0.2] p.u. scaled down by depth-independent factor
/// `1/n`, and a box device with a quadratic cost at a random nominal point
/// on every node.
pub fn balanced_dary(n: usize, d: usize, seed: u64) -> Case<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = PhaseSet::single(Phase::A);
    let nodes = (0..n).map(|i| node(i, a)).collect();
    let scale = 10.0 / n.max(10) as f64;
    let lines = (1..n)
        .map(|i| {
            let r = log_uniform(&mut rng, 0.01, 0.2) * scale;
            let x = log_uniform(&mut rng, 0.01, 0.2) * scale;
            single((i - 1) / d, i, r, x)
        })
        .collect();
    let devices = (1..n).map(|i| random_box_device(&mut rng, i, Phase::A, n)).collect();
    assemble(nodes, lines, devices, SubstationCost::default())
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_box_device(rng: &mut ChaCha8Rng, node: usize, phase: Phase, n: usize) -> Device<f64> {
    let load = 2.0 / n.max(2) as f64;
    let p0 = -rng.gen_range(0.2..1.0) * load;
    let q0 = -rng.gen_range(0.0..0.5) * load;
    Device {
        node,
        phase,
        set: boxed(-2.0 * load, 0.5 * load, -load, load),
        cost: quad(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), p0, q0),
    }
}

/// `k` lateral `d`-ary trees hanging off the slack, `n` non-slack nodes in
/// total with lateral sizes differing by at most one. Returns the case and
/// the partition with one subtree per lateral.
pub fn laterals(n: usize, k: usize, d: usize, seed: u64) -> (Case<f64>, Partition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = PhaseSet::single(Phase::A);
    let k = k.clamp(1, n.max(1));
    let mut nodes = vec![node(0, a)];
    let mut lines = Vec::with_capacity(n);
    let mut subtrees = Vec::with_capacity(k);
    let scale = 10.0 / n.max(10) as f64;
    for lat in 0..k {
        let size = n / k + usize::from(lat < n % k);
        let base = nodes.len();
        for local in 0..size {
            let i = base + local;
            nodes.push(node(i, a));
            let parent = if local == 0 { 0 } else { base + (local - 1) / d };
            let r = log_uniform(&mut rng, 0.01, 0.2) * scale;
            let x = log_uniform(&mut rng, 0.01, 0.2) * scale;
            lines.push(single(parent, i, r, x));
        }
        subtrees.push(Subtree { root: base, members: (base..base + size).collect() });
    }
    let total = nodes.len();
    let devices = (1..total).map(|i| random_box_device(&mut rng, i, Phase::A, total)).collect();
    let case = assemble(nodes, lines, devices, SubstationCost::default());
    let part = Partition::with_remaining_unclustered(total, subtrees);
    (case, part)
}

fn random_subset(rng: &mut ChaCha8Rng, of: PhaseSet) -> PhaseSet {
    let phases: Vec<Phase> = of.iter().collect();
    loop {
        let pick = PhaseSet::from_phases(phases.iter().copied().filter(|_| rng.gen_bool(0.5)));
        if !pick.is_empty() {
            return pick;
        }
    }
}

/// Random radial three-phase feeder with `n` nodes: a three-phase head,
/// random recursive topology, laterals on random phase subsets, mutual
/// impedance on every multi-phase line, and mixed devices on about two
/// thirds of the coordinates.
pub fn random_multiphase(n: usize, seed: u64) -> Case<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![node(0, PhaseSet::ABC)];
    let mut lines = Vec::new();
    let load = 1.0 / n.max(2) as f64;
    let zscale = 20.0 / n.max(20) as f64;
    for i in 1..n {
        let parent = if i == 1 { 0 } else { rng.gen_range(1.max(i.saturating_sub(8))..i) };
        let pph = nodes[parent].phases;
        let ph = if pph == PhaseSet::ABC && rng.gen_bool(0.7) { pph } else { random_subset(&mut rng, pph) };
        nodes.push(node(format!("n{i}"), ph));
        let r = rng.gen_range(0.005..0.02) * zscale;
        let x = r * rng.gen_range(1.0..3.0);
        lines.push(Line { from: parent, to: i, phases: ph, z: phase_impedance(ph, r, x, rng.gen_range(0.2..0.5)) });
    }
    let mut devices = Vec::new();
    for (i, nd) in nodes.iter().enumerate().skip(1) {
        for ph in nd.phases.iter() {
            if !rng.gen_bool(0.66) {
                continue;
            }
            let p0 = -rng.gen_range(0.2..1.0) * load;
            let q0 = -rng.gen_range(0.0..0.4) * load;
            let set = match rng.gen_range(0..3) {
                0 => boxed(-2.0 * load, 0.5 * load, -load, load),
                1 => FeasibleSet::PvInverter { p_av: load, eta_cap: 1.2 * load },
                _ => FeasibleSet::Storage { p_min: -2.0 * load, p_max: load, eta_cap: 2.0 * load },
            };
            devices.push(Device {
                node: i,
                phase: ph,
                set,
                cost: quad(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), p0, q0),
            });
        }
    }
    assemble(nodes, lines, devices, SubstationCost { alpha: 0.01, p0_target: 0.2 })
}

/// Twenty-node three-phase feeder: a twelve-node trunk with two laterals,
/// a device on every coordinate.
pub fn tri2_extended() -> Case<f64> {
    let abc = PhaseSet::ABC;
    let mut nodes = vec![node(0, abc)];
    let mut lines = Vec::new();
    let mut add = |nodes: &mut Vec<Node>, parent: usize, ph: PhaseSet, r: f64| {
        let i = nodes.len();
        nodes.push(node(i, ph));
        lines.push(Line { from: parent, to: i, phases: ph, z: phase_impedance(ph, r, 2.5 * r, 0.45) });
    };
    for i in 1..=12 {
        add(&mut nodes, i - 1, abc, 0.004);
    }
    for (k, parent) in [(0, 4), (1, 13), (2, 14), (3, 15)] {
        let ph = if k == 0 { "ab".parse().unwrap() } else { nodes[parent].phases };
        add(&mut nodes, parent, ph, 0.006);
    }
    let a: PhaseSet = "a".parse().unwrap();
    add(&mut nodes, 8, "ca".parse().unwrap(), 0.006);
    add(&mut nodes, 17, a, 0.008);
    add(&mut nodes, 18, a, 0.008);
    let mut devices = Vec::new();
    for (i, nd) in nodes.iter().enumerate().skip(1) {
        for (j, ph) in nd.phases.iter().enumerate() {
            let kind = (i + j) % 3;
            let set = match kind {
                0 => boxed(-0.08, 0.02, -0.04, 0.04),
                1 => FeasibleSet::PvInverter { p_av: 0.03, eta_cap: 0.04 },
                _ => FeasibleSet::Storage { p_min: -0.06, p_max: 0.03, eta_cap: 0.06 },
            };
            let p0 = if kind == 1 { 0.02 } else { -0.03 - 0.001 * i as f64 };
            devices.push(Device { node: i, phase: ph, set, cost: quad(1.0, 1.0 + 0.2 * j as f64, p0, -0.01) });
        }
    }
    assemble(nodes, lines, devices, SubstationCost { alpha: 0.05, p0_target: 0.5 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic_and_valid() {
        assert_eq!(line3().feeder.num_nodes(), 3);
        assert_eq!(tri2().feeder.index().len(), 3);
        assert_eq!(star8().feeder.num_nodes(), 9);
        assert_eq!(binary63().feeder.num_nodes(), 63);
        assert_eq!(tri2_extended().feeder.num_nodes(), 20);
        let a = random_multiphase(200, 11);
        let b = random_multiphase(200, 11);
        assert_eq!(a.feeder, b.feeder);
        assert_eq!(a.devices.len(), b.devices.len());
        let (c, p) = laterals(100, 7, 2, 3);
        assert_eq!(c.feeder.num_nodes(), 101);
        assert_eq!(p.subtrees.len(), 7);
        assert!(crate::clustering::validate_partition(&c.feeder, &p).is_ok());
    }
}
