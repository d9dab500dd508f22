//! Radial multi-phase feeder model.
//!
//! Nodes are densely indexed with the slack bus at 0 and every parent
//! preceding its children (breadth-first order), so a forward scan over
//! node indices visits the tree root→leaf and a reverse scan leaf→root.

mod device;
pub mod io;
mod phase;

use std::collections::HashMap;

pub use device::{
    CostFunction, Curvature, Device, DeviceCost, FeasibleSet, QuadraticCost, SubstationCost,
};
pub use phase::{PerPhase, Phase, PhaseMatrix, PhaseSet};

use crate::clustering::Partition;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SLACK: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub phases: PhaseSet,
}

/// A line oriented parent→child. `z` is expanded to 3×3 over a, b, c with
/// zeros outside `phases`.
#[derive(Debug, Clone, PartialEq)]
pub struct Line<T> {
    pub from: usize,
    pub to: usize,
    pub phases: PhaseSet,
    pub z: PhaseMatrix<T>,
}

/// A (node, phase) coordinate of the phase-expanded vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub node: usize,
    pub phase: Phase,
}

/// Mapping between (node, phase) pairs and phase-expanded positions.
/// Coordinates are ordered by node, then by phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseIndex {
    coords: Vec<Coord>,
    by_node: Vec<[Option<usize>; 3]>,
}

impl PhaseIndex {
    fn build(nodes: &[Node]) -> Self {
        let mut coords = Vec::new();
        let mut by_node = vec![[None; 3]; nodes.len()];
        for (i, n) in nodes.iter().enumerate().skip(1) {
            for p in n.phases.iter() {
                by_node[i][p.index()] = Some(coords.len());
                coords.push(Coord { node: i, phase: p });
            }
        }
        PhaseIndex { coords, by_node }
    }

    /// N_Ξ, the number of phase-expanded coordinates.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn coord(&self, k: usize) -> Coord {
        self.coords[k]
    }

    pub fn position(&self, node: usize, phase: Phase) -> Option<usize> {
        self.by_node.get(node).and_then(|row| row[phase.index()])
    }

    /// Positions of all coordinates belonging to `node`, in phase order.
    pub fn node_positions(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.by_node[node].iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feeder<T> {
    nodes: Vec<Node>,
    lines: Vec<Line<T>>,
    parent_line: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    /// Squared slack voltage per phase (p.u.²).
    pub slack_v2: PerPhase<T>,
    /// Inelastic injection P_I per phase (p.u.).
    pub inelastic: [T; 3],
    pub base_mva: T,
    index: PhaseIndex,
}

impl<T: Scalar> Feeder<T> {
    /// Build a feeder from nodes already indexed with the slack at 0 and
    /// parents before children. Use [`io::parse_case`] for arbitrary ids.
    pub fn new(
        nodes: Vec<Node>,
        lines: Vec<Line<T>>,
        slack_v2: PerPhase<T>,
        inelastic: [T; 3],
        base_mva: T,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Topology("feeder has no nodes".into()));
        }
        if lines.len() + 1 != n {
            return Err(Error::Topology(format!(
                "a radial feeder with {n} nodes needs {} lines, found {}",
                n - 1,
                lines.len()
            )));
        }
        let mut parent_line = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (li, line) in lines.iter().enumerate() {
            if line.from >= n || line.to >= n {
                return Err(Error::UnknownNode(format!("line {li} references node out of range")));
            }
            if line.to == SLACK {
                return Err(Error::Topology("slack node cannot have a parent".into()));
            }
            if line.from == line.to {
                return Err(Error::Topology(format!("self-loop at node {}", nodes[line.to].id)));
            }
            if parent_line[line.to].is_some() {
                return Err(Error::Topology(format!(
                    "node '{}' has multiple parents",
                    nodes[line.to].id
                )));
            }
            parent_line[line.to] = Some(li);
            children[line.from].push(line.to);
        }
        // Parents must precede children; with one parent per non-slack node this
        // also rules out cycles and disconnected pieces.
        let mut depth = vec![0usize; n];
        for i in 1..n {
            let li = parent_line[i]
                .ok_or_else(|| Error::Topology(format!("node '{}' is disconnected", nodes[i].id)))?;
            let par = lines[li].from;
            if par >= i {
                return Err(Error::Topology(format!(
                    "node order is not root-first at '{}' (cycle or unordered input)",
                    nodes[i].id
                )));
            }
            depth[i] = depth[par] + 1;
        }

        let slack_phases = nodes[SLACK].phases;
        if slack_phases.is_empty() {
            return Err(Error::Phase("slack node has no phases".into()));
        }
        for p in slack_phases.iter() {
            match slack_v2.get(p) {
                Some(v) if v > T::zero() => {}
                _ => {
                    return Err(Error::Phase(format!(
                        "slack voltage for phase {p} missing or non-positive"
                    )))
                }
            }
        }
        for line in &lines {
            let child = &nodes[line.to];
            let parent = &nodes[line.from];
            if line.phases.is_empty() {
                return Err(Error::Phase(format!("line to '{}' has no phases", child.id)));
            }
            if !child.phases.is_subset(line.phases) {
                return Err(Error::Phase(format!(
                    "node '{}' phases {} not carried by its parent line ({})",
                    child.id, child.phases, line.phases
                )));
            }
            if !line.phases.is_subset(parent.phases) || !line.phases.is_subset(slack_phases) {
                return Err(Error::Phase(format!(
                    "line {}→{} phases {} not present upstream",
                    parent.id, child.id, line.phases
                )));
            }
            for p in Phase::ALL {
                for q in Phase::ALL {
                    let outside = !(line.phases.contains(p) && line.phases.contains(q));
                    let zv = line.z.get(p, q);
                    if outside && (zv.re != T::zero() || zv.im != T::zero()) {
                        return Err(Error::Phase(format!(
                            "line to '{}' has impedance on absent phase pair {p}{q}",
                            child.id
                        )));
                    }
                }
                if line.phases.contains(p) && line.z.get(p, p).re < T::zero() {
                    return Err(Error::Parse(format!(
                        "line to '{}' has negative resistance on phase {p}",
                        child.id
                    )));
                }
            }
        }
        for n in &nodes {
            if n.phases.is_empty() {
                return Err(Error::Phase(format!("node '{}' has no phases", n.id)));
            }
        }
        let index = PhaseIndex::build(&nodes);
        Ok(Feeder {
            nodes,
            lines,
            parent_line,
            children,
            depth,
            slack_v2,
            inelastic,
            base_mva,
            index,
        })
    }

    /// Number of nodes including the slack.
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn lines(&self) -> &[Line<T>] {
        &self.lines
    }

    pub fn index(&self) -> &PhaseIndex {
        &self.index
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent_line[i].map(|l| self.lines[l].from)
    }

    pub fn parent_line(&self, i: usize) -> Option<&Line<T>> {
        self.parent_line[i].map(|l| &self.lines[l])
    }

    pub fn parent_line_index(&self, i: usize) -> Option<usize> {
        self.parent_line[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn depth(&self, i: usize) -> usize {
        self.depth[i]
    }

    /// Node index for an external id.
    pub fn lookup(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn id_map(&self) -> HashMap<String, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect()
    }

    /// True when every non-slack node carries exactly one and the same phase.
    pub fn single_phase(&self) -> Option<Phase> {
        let first = self.nodes.get(1)?.phases;
        if first.len() != 1 || self.nodes[1..].iter().any(|n| n.phases != first) {
            return None;
        }
        first.iter().next()
    }

    /// Lines on the unique path from the slack to `i`, ordered root→i.
    pub fn path_to_root(&self, i: usize) -> Result<Vec<usize>> {
        if i == SLACK || i >= self.nodes.len() {
            return Err(Error::UnknownNode(format!("{i} is not a non-slack node")));
        }
        let mut path = Vec::with_capacity(self.depth[i]);
        let mut cur = i;
        while let Some(l) = self.parent_line[cur] {
            path.push(l);
            cur = self.lines[l].from;
        }
        path.reverse();
        Ok(path)
    }

    /// Sizes of the subtree rooted at every node (slack included).
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut size = vec![1usize; self.nodes.len()];
        for i in (1..self.nodes.len()).rev() {
            let p = self.parent(i).expect("non-slack has parent");
            size[p] += size[i];
        }
        size
    }

    /// All descendants of `i` (including `i`), ascending.
    pub fn descendants(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut k = 0;
        while k < out.len() {
            out.extend_from_slice(&self.children[out[k]]);
            k += 1;
        }
        out.sort_unstable();
        out
    }

    /// True if `anc` lies on the path from the slack to `node` (inclusive).
    pub fn is_ancestor(&self, anc: usize, node: usize) -> bool {
        let mut cur = node;
        loop {
            if cur == anc {
                return true;
            }
            if self.depth[cur] <= self.depth[anc] {
                return false;
            }
            match self.parent(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// ṽ_Ξ: the slack squared voltage of each coordinate's phase.
    pub fn v_tilde(&self) -> Vec<T> {
        self.index
            .coords()
            .iter()
            .map(|c| self.slack_v2.get(c.phase).expect("validated slack phase"))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Feeder<U> {
        let mut slack = PerPhase::empty();
        for (p, v) in self.slack_v2.iter() {
            slack.set(p, U::of(v.as_f64()));
        }
        Feeder {
            nodes: self.nodes.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| Line {
                    from: l.from,
                    to: l.to,
                    phases: l.phases,
                    z: l.z.cast(),
                })
                .collect(),
            parent_line: self.parent_line.clone(),
            children: self.children.clone(),
            depth: self.depth.clone(),
            slack_v2: slack,
            inelastic: self.inelastic.map(|x| U::of(x.as_f64())),
            base_mva: U::of(self.base_mva.as_f64()),
            index: self.index.clone(),
        }
    }

    /// Copy with every cross-phase impedance removed.
    pub fn without_mutual_impedance(&self) -> Self {
        let mut f = self.clone();
        for l in &mut f.lines {
            l.z = l.z.diagonal_part();
        }
        f
    }
}

/// A complete problem instance: feeder, devices, substation cost and an
/// optional explicit clustering.
#[derive(Debug, Clone)]
pub struct Case<T> {
    pub feeder: Feeder<T>,
    pub devices: Vec<Device<T>>,
    pub substation: SubstationCost<T>,
    pub clusters: Option<Partition>,
}

impl<T: Scalar> Case<T> {
    pub fn cast<U: Scalar>(&self) -> Case<U> {
        Case {
            feeder: self.feeder.cast(),
            devices: self.devices.iter().map(Device::cast).collect(),
            substation: SubstationCost {
                alpha: U::of(self.substation.alpha.as_f64()),
                p0_target: U::of(self.substation.p0_target.as_f64()),
            },
            clusters: self.clusters.clone(),
        }
    }

    /// Device attached to each coordinate, if any. Fails on two devices
    /// sharing a coordinate or a device on a phase its node lacks.
    pub fn coord_devices(&self) -> Result<Vec<Option<usize>>> {
        let idx = self.feeder.index();
        let mut map = vec![None; idx.len()];
        for (d, dev) in self.devices.iter().enumerate() {
            let pos = idx.position(dev.node, dev.phase).ok_or_else(|| {
                Error::Phase(format!(
                    "device {d} on phase {} absent at node '{}'",
                    dev.phase,
                    self.feeder.nodes.get(dev.node).map(|n| n.id.as_str()).unwrap_or("?")
                ))
            })?;
            if map[pos].replace(d).is_some() {
                return Err(Error::Device(format!(
                    "two devices on node '{}' phase {}",
                    self.feeder.node(dev.node).id,
                    dev.phase
                )));
            }
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn path_to_root_on_chain_and_star() {
        let line3 = synth::line3().feeder;
        let p2 = line3.path_to_root(2).unwrap();
        let pairs: Vec<_> = p2.iter().map(|&l| (line3.lines()[l].from, line3.lines()[l].to)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        let p1 = line3.path_to_root(1).unwrap();
        assert_eq!(p1.len(), 1);
        assert_eq!(line3.lines()[p1[0]].to, 1);
        assert!(matches!(line3.path_to_root(0), Err(Error::UnknownNode(_))));
        assert!(matches!(line3.path_to_root(9), Err(Error::UnknownNode(_))));

        let star = synth::star_single_phase(2, 0.1, 0.1).feeder;
        let p = star.path_to_root(2).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((star.lines()[p[0]].from, star.lines()[p[0]].to), (0, 2));
    }

    #[test]
    fn path_length_is_depth() {
        let case = synth::random_multiphase(40, 7);
        let f = &case.feeder;
        for i in 1..f.num_nodes() {
            let path = f.path_to_root(i).unwrap();
            assert_eq!(path.len(), f.depth(i));
            assert_eq!(f.lines()[path[0]].from, SLACK);
            assert_eq!(f.lines()[*path.last().unwrap()].to, i);
            for w in path.windows(2) {
                assert_eq!(f.lines()[w[0]].to, f.lines()[w[1]].from);
            }
        }
    }

    #[test]
    fn rejects_phase_not_on_parent_line() {
        let nodes = vec![
            Node { id: "0".into(), phases: PhaseSet::ABC },
            Node { id: "1".into(), phases: "ab".parse().unwrap() },
        ];
        let z = PhaseMatrix::diagonal(PhaseSet::single(Phase::A), num_complex::Complex::new(0.1, 0.1));
        let lines = vec![Line { from: 0, to: 1, phases: PhaseSet::single(Phase::A), z }];
        let mut v = PerPhase::empty();
        for p in Phase::ALL {
            v.set(p, 1.0);
        }
        let err = Feeder::new(nodes, lines, v, [0.0; 3], 1.0).unwrap_err();
        assert!(matches!(err, Error::Phase(_)));
    }

    #[test]
    fn index_orders_by_node_then_phase() {
        let f = synth::tri2().feeder;
        assert_eq!(f.index().len(), 3);
        assert_eq!(f.index().position(1, Phase::B), Some(1));
        assert_eq!(f.v_tilde(), vec![1.0; 3]);
    }
}
