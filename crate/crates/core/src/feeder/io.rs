//! Feeder description files (JSON).
//!
//! Node ids are arbitrary strings (numbers are accepted and stringified).
//! Loading re-indexes nodes breadth-first from the slack, children in file
//! order of their lines, so writing a loaded case back out and reading it
//! again reproduces the same indexing.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{
    Case, Device, DeviceCost, FeasibleSet, Feeder, Line, Node, PerPhase, Phase, PhaseMatrix,
    PhaseSet, QuadraticCost, SubstationCost, SLACK,
};
use crate::clustering::{Partition, Subtree};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum IdRepr {
    Str(String),
    Num(i64),
}

impl IdRepr {
    fn into_string(self) -> String {
        match self {
            IdRepr::Str(s) => s,
            IdRepr::Num(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PhasesRepr {
    List(Vec<String>),
    Str(String),
}

impl PhasesRepr {
    fn parse(&self) -> Result<PhaseSet> {
        match self {
            PhasesRepr::Str(s) => s.parse(),
            PhasesRepr::List(v) => {
                let set = PhaseSet::from_phases(
                    v.iter().map(|s| s.parse::<Phase>()).collect::<Result<Vec<_>>>()?,
                );
                if set.is_empty() {
                    return Err(Error::Phase("empty phase list".into()));
                }
                Ok(set)
            }
        }
    }

    fn from_set(set: PhaseSet) -> Self {
        PhasesRepr::List(set.iter().map(|p| p.to_string()).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeRecord {
    id: IdRepr,
    phases: PhasesRepr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LineRecord {
    from: IdRepr,
    to: IdRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phases: Option<PhasesRepr>,
    z: Vec<Vec<Option<[f64; 2]>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SetRecord {
    Box { p_min: f64, p_max: f64, q_min: f64, q_max: f64 },
    PvInverter { p_av: f64, eta_cap: f64 },
    Storage { p_min: f64, p_max: f64, eta_cap: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CostRecord {
    cp: f64,
    cq: f64,
    #[serde(default)]
    p0: f64,
    #[serde(default)]
    q0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DeviceRecord {
    node: IdRepr,
    phase: String,
    set: SetRecord,
    cost: CostRecord,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct SubstationRecord {
    #[serde(default)]
    alpha: f64,
    #[serde(default)]
    p0_target: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterRecord {
    root: IdRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    members: Option<Vec<IdRepr>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeederFile {
    #[serde(default = "default_base")]
    base_mva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slack: Option<IdRepr>,
    slack_v2: BTreeMap<String, f64>,
    nodes: Vec<NodeRecord>,
    lines: Vec<LineRecord>,
    #[serde(default)]
    devices: Vec<DeviceRecord>,
    #[serde(default)]
    inelastic: BTreeMap<String, f64>,
    #[serde(default)]
    substation_cost: SubstationRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clusters: Option<Vec<ClusterRecord>>,
}

fn default_base() -> f64 {
    1.0
}

/// Partition file: `{subtrees: [{root, members}], unclustered: [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartitionFile {
    subtrees: Vec<PartitionSubtree>,
    #[serde(default)]
    unclustered: Vec<IdRepr>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartitionSubtree {
    root: IdRepr,
    members: Vec<IdRepr>,
}

pub fn load_case<T: Scalar>(path: impl AsRef<Path>) -> Result<Case<T>> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_case(&text)
}

fn phase_map<T: Scalar>(m: &BTreeMap<String, f64>) -> Result<PerPhase<T>> {
    let mut out = PerPhase::empty();
    for (k, v) in m {
        out.set(k.parse::<Phase>()?, T::of(*v));
    }
    Ok(out)
}

pub fn parse_case<T: Scalar>(text: &str) -> Result<Case<T>> {
    let file: FeederFile = serde_json::from_str(text)?;

    let mut ids: Vec<String> = Vec::with_capacity(file.nodes.len());
    let mut phases = Vec::with_capacity(file.nodes.len());
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for rec in &file.nodes {
        let id = rec.id.clone().into_string();
        if by_id.insert(id.clone(), ids.len()).is_some() {
            return Err(Error::Parse(format!("duplicate node id '{id}'")));
        }
        ids.push(id);
        phases.push(rec.phases.parse()?);
    }
    let lookup = |id: &IdRepr| -> Result<usize> {
        let s = id.clone().into_string();
        by_id.get(&s).copied().ok_or(Error::UnknownNode(s))
    };

    // incoming line per file node
    let mut incoming: Vec<Option<usize>> = vec![None; ids.len()];
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for (li, l) in file.lines.iter().enumerate() {
        let (f, t) = (lookup(&l.from)?, lookup(&l.to)?);
        if f == t {
            return Err(Error::Topology(format!("self-loop at node '{}'", ids[f])));
        }
        if incoming[t].replace(li).is_some() {
            return Err(Error::Topology(format!("node '{}' has multiple parents", ids[t])));
        }
        outgoing[f].push(li);
    }
    let slack_file = match &file.slack {
        Some(id) => {
            let s = lookup(id)?;
            if incoming[s].is_some() {
                return Err(Error::Topology(format!("slack '{}' has a parent line", ids[s])));
            }
            s
        }
        None => {
            let roots: Vec<usize> = (0..ids.len()).filter(|&i| incoming[i].is_none()).collect();
            match roots.as_slice() {
                [r] => *r,
                [] => return Err(Error::Topology("no root node: the lines contain a cycle".into())),
                _ => {
                    return Err(Error::Topology(format!(
                        "feeder is disconnected: {} nodes without a parent",
                        roots.len()
                    )))
                }
            }
        }
    };

    // breadth-first re-indexing
    let mut new_of = vec![usize::MAX; ids.len()];
    let mut order = Vec::with_capacity(ids.len());
    let mut queue = VecDeque::from([slack_file]);
    new_of[slack_file] = 0;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &li in &outgoing[u] {
            let t = lookup(&file.lines[li].to)?;
            if new_of[t] != usize::MAX {
                return Err(Error::Topology(format!("cycle through node '{}'", ids[t])));
            }
            new_of[t] = order.len() + queue.len();
            queue.push_back(t);
        }
    }
    if order.len() != ids.len() {
        let missing = (0..ids.len()).find(|&i| new_of[i] == usize::MAX).unwrap();
        return Err(Error::Topology(format!(
            "node '{}' is not reachable from the slack (disconnected or cyclic)",
            ids[missing]
        )));
    }

    let nodes: Vec<Node> = order
        .iter()
        .map(|&u| Node { id: ids[u].clone(), phases: phases[u] })
        .collect();

    let mut lines: Vec<Line<T>> = Vec::with_capacity(file.lines.len());
    for &u in order.iter().skip(1) {
        let li = incoming[u].expect("non-slack reached through a line");
        let rec = &file.lines[li];
        let to = new_of[u];
        let from = new_of[lookup(&rec.from)?];
        let line_phases = match &rec.phases {
            Some(p) => p.parse()?,
            None => nodes[to].phases,
        };
        let n = line_phases.len();
        if rec.z.len() != n || rec.z.iter().any(|row| row.len() != n) {
            return Err(Error::Parse(format!(
                "impedance of line {}→{} must be {n}×{n} for phases {line_phases}",
                nodes[from].id, nodes[to].id
            )));
        }
        let mut z = PhaseMatrix::zero();
        for (r, pr) in line_phases.iter().enumerate() {
            for (c, pc) in line_phases.iter().enumerate() {
                if let Some([re, im]) = rec.z[r][c] {
                    z.set(pr, pc, Complex::new(T::of(re), T::of(im)));
                }
            }
        }
        lines.push(Line { from, to, phases: line_phases, z });
    }

    let mut inelastic = [T::zero(); 3];
    for (p, v) in phase_map::<T>(&file.inelastic)?.iter() {
        inelastic[p.index()] = v;
    }
    let feeder = Feeder::new(
        nodes,
        lines,
        phase_map(&file.slack_v2)?,
        inelastic,
        T::of(file.base_mva),
    )?;
    debug_assert_eq!(SLACK, 0);

    let mut devices = Vec::with_capacity(file.devices.len());
    for rec in &file.devices {
        let node = new_of[lookup(&rec.node)?];
        if node == SLACK {
            return Err(Error::Device("devices cannot sit on the slack bus".into()));
        }
        let set = match rec.set {
            SetRecord::Box { p_min, p_max, q_min, q_max } => FeasibleSet::Box {
                p_min: T::of(p_min),
                p_max: T::of(p_max),
                q_min: T::of(q_min),
                q_max: T::of(q_max),
            },
            SetRecord::PvInverter { p_av, eta_cap } => FeasibleSet::PvInverter {
                p_av: T::of(p_av),
                eta_cap: T::of(eta_cap),
            },
            SetRecord::Storage { p_min, p_max, eta_cap } => FeasibleSet::Storage {
                p_min: T::of(p_min),
                p_max: T::of(p_max),
                eta_cap: T::of(eta_cap),
            },
        };
        let dev = Device {
            node,
            phase: rec.phase.parse()?,
            set,
            cost: DeviceCost::Quadratic(QuadraticCost {
                cp: T::of(rec.cost.cp),
                cq: T::of(rec.cost.cq),
                p0: T::of(rec.cost.p0),
                q0: T::of(rec.cost.q0),
            }),
        };
        dev.validate()
            .map_err(|e| Error::Device(format!("node '{}': {e}", feeder.node(node).id)))?;
        devices.push(dev);
    }

    let clusters = match &file.clusters {
        None => None,
        Some(recs) => {
            let mut subtrees = Vec::with_capacity(recs.len());
            for rec in recs {
                let root = new_of[lookup(&rec.root)?];
                let members = match &rec.members {
                    Some(ms) => {
                        let mut v = ms
                            .iter()
                            .map(|m| lookup(m).map(|i| new_of[i]))
                            .collect::<Result<Vec<_>>>()?;
                        v.sort_unstable();
                        v
                    }
                    None => feeder.descendants(root),
                };
                subtrees.push(Subtree { root, members });
            }
            Some(Partition::with_remaining_unclustered(feeder.num_nodes(), subtrees))
        }
    };

    let case = Case {
        feeder,
        devices,
        substation: SubstationCost {
            alpha: T::of(file.substation_cost.alpha),
            p0_target: T::of(file.substation_cost.p0_target),
        },
        clusters,
    };
    case.coord_devices()?;
    if case.substation.alpha < T::zero() {
        return Err(Error::Parse("substation alpha must be non-negative".into()));
    }
    Ok(case)
}

fn complex_entry<T: Scalar>(z: Complex<T>) -> Option<[f64; 2]> {
    Some([z.re.as_f64(), z.im.as_f64()])
}

fn phase_key_map<T: Scalar>(it: impl Iterator<Item = (Phase, T)>) -> BTreeMap<String, f64> {
    it.map(|(p, v)| (p.to_string(), v.as_f64())).collect()
}

/// Serialize a case back to the feeder JSON schema.
pub fn case_to_json<T: Scalar>(case: &Case<T>) -> Result<String> {
    let f = &case.feeder;
    let id = |i: usize| IdRepr::Str(f.node(i).id.clone());
    let nodes = f
        .nodes()
        .iter()
        .map(|n| NodeRecord { id: IdRepr::Str(n.id.clone()), phases: PhasesRepr::from_set(n.phases) })
        .collect();
    let lines = f
        .lines()
        .iter()
        .map(|l| LineRecord {
            from: id(l.from),
            to: id(l.to),
            phases: (l.phases != f.node(l.to).phases).then(|| PhasesRepr::from_set(l.phases)),
            z: l.phases
                .iter()
                .map(|r| l.phases.iter().map(|c| complex_entry(l.z.get(r, c))).collect())
                .collect(),
        })
        .collect();
    let devices = case
        .devices
        .iter()
        .map(|d| {
            let set = match d.set {
                FeasibleSet::Box { p_min, p_max, q_min, q_max } => SetRecord::Box {
                    p_min: p_min.as_f64(),
                    p_max: p_max.as_f64(),
                    q_min: q_min.as_f64(),
                    q_max: q_max.as_f64(),
                },
                FeasibleSet::PvInverter { p_av, eta_cap } => SetRecord::PvInverter {
                    p_av: p_av.as_f64(),
                    eta_cap: eta_cap.as_f64(),
                },
                FeasibleSet::Storage { p_min, p_max, eta_cap } => SetRecord::Storage {
                    p_min: p_min.as_f64(),
                    p_max: p_max.as_f64(),
                    eta_cap: eta_cap.as_f64(),
                },
            };
            let cost = match &d.cost {
                DeviceCost::Quadratic(c) => Ok(CostRecord {
                    cp: c.cp.as_f64(),
                    cq: c.cq.as_f64(),
                    p0: c.p0.as_f64(),
                    q0: c.q0.as_f64(),
                }),
                DeviceCost::Custom(_) => {
                    Err(Error::Parse("custom device costs cannot be serialized".into()))
                }
            }?;
            Ok(DeviceRecord { node: id(d.node), phase: d.phase.to_string(), set, cost })
        })
        .collect::<Result<Vec<_>>>()?;
    let clusters = case.clusters.as_ref().map(|p| {
        p.subtrees
            .iter()
            .map(|s| ClusterRecord {
                root: id(s.root),
                members: Some(s.members.iter().map(|&m| id(m)).collect()),
            })
            .collect()
    });
    let file = FeederFile {
        base_mva: f.base_mva.as_f64(),
        slack: None,
        slack_v2: phase_key_map(f.slack_v2.iter()),
        nodes,
        lines,
        devices,
        inelastic: phase_key_map(
            Phase::ALL
                .into_iter()
                .filter(|p| f.node(SLACK).phases.contains(*p))
                .map(|p| (p, f.inelastic[p.index()])),
        ),
        substation_cost: SubstationRecord {
            alpha: case.substation.alpha.as_f64(),
            p0_target: case.substation.p0_target.as_f64(),
        },
        clusters,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Partition as JSON with external node ids.
pub fn partition_to_json<T: Scalar>(feeder: &Feeder<T>, partition: &Partition) -> Result<String> {
    let id = |i: usize| IdRepr::Str(feeder.node(i).id.clone());
    let file = PartitionFile {
        subtrees: partition
            .subtrees
            .iter()
            .map(|s| PartitionSubtree {
                root: id(s.root),
                members: s.members.iter().map(|&m| id(m)).collect(),
            })
            .collect(),
        unclustered: partition.unclustered.iter().map(|&m| id(m)).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parse a partition file. Unclustered nodes default to every non-slack
/// node not inside a listed subtree.
pub fn partition_from_json<T: Scalar>(feeder: &Feeder<T>, text: &str) -> Result<Partition> {
    let file: PartitionFile = serde_json::from_str(text)?;
    let map = feeder.id_map();
    let look = |id: &IdRepr| -> Result<usize> {
        let s = id.clone().into_string();
        map.get(&s).copied().ok_or(Error::UnknownNode(s))
    };
    let mut subtrees = Vec::with_capacity(file.subtrees.len());
    for s in &file.subtrees {
        let mut members = s.members.iter().map(look).collect::<Result<Vec<_>>>()?;
        members.sort_unstable();
        subtrees.push(Subtree { root: look(&s.root)?, members });
    }
    if file.unclustered.is_empty() {
        Ok(Partition::with_remaining_unclustered(feeder.num_nodes(), subtrees))
    } else {
        let mut unclustered = file.unclustered.iter().map(look).collect::<Result<Vec<_>>>()?;
        unclustered.sort_unstable();
        Ok(Partition { subtrees, unclustered })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE3: &str = r#"{
        "base_mva": 1.0,
        "slack_v2": {"a": 1.0},
        "nodes": [{"id": "sub", "phases": ["a"]}, {"id": "n1", "phases": ["a"]}, {"id": "n2", "phases": "a"}],
        "lines": [
            {"from": "n1", "to": "n2", "z": [[[0.2, 0.2]]]},
            {"from": "sub", "to": "n1", "z": [[[0.1, 0.1]]]}
        ],
        "future_field": {"ignored": true}
    }"#;

    #[test]
    fn loads_and_reindexes() {
        let case: Case<f64> = parse_case(LINE3).unwrap();
        let f = &case.feeder;
        assert_eq!(f.node(0).id, "sub");
        assert_eq!(f.node(2).id, "n2");
        assert_eq!(f.lines().len(), 2);
        assert_eq!(f.parent(2), Some(1));
        assert_eq!(f.path_to_root(2).unwrap().len(), 2);
    }

    #[test]
    fn duplicated_parent_is_topology_error() {
        let text = r#"{"slack_v2": {"a": 1.0},
            "nodes": [{"id": 0, "phases": "a"}, {"id": 1, "phases": "a"}, {"id": 2, "phases": "a"}],
            "lines": [{"from": 0, "to": 1, "z": [[[0.1,0.1]]]},
                      {"from": 0, "to": 2, "z": [[[0.1,0.1]]]},
                      {"from": 1, "to": 2, "z": [[[0.1,0.1]]]}]}"#;
        assert!(matches!(parse_case::<f64>(text), Err(Error::Topology(_))));
    }

    #[test]
    fn cycle_and_disconnection_are_topology_errors() {
        let cycle = r#"{"slack_v2": {"a": 1.0},
            "nodes": [{"id": 0, "phases": "a"}, {"id": 1, "phases": "a"}, {"id": 2, "phases": "a"}],
            "lines": [{"from": 1, "to": 2, "z": [[[0.1,0.1]]]}, {"from": 2, "to": 1, "z": [[[0.1,0.1]]]}]}"#;
        assert!(matches!(parse_case::<f64>(cycle), Err(Error::Topology(_))));
        let split = r#"{"slack_v2": {"a": 1.0},
            "nodes": [{"id": 0, "phases": "a"}, {"id": 1, "phases": "a"}, {"id": 2, "phases": "a"}],
            "lines": [{"from": 0, "to": 1, "z": [[[0.1,0.1]]]}]}"#;
        assert!(matches!(parse_case::<f64>(split), Err(Error::Topology(_))));
    }

    #[test]
    fn malformed_is_parse_error() {
        assert!(matches!(parse_case::<f64>("{not json"), Err(Error::Parse(_))));
        let bad_dim = r#"{"slack_v2": {"a": 1.0, "b": 1.0},
            "nodes": [{"id": 0, "phases": "ab"}, {"id": 1, "phases": "ab"}],
            "lines": [{"from": 0, "to": 1, "z": [[[0.1,0.1]]]}]}"#;
        assert!(matches!(parse_case::<f64>(bad_dim), Err(Error::Parse(_))));
    }

    #[test]
    fn child_phase_outside_parent_is_phase_error() {
        let text = r#"{"slack_v2": {"a": 1.0, "b": 1.0},
            "nodes": [{"id": 0, "phases": "ab"}, {"id": 1, "phases": "a"}, {"id": 2, "phases": "b"}],
            "lines": [{"from": 0, "to": 1, "z": [[[0.1,0.1]]]},
                      {"from": 1, "to": 2, "z": [[[0.1,0.1]]]}]}"#;
        assert!(matches!(parse_case::<f64>(text), Err(Error::Phase(_))));
    }

    #[test]
    fn missing_mutual_entries_default_to_zero() {
        let text = r#"{"slack_v2": {"a": 1.0, "b": 1.0},
            "nodes": [{"id": 0, "phases": "ab"}, {"id": 1, "phases": "ab"}],
            "lines": [{"from": 0, "to": 1, "z": [[[0.1,0.3], null], [null, [0.1,0.3]]]}]}"#;
        let case: Case<f64> = parse_case(text).unwrap();
        let z = case.feeder.lines()[0].z;
        assert_eq!(z.get(Phase::A, Phase::B), Complex::new(0.0, 0.0));
        assert_eq!(z.get(Phase::B, Phase::B), Complex::new(0.1, 0.3));
    }

    #[test]
    fn infeasible_device_rejected() {
        let text = r#"{"slack_v2": {"a": 1.0},
            "nodes": [{"id": 0, "phases": "a"}, {"id": 1, "phases": "a"}],
            "lines": [{"from": 0, "to": 1, "z": [[[0.1,0.1]]]}],
            "devices": [{"node": 1, "phase": "a", "set": {"kind": "storage", "p_min": 2, "p_max": 3, "eta_cap": 1},
                         "cost": {"cp": 1, "cq": 1}}]}"#;
        assert!(matches!(parse_case::<f64>(text), Err(Error::Device(_))));
    }
}
