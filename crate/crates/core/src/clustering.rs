//! Subtree partitions, the reduced network, and the operation-count model.

use std::fmt;

use crate::error::{Error, Result};
use crate::feeder::{Feeder, SLACK};
use crate::scalar::Scalar;

/// A subtree: a root node together with all of its descendants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    pub root: usize,
    /// Member nodes, ascending, root included.
    pub members: Vec<usize>,
}

/// K subtrees plus the unclustered non-slack nodes. The slack bus belongs to
/// neither and always heads the reduced network.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub subtrees: Vec<Subtree>,
    pub unclustered: Vec<usize>,
}

impl Partition {
    /// Partition whose unclustered set is every non-slack node outside the
    /// given subtrees.
    pub fn with_remaining_unclustered(num_nodes: usize, subtrees: Vec<Subtree>) -> Self {
        let mut taken = vec![false; num_nodes];
        for s in &subtrees {
            for &m in &s.members {
                if m < num_nodes {
                    taken[m] = true;
                }
            }
        }
        let unclustered = (1..num_nodes).filter(|&i| !taken[i]).collect();
        Partition { subtrees, unclustered }
    }

    /// One subtree per child of the slack, covering every node.
    pub fn slack_children<T: Scalar>(feeder: &Feeder<T>) -> Self {
        let subtrees = feeder
            .children(SLACK)
            .iter()
            .map(|&c| Subtree { root: c, members: feeder.descendants(c) })
            .collect();
        Partition::with_remaining_unclustered(feeder.num_nodes(), subtrees)
    }

    pub fn k(&self) -> usize {
        self.subtrees.len()
    }

    /// Subtree index of every node, `None` for the slack and unclustered nodes.
    pub fn owner(&self, num_nodes: usize) -> Vec<Option<usize>> {
        let mut owner = vec![None; num_nodes];
        for (k, s) in self.subtrees.iter().enumerate() {
            for &m in &s.members {
                if m < num_nodes {
                    owner[m] = Some(k);
                }
            }
        }
        owner
    }
}

/// The tree the coordinator sees: slack, subtree roots and unclustered nodes,
/// connected by their original parent lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedNetwork {
    /// Reduced nodes ascending; the slack comes first.
    pub nodes: Vec<usize>,
    /// Parent line index of every reduced node except the slack.
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnknownNode(usize),
    SlackInSubtree { subtree: usize },
    RootNotMember { subtree: usize },
    MissingDescendant { subtree: usize, node: usize },
    NotDescendant { subtree: usize, node: usize },
    NonDisjoint { node: usize },
    NestedRoot { outer: usize, inner: usize },
    Uncovered { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownNode(n) => write!(f, "unknown node {n}"),
            Violation::SlackInSubtree { subtree } => {
                write!(f, "subtree {subtree} contains the slack bus")
            }
            Violation::RootNotMember { subtree } => {
                write!(f, "subtree {subtree} does not contain its root")
            }
            Violation::MissingDescendant { subtree, node } => {
                write!(f, "missing descendant: node {node} absent from subtree {subtree}")
            }
            Violation::NotDescendant { subtree, node } => {
                write!(f, "node {node} in subtree {subtree} is not a descendant of its root")
            }
            Violation::NonDisjoint { node } => write!(f, "non-disjoint: node {node} assigned twice"),
            Violation::NestedRoot { outer, inner } => {
                write!(f, "root of subtree {inner} lies inside subtree {outer}")
            }
            Violation::Uncovered { node } => write!(f, "node {node} is not covered"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionReport {
    pub violations: Vec<Violation>,
    /// Present when the partition is valid.
    pub reduced: Option<ReducedNetwork>,
}

impl PartitionReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_partition<T: Scalar>(feeder: &Feeder<T>, partition: &Partition) -> PartitionReport {
    let n = feeder.num_nodes();
    let mut violations = Vec::new();
    let mut count = vec![0usize; n];
    let mut in_subtree = vec![None; n];

    for (k, s) in partition.subtrees.iter().enumerate() {
        if s.root >= n {
            violations.push(Violation::UnknownNode(s.root));
            continue;
        }
        if s.root == SLACK {
            violations.push(Violation::SlackInSubtree { subtree: k });
        }
        if !s.members.contains(&s.root) {
            violations.push(Violation::RootNotMember { subtree: k });
        }
        for &m in &s.members {
            if m >= n {
                violations.push(Violation::UnknownNode(m));
                continue;
            }
            if m == SLACK && s.root != SLACK {
                violations.push(Violation::SlackInSubtree { subtree: k });
            }
            if !feeder.is_ancestor(s.root, m) {
                violations.push(Violation::NotDescendant { subtree: k, node: m });
            }
            count[m] += 1;
            in_subtree[m] = Some(k);
        }
        let members: std::collections::HashSet<usize> = s.members.iter().copied().collect();
        for d in feeder.descendants(s.root) {
            if !members.contains(&d) {
                violations.push(Violation::MissingDescendant { subtree: k, node: d });
            }
        }
    }
    for &u in &partition.unclustered {
        if u >= n {
            violations.push(Violation::UnknownNode(u));
            continue;
        }
        if u == SLACK {
            continue;
        }
        count[u] += 1;
    }
    for (node, &c) in count.iter().enumerate().skip(1) {
        match c {
            0 => violations.push(Violation::Uncovered { node }),
            1 => {}
            _ => violations.push(Violation::NonDisjoint { node }),
        }
    }
    for (k, s) in partition.subtrees.iter().enumerate() {
        if s.root >= n {
            continue;
        }
        for (h, other) in partition.subtrees.iter().enumerate() {
            if h != k && other.root < n && other.root != s.root && feeder.is_ancestor(other.root, s.root) {
                violations.push(Violation::NestedRoot { outer: h, inner: k });
            }
        }
    }

    let reduced = violations.is_empty().then(|| {
        let mut nodes: Vec<usize> = std::iter::once(SLACK)
            .chain(partition.subtrees.iter().map(|s| s.root))
            .chain(partition.unclustered.iter().copied())
            .collect();
        nodes.sort_unstable();
        let lines = nodes[1..]
            .iter()
            .map(|&i| feeder.parent_line_index(i).expect("non-slack"))
            .collect();
        ReducedNetwork { nodes, lines }
    });
    PartitionReport { violations, reduced }
}

/// Validated partition or an [`Error::InvalidPartition`] listing violations.
pub fn require_valid<T: Scalar>(feeder: &Feeder<T>, partition: &Partition) -> Result<ReducedNetwork> {
    let report = validate_partition(feeder, partition);
    match report.reduced {
        Some(r) => Ok(r),
        None => Err(Error::InvalidPartition(
            report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        )),
    }
}

/// The cluster count minimizing the balanced cost model, `round((N²/2)^{1/3})`.
pub fn recommend_k(n: usize) -> usize {
    let n = n.max(1);
    let k = ((n as f64).powi(2) / 2.0).cbrt().round() as usize;
    k.clamp(1, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCount {
    pub mults: u64,
    pub adds: u64,
}

impl OpCount {
    pub fn new(mults: u64, adds: u64) -> Self {
        OpCount { mults, adds }
    }

    pub fn total(&self) -> u64 {
        self.mults + self.adds
    }
}

impl std::ops::Add for OpCount {
    type Output = OpCount;
    fn add(self, o: OpCount) -> OpCount {
        OpCount { mults: self.mults + o.mults, adds: self.adds + o.adds }
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, o: OpCount) {
        self.mults += o.mults;
        self.adds += o.adds;
    }
}

impl std::iter::Sum for OpCount {
    fn sum<I: Iterator<Item = OpCount>>(iter: I) -> OpCount {
        iter.fold(OpCount::default(), |a, b| a + b)
    }
}

/// Coupling-term operations split by actor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpBreakdown {
    pub cc: OpCount,
    pub rcs: Vec<OpCount>,
}

impl OpBreakdown {
    pub fn total(&self) -> OpCount {
        self.cc + self.rcs.iter().copied().sum()
    }
}

/// Per-iteration coupling operations of the hierarchical scheme, with
/// subtree sizes as balanced as integers allow.
pub fn model_op_count(n: usize, k: usize) -> OpBreakdown {
    let k = k.clamp(1, n.max(1));
    let sizes: Vec<usize> = (0..k).map(|i| n / k + usize::from(i < n % k)).collect();
    model_op_count_sizes(&sizes)
}

/// Cost model for explicit subtree sizes: each RC does `n²` multiplications
/// and `n(n−1) + (n−1) + n` additions, the CC `K²` and `K(K−1)`.
pub fn model_op_count_sizes(sizes: &[usize]) -> OpBreakdown {
    let rcs = sizes
        .iter()
        .map(|&s| {
            let s = s as u64;
            OpCount::new(s * s, s * s.saturating_sub(1) + s.saturating_sub(1) + s)
        })
        .collect();
    let k = sizes.len() as u64;
    OpBreakdown { cc: OpCount::new(k * k, k * k.saturating_sub(1)), rcs }
}

/// The leading-order closed form `2N²/K + N + 2K²`.
pub fn closed_form_ops(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    2.0 * n * n / k + n + 2.0 * k * k
}

/// Centralized coupling cost: `N²` multiplications and `N(N−1)` additions.
pub fn centralized_op_count(n: usize) -> OpCount {
    let n = n as u64;
    OpCount::new(n * n, n * n.saturating_sub(1))
}

/// Greedy balanced partition into `k` subtrees.
///
/// Repeatedly picks the eligible node whose subtree size is closest to
/// `N/k` (ties to the lower index). A node is eligible if it is not inside
/// or above an already chosen subtree, and if enough free leaves remain to
/// root the subtrees still needed. Fails with [`Error::InfeasibleK`] when
/// `k` exceeds the number of leaves.
pub fn auto_partition<T: Scalar>(feeder: &Feeder<T>, k: usize) -> Result<Partition> {
    let n = feeder.num_nodes();
    let leaves: Vec<bool> = (0..n).map(|i| i != SLACK && feeder.children(i).is_empty()).collect();
    let leaf_count = leaves.iter().filter(|&&l| l).count();
    if k == 0 || k > leaf_count {
        return Err(Error::InfeasibleK { k, max: leaf_count });
    }
    let size = feeder.subtree_sizes();
    let mut leaves_below = vec![0usize; n];
    for i in (0..n).rev() {
        if leaves[i] {
            leaves_below[i] += 1;
        }
        if let Some(p) = feeder.parent(i) {
            leaves_below[p] += leaves_below[i];
        }
    }
    let target = (n - 1) as f64 / k as f64;
    // blocked: inside a chosen subtree or an ancestor of a chosen root
    let mut blocked = vec![false; n];
    blocked[SLACK] = true;
    let mut free_leaves = leaf_count;
    let mut roots = Vec::with_capacity(k);
    for picked in 0..k {
        let still_needed = k - picked - 1;
        let mut best: Option<(f64, usize)> = None;
        for i in 1..n {
            if blocked[i] || free_leaves - leaves_below[i] < still_needed {
                continue;
            }
            let gap = (size[i] as f64 - target).abs();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, i));
            }
        }
        let (_, r) = best.ok_or(Error::InfeasibleK { k, max: leaf_count })?;
        for d in feeder.descendants(r) {
            blocked[d] = true;
        }
        let mut a = r;
        while let Some(p) = feeder.parent(a) {
            blocked[p] = true;
            a = p;
        }
        free_leaves -= leaves_below[r];
        roots.push(r);
    }
    roots.sort_unstable();
    let subtrees = roots
        .into_iter()
        .map(|r| Subtree { root: r, members: feeder.descendants(r) })
        .collect();
    Ok(Partition::with_remaining_unclustered(n, subtrees))
}
