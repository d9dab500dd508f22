//! Voltage sensitivities of the linearized branch-flow model.
//!
//! Every sensitivity entry depends on the impedance summed along the common
//! path of two nodes, which is the root→leaf cumulative impedance at their
//! lowest common ancestor. Cumulative sums are accumulated root→leaf so all
//! builders and both engines see bit-identical path impedances.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::clustering::Partition;
use crate::error::{Error, Result};
use crate::feeder::{Coord, Feeder, Phase, PhaseIndex, PhaseMatrix, SLACK};
use crate::scalar::{omega_pow, Cx, Scalar};

/// `2·conj(Z^{rc})·ω^{r−c}`. Its real part is the `p`-sensitivity of the
/// voltage on `(·, r)` to the injection on `(·, c)` and minus its imaginary
/// part the `q`-sensitivity.
#[inline]
pub fn sensitivity_coeff<T: Scalar>(z: &PhaseMatrix<T>, row: Phase, col: Phase) -> Cx<T> {
    let w = omega_pow::<T>(row.index() as i32 - col.index() as i32);
    (z.get(row, col).conj() * w).scale(T::two())
}

/// Root→leaf cumulative impedance of every node (zero at the slack).
pub fn cumulative_impedance<T: Scalar>(feeder: &Feeder<T>) -> Vec<PhaseMatrix<T>> {
    let mut cum = vec![PhaseMatrix::zero(); feeder.num_nodes()];
    for i in 1..feeder.num_nodes() {
        let line = feeder.parent_line(i).expect("non-slack node has a parent");
        cum[i] = cum[line.from] + line.z;
    }
    cum
}

/// Lowest common ancestor of `a` with every node, relying on parents
/// preceding children in the node order.
fn lca_row(parent: impl Fn(usize) -> Option<usize>, n: usize, a: usize) -> Vec<usize> {
    let mut on_path = vec![false; n];
    let mut cur = Some(a);
    while let Some(c) = cur {
        on_path[c] = true;
        cur = parent(c);
    }
    let mut lca = vec![0usize; n];
    for j in 0..n {
        lca[j] = if on_path[j] {
            j
        } else {
            lca[parent(j).expect("only the root lacks a parent and it is on every path")]
        };
    }
    lca
}

fn lca_pair(parent: impl Fn(usize) -> Option<usize>, depth: impl Fn(usize) -> usize, a: usize, b: usize) -> usize {
    let (mut a, mut b) = (a, b);
    while depth(a) > depth(b) {
        a = parent(a).unwrap();
    }
    while depth(b) > depth(a) {
        b = parent(b).unwrap();
    }
    while a != b {
        a = parent(a).unwrap();
        b = parent(b).unwrap();
    }
    a
}

/// `Z_ij`: impedance summed over the lines shared by the root paths of `i`
/// and `j`, as a 3×3 matrix with zeros on absent phases.
pub fn common_path_impedance<T: Scalar>(feeder: &Feeder<T>, i: usize, j: usize) -> Result<PhaseMatrix<T>> {
    let n = feeder.num_nodes();
    for k in [i, j] {
        if k == SLACK || k >= n {
            return Err(Error::UnknownNode(format!("{k} is not a non-slack node")));
        }
    }
    let l = lca_pair(|x| feeder.parent(x), |x| feeder.depth(x), i, j);
    let mut z = PhaseMatrix::zero();
    let mut path = Vec::new();
    let mut cur = l;
    while let Some(li) = feeder.parent_line_index(cur) {
        path.push(li);
        cur = feeder.lines()[li].from;
    }
    for &li in path.iter().rev() {
        z += feeder.lines()[li].z;
    }
    Ok(z)
}

/// Path impedances over a connected piece of the feeder that a coordinator
/// is allowed to know. Nodes are stored parents-first with local parents.
#[derive(Debug, Clone)]
pub struct PathImpedanceTable<T> {
    nodes: Vec<usize>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    cum: Vec<PhaseMatrix<T>>,
}

impl<T: Scalar> PathImpedanceTable<T> {
    /// `nodes` are global ids ordered parents-first; `parent[k]` is the local
    /// index of node `k`'s parent (`None` for the local root, whose
    /// cumulative impedance is `base`); `line_z[k]` is the impedance of the
    /// line into node `k` (ignored for the root).
    pub fn from_local_tree(
        nodes: Vec<usize>,
        parent: Vec<Option<usize>>,
        line_z: &[PhaseMatrix<T>],
        base: PhaseMatrix<T>,
    ) -> Result<Self> {
        if parent.len() != nodes.len() || line_z.len() != nodes.len() {
            return Err(Error::Dimension { expected: nodes.len(), got: parent.len().min(line_z.len()) });
        }
        let mut cum = Vec::with_capacity(nodes.len());
        let mut depth = Vec::with_capacity(nodes.len());
        for k in 0..nodes.len() {
            match parent[k] {
                None => {
                    if k != 0 {
                        return Err(Error::Topology("local tree has more than one root".into()));
                    }
                    cum.push(base);
                    depth.push(0);
                }
                Some(p) if p < k => {
                    let z = cum[p] + line_z[k];
                    cum.push(z);
                    depth.push(depth[p] + 1);
                }
                Some(_) => return Err(Error::Topology("local tree is not parents-first".into())),
            }
        }
        Ok(PathImpedanceTable { nodes, parent, depth, cum })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn local(&self, node: usize) -> Result<usize> {
        self.nodes.binary_search(&node).or_else(|_| {
            self.nodes.iter().position(|&n| n == node).ok_or(Error::OutOfScope(node))
        })
    }

    /// `Z_ab` for two nodes in scope.
    pub fn get(&self, a: usize, b: usize) -> Result<PhaseMatrix<T>> {
        let (la, lb) = (self.local(a)?, self.local(b)?);
        let l = lca_pair(|x| self.parent[x], |x| self.depth[x], la, lb);
        Ok(self.cum[l])
    }

    /// `Z` of every in-scope node against local node `a`.
    fn row(&self, a: usize) -> Vec<PhaseMatrix<T>> {
        lca_row(|x| self.parent[x], self.nodes.len(), a).into_iter().map(|l| self.cum[l]).collect()
    }
}

/// Coupling coefficients restricted to a coordinator's scope, with an access
/// counter so tests can confirm which entries an actor touched.
///
/// `coeff(t, s)` is the weight of the dual on source coordinate `s` in the
/// coupling of target coordinate `t`; its real part is `R_Ξ[s, t]` and minus
/// its imaginary part `X_Ξ[s, t]`.
#[derive(Debug)]
pub struct ScopedTable<T> {
    coords: Vec<Coord>,
    w: Vec<Cx<T>>,
    reads: AtomicU64,
}

impl<T: Scalar> ScopedTable<T> {
    /// Table over the coordinates of the in-scope nodes, in global
    /// coordinate order.
    pub fn build(paths: &PathImpedanceTable<T>, index: &PhaseIndex) -> Self {
        let mut order: Vec<(usize, usize)> = paths.nodes.iter().copied().enumerate().map(|(l, g)| (g, l)).collect();
        order.sort_unstable();
        let mut coords = Vec::new();
        let mut local_of_coord = Vec::new();
        for &(g, l) in &order {
            for pos in index.node_positions(g) {
                coords.push(index.coord(pos));
                local_of_coord.push(l);
            }
        }
        let n = coords.len();
        let mut w = vec![Cx::new(T::zero(), T::zero()); n * n];
        let mut cached: Option<(usize, Vec<PhaseMatrix<T>>)> = None;
        for t in 0..n {
            let lt = local_of_coord[t];
            if cached.as_ref().is_none_or(|(l, _)| *l != lt) {
                cached = Some((lt, paths.row(lt)));
            }
            let row = &cached.as_ref().unwrap().1;
            for s in 0..n {
                let z = &row[local_of_coord[s]];
                w[t * n + s] = sensitivity_coeff(z, coords[s].phase, coords[t].phase);
            }
        }
        ScopedTable { coords, w, reads: AtomicU64::new(0) }
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn position(&self, c: Coord) -> Option<usize> {
        self.coords.binary_search(&c).ok()
    }

    /// Coefficients for one target, over all in-scope sources.
    pub fn target_row(&self, t: usize) -> &[Cx<T>] {
        let n = self.coords.len();
        self.reads.fetch_add(n as u64, Ordering::Relaxed);
        &self.w[t * n..(t + 1) * n]
    }

    /// Single coefficient addressed by global coordinates.
    pub fn coeff(&self, target: Coord, source: Coord) -> Result<Cx<T>> {
        let t = self.position(target).ok_or(Error::OutOfScope(target.node))?;
        let s = self.position(source).ok_or(Error::OutOfScope(source.node))?;
        self.reads.fetch_add(1, Ordering::Relaxed);
        Ok(self.w[t * self.coords.len() + s])
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}

/// Dense `R_Ξ` and `X_Ξ` over the phase-expanded coordinates (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPack<T> {
    index: PhaseIndex,
    r: Vec<T>,
    x: Vec<T>,
}

impl<T: Scalar> SensitivityPack<T> {
    /// `R_ij = 2·Σ r`, `X_ij = 2·Σ x` over the common path.
    pub fn build_single_phase(feeder: &Feeder<T>) -> Result<Self> {
        let phase = feeder
            .single_phase()
            .ok_or_else(|| Error::Phase("single-phase builder needs one common phase on every node".into()))?;
        let cum = cumulative_impedance(feeder);
        let n = feeder.num_nodes() - 1;
        let mut r = vec![T::zero(); n * n];
        let mut x = vec![T::zero(); n * n];
        let fill = |i: usize, rr: &mut [T], xr: &mut [T]| {
            let lca = lca_row(|k| feeder.parent(k), feeder.num_nodes(), i + 1);
            for j in 0..n {
                let z = cum[lca[j + 1]].get(phase, phase);
                rr[j] = T::two() * z.re;
                xr[j] = T::two() * z.im;
            }
        };
        r.par_chunks_mut(n.max(1))
            .zip(x.par_chunks_mut(n.max(1)))
            .enumerate()
            .for_each(|(i, (rr, xr))| fill(i, rr, xr));
        Ok(SensitivityPack { index: feeder.index().clone(), r, x })
    }

    /// Entries `2·Re{conj(Z^{φϕ}_ij)·ω^{φ−ϕ}}` and `−2·Im{…}`.
    pub fn build_multi_phase(feeder: &Feeder<T>) -> Self {
        let cum = cumulative_impedance(feeder);
        let index = feeder.index().clone();
        let n = index.len();
        let mut r = vec![T::zero(); n * n];
        let mut x = vec![T::zero(); n * n];
        r.par_chunks_mut(n.max(1))
            .zip(x.par_chunks_mut(n.max(1)))
            .enumerate()
            .for_each(|(row, (rr, xr))| {
                let ci = index.coord(row);
                let lca = lca_row(|k| feeder.parent(k), feeder.num_nodes(), ci.node);
                for (col, cj) in index.coords().iter().enumerate() {
                    let c = sensitivity_coeff(&cum[lca[cj.node]], ci.phase, cj.phase);
                    rr[col] = c.re;
                    xr[col] = -c.im;
                }
            });
        SensitivityPack { index, r, x }
    }

    /// Single-phase builder when applicable, multi-phase otherwise.
    pub fn build(feeder: &Feeder<T>) -> Self {
        match feeder.single_phase() {
            Some(_) => Self::build_single_phase(feeder).expect("single-phase feeder"),
            None => Self::build_multi_phase(feeder),
        }
    }

    pub fn index(&self) -> &PhaseIndex {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    #[inline]
    pub fn r(&self, i: usize, j: usize) -> T {
        self.r[i * self.dim() + j]
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize) -> T {
        self.x[i * self.dim() + j]
    }

    pub fn r_row(&self, i: usize) -> &[T] {
        let n = self.dim();
        &self.r[i * n..(i + 1) * n]
    }

    pub fn x_row(&self, i: usize) -> &[T] {
        let n = self.dim();
        &self.x[i * n..(i + 1) * n]
    }

    fn check(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// `R·p + X·q`.
    pub fn apply(&self, p: &[T], q: &[T]) -> Result<Vec<T>> {
        self.check(p)?;
        self.check(q)?;
        Ok((0..self.dim())
            .into_par_iter()
            .map(|i| {
                let (rr, xr) = (self.r_row(i), self.x_row(i));
                let mut acc = T::zero();
                for j in 0..rr.len() {
                    acc += rr[j] * p[j] + xr[j] * q[j];
                }
                acc
            })
            .collect())
    }

    /// `(Rᵀd, Xᵀd)`, accumulated over sources in ascending order.
    pub fn transpose_apply(&self, d: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        self.check(d)?;
        let n = self.dim();
        let mut a = vec![T::zero(); n];
        let mut b = vec![T::zero(); n];
        for (j, &dj) in d.iter().enumerate() {
            let (rr, xr) = (self.r_row(j), self.x_row(j));
            for i in 0..n {
                a[i] += rr[i] * dj;
                b[i] += xr[i] * dj;
            }
        }
        Ok((a, b))
    }

    /// Copy restricted to same-phase entries.
    pub fn diagonal_phases_only(&self) -> Self {
        let mut out = self.clone();
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if self.index.coord(i).phase != self.index.coord(j).phase {
                    out.r[i * n + j] = T::zero();
                    out.x[i * n + j] = T::zero();
                }
            }
        }
        out
    }

    /// CSV with a header of `node:phase` labels, one matrix after the other
    /// (`R` rows then `X` rows), first column naming the matrix and row.
    pub fn write_csv<W: Write>(&self, feeder: &Feeder<T>, out: W) -> Result<()> {
        let labels: Vec<String> = self
            .index
            .coords()
            .iter()
            .map(|c| format!("{}:{}", feeder.node(c.node).id, c.phase))
            .collect();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["matrix".to_string(), "row".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header)?;
        for (name, m) in [("R", &self.r), ("X", &self.x)] {
            for (i, label) in labels.iter().enumerate() {
                let mut rec = vec![name.to_string(), label.clone()];
                rec.extend(m[i * self.dim()..(i + 1) * self.dim()].iter().map(|v| format!("{:.16e}", v.as_f64())));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// An entry pair that breaks the block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockViolation {
    pub row: Coord,
    pub col: Coord,
    pub expected_row: Coord,
    pub expected_col: Coord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockReport {
    pub checked: usize,
    pub violation_count: usize,
    /// First violations found, capped at 64.
    pub violations: Vec<BlockViolation>,
}

impl BlockReport {
    pub fn ok(&self) -> bool {
        self.violation_count == 0
    }
}

/// Verify that every cross-subtree entry equals the entry of the two roots,
/// and every subtree-vs-unclustered entry equals that of the root and the
/// unclustered node, for both `R_Ξ` and `X_Ξ` exactly.
pub fn lemma3_check<T: Scalar>(pack: &SensitivityPack<T>, partition: &Partition) -> BlockReport {
    let idx = pack.index();
    let num_nodes = idx.coords().iter().map(|c| c.node + 1).max().unwrap_or(1);
    let owner = partition.owner(num_nodes);
    let root_of = |node: usize| -> usize {
        match owner.get(node).copied().flatten() {
            Some(k) => partition.subtrees[k].root,
            None => node,
        }
    };
    let unclustered: std::collections::HashSet<usize> = partition.unclustered.iter().copied().collect();
    let mut report = BlockReport::default();
    for (i, ci) in idx.coords().iter().enumerate() {
        for (j, cj) in idx.coords().iter().enumerate() {
            let (oi, oj) = (owner[ci.node], owner[cj.node]);
            let cross = match (oi, oj) {
                (Some(h), Some(k)) => h != k,
                (Some(_), None) => unclustered.contains(&cj.node),
                (None, Some(_)) => unclustered.contains(&ci.node),
                (None, None) => false,
            };
            if !cross {
                continue;
            }
            report.checked += 1;
            let er = Coord { node: root_of(ci.node), phase: ci.phase };
            let ec = Coord { node: root_of(cj.node), phase: cj.phase };
            let same = match (idx.position(er.node, er.phase), idx.position(ec.node, ec.phase)) {
                (Some(a), Some(b)) => pack.r(i, j) == pack.r(a, b) && pack.x(i, j) == pack.x(a, b),
                _ => false,
            };
            if !same {
                report.violation_count += 1;
                if report.violations.len() < 64 {
                    report.violations.push(BlockViolation { row: *ci, col: *cj, expected_row: er, expected_col: ec });
                }
            }
        }
    }
    report
}
