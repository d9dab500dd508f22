use super::messages::{Actor, Envelope, Payload};
use crate::clustering::OpCount;
use crate::error::{Error, Result};
use crate::feeder::{Coord, Device, PerPhase, Phase, PhaseMatrix};
use crate::opf::update;
use crate::scalar::{Cx, Scalar};
use crate::sensitivity::{PathImpedanceTable, ScopedTable};

fn cx0<T: Scalar>() -> Cx<T> {
    Cx::new(T::zero(), T::zero())
}

/// Outgoing messages of one actor in one superstep.
pub(crate) type Outbox<T> = Vec<Envelope<T>>;

/// Step parameters shared by every node agent.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepParams<T> {
    pub eps: T,
    pub eps_dual: T,
    pub eta: T,
}

/// Agent of one node: owns the node's injections and multipliers.
#[derive(Debug, Clone)]
pub(crate) struct NodeAgent<T> {
    pub node: usize,
    pub phases: Vec<Phase>,
    pub devices: Vec<Option<Device<T>>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub mu_lo: Vec<T>,
    pub mu_hi: Vec<T>,
    pub v: Vec<T>,
    coupling: Vec<Option<Cx<T>>>,
    c0_prime: Option<T>,
    voltage_seen: bool,
    /// Subtree index, `None` when unclustered.
    pub rc: Option<usize>,
    pub inbox: Vec<Envelope<T>>,
}

impl<T: Scalar> NodeAgent<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        node: usize,
        phases: Vec<Phase>,
        devices: Vec<Option<Device<T>>>,
        lower: Vec<T>,
        upper: Vec<T>,
        init: (Vec<T>, Vec<T>, Vec<T>, Vec<T>),
        rc: Option<usize>,
    ) -> Self {
        let n = phases.len();
        NodeAgent {
            node,
            phases,
            devices,
            lower,
            upper,
            p: init.0,
            q: init.1,
            mu_lo: init.2,
            mu_hi: init.3,
            v: vec![T::zero(); n],
            coupling: vec![None; n],
            c0_prime: None,
            voltage_seen: false,
            rc,
            inbox: Vec::new(),
        }
    }

    fn absorb(&mut self) {
        for env in std::mem::take(&mut self.inbox) {
            match env.payload {
                Payload::NodeCoupling { s, .. } => {
                    for (k, ph) in self.phases.iter().enumerate() {
                        self.coupling[k] = s.get(*ph);
                    }
                }
                Payload::VoltageReport { v, .. } => {
                    for (k, ph) in self.phases.iter().enumerate() {
                        if let Some(x) = v.get(*ph) {
                            self.v[k] = x;
                        }
                    }
                    self.voltage_seen = true;
                }
                Payload::SubstationBroadcast { c0_prime } => self.c0_prime = Some(c0_prime),
                _ => {}
            }
        }
    }

    /// Superstep 1: update with the couplings received during the previous
    /// round (skipped at setup), then report duals and injections.
    pub fn step(&mut self, iter: usize, params: StepParams<T>, update_now: bool) -> Result<Outbox<T>> {
        self.absorb();
        if update_now {
            let missing = || Error::MissingCoupling { actor: Actor::Node(self.node).to_string() };
            let c0p = self.c0_prime.ok_or_else(missing)?;
            if !self.voltage_seen {
                return Err(missing());
            }
            for k in 0..self.phases.len() {
                let s = self.coupling[k].ok_or_else(missing)?;
                let (alpha, beta) = (s.re, -s.im);
                (self.p[k], self.q[k]) =
                    update::primal(self.devices[k].as_ref(), self.p[k], self.q[k], alpha, beta, c0p, params.eps);
                (self.mu_lo[k], self.mu_hi[k]) = update::dual(
                    self.v[k],
                    self.lower[k],
                    self.upper[k],
                    self.mu_lo[k],
                    self.mu_hi[k],
                    params.eps_dual,
                    params.eta,
                );
            }
            self.coupling.iter_mut().for_each(|c| *c = None);
            self.c0_prime = None;
            self.voltage_seen = false;
        }
        let mut duals = PerPhase::empty();
        let mut p = PerPhase::empty();
        let mut q = PerPhase::empty();
        for (k, ph) in self.phases.iter().enumerate() {
            duals.set(*ph, self.mu_hi[k] - self.mu_lo[k]);
            p.set(*ph, self.p[k]);
            q.set(*ph, self.q[k]);
        }
        let me = Actor::Node(self.node);
        let dual_msg = match self.rc {
            Some(k) => Envelope { iter, step: 1, from: me, to: Actor::Rc(k), payload: Payload::MemberDual { node: self.node, duals } },
            None => Envelope { iter, step: 1, from: me, to: Actor::Cc, payload: Payload::UnclusteredDual { node: self.node, duals } },
        };
        let report = Envelope { iter, step: 1, from: me, to: Actor::Physics, payload: Payload::InjectionReport { node: self.node, p, q } };
        Ok(vec![dual_msg, report])
    }
}

/// Regional coordinator: knows only its subtree's lines and, after setup,
/// the impedance from the slack to its root.
#[derive(Debug)]
pub(crate) struct RcAgent<T> {
    pub k: usize,
    pub root: usize,
    pub members: Vec<usize>,
    local_parent: Vec<Option<usize>>,
    line_z: Vec<PhaseMatrix<T>>,
    index: crate::feeder::PhaseIndex,
    pub table: Option<ScopedTable<T>>,
    duals: Vec<Option<T>>,
    pub inbox: Vec<Envelope<T>>,
    pub ops: OpCount,
}

impl<T: Scalar> RcAgent<T> {
    pub fn new(
        k: usize,
        members: Vec<usize>,
        local_parent: Vec<Option<usize>>,
        line_z: Vec<PhaseMatrix<T>>,
        index: crate::feeder::PhaseIndex,
    ) -> Self {
        RcAgent {
            k,
            root: members[0],
            members,
            local_parent,
            line_z,
            index,
            table: None,
            duals: Vec::new(),
            inbox: Vec::new(),
            ops: OpCount::default(),
        }
    }

    fn table(&self) -> Result<&ScopedTable<T>> {
        self.table.as_ref().ok_or_else(|| Error::MissingCoupling { actor: format!("{} (no provision)", Actor::Rc(self.k)) })
    }

    /// Setup: build the subtree table from the provisioned root impedance.
    pub fn provision(&mut self) -> Result<()> {
        for env in std::mem::take(&mut self.inbox) {
            if let Payload::Provision { base, .. } = env.payload {
                let paths = PathImpedanceTable::from_local_tree(
                    self.members.clone(),
                    self.local_parent.clone(),
                    &self.line_z,
                    PhaseMatrix(base),
                )?;
                let table = ScopedTable::build(&paths, &self.index);
                self.duals = vec![None; table.len()];
                self.table = Some(table);
            }
        }
        self.table().map(|_| ())
    }

    /// Superstep 2: per-phase sums of member duals in ascending node order.
    pub fn aggregate(&mut self, iter: usize) -> Result<Outbox<T>> {
        self.duals.iter_mut().for_each(|d| *d = None);
        let inbox = std::mem::take(&mut self.inbox);
        let table = self.table.as_ref().expect("provisioned before the first round");
        for env in inbox {
            if let Payload::MemberDual { node, duals } = env.payload {
                for (ph, d) in duals.iter() {
                    if let Some(pos) = table.position(Coord { node, phase: ph }) {
                        self.duals[pos] = Some(d);
                    }
                }
            }
        }
        let mut sums: [Option<T>; 3] = [None; 3];
        for (pos, c) in table.coords().iter().enumerate() {
            let d = self.duals[pos].ok_or(Error::MissingMember { rc: self.k, node: c.node })?;
            let slot = &mut sums[c.phase.index()];
            *slot = Some(match *slot {
                None => d,
                Some(acc) => {
                    self.ops.adds += 1;
                    acc + d
                }
            });
        }
        Ok(vec![Envelope {
            iter,
            step: 2,
            from: Actor::Rc(self.k),
            to: Actor::Cc,
            payload: Payload::DualAggregate { subtree: self.k, sums: PerPhase(sums) },
        }])
    }

    /// Superstep 4: in-subtree coupling for every member plus the external
    /// part from the CC.
    pub fn distribute(&mut self, iter: usize) -> Result<Outbox<T>> {
        let mut out_coupling = None;
        for env in std::mem::take(&mut self.inbox) {
            if let Payload::OutCoupling { s, .. } = env.payload {
                out_coupling = Some(s);
            }
        }
        let out = out_coupling.ok_or_else(|| Error::MissingCoupling { actor: Actor::Rc(self.k).to_string() })?;
        let table = self.table()?;
        let n = table.len();
        let d: Vec<T> = self.duals.iter().map(|x| x.expect("aggregated this round")).collect();
        let mut msgs = Vec::with_capacity(self.members.len());
        let mut current: Option<(usize, PerPhase<Cx<T>>)> = None;
        let mut ops = OpCount::default();
        for t in 0..n {
            let c = table.coords()[t];
            let row = table.target_row(t);
            let mut acc = cx0::<T>();
            for s in 0..n {
                acc += row[s].scale(d[s]);
            }
            ops.mults += n as u64;
            ops.adds += n.saturating_sub(1) as u64;
            let ext = out.get(c.phase).ok_or_else(|| Error::MissingCoupling { actor: Actor::Rc(self.k).to_string() })?;
            acc += ext;
            ops.adds += 1;
            match &mut current {
                Some((node, s)) if *node == c.node => s.set(c.phase, acc),
                _ => {
                    if let Some((node, s)) = current.take() {
                        msgs.push(self.coupling_msg(iter, node, s));
                    }
                    let mut s = PerPhase::empty();
                    s.set(c.phase, acc);
                    current = Some((c.node, s));
                }
            }
        }
        if let Some((node, s)) = current.take() {
            msgs.push(self.coupling_msg(iter, node, s));
        }
        self.ops += ops;
        Ok(msgs)
    }

    fn coupling_msg(&self, iter: usize, node: usize, s: PerPhase<Cx<T>>) -> Envelope<T> {
        Envelope { iter, step: 4, from: Actor::Rc(self.k), to: Actor::Node(node), payload: Payload::NodeCoupling { node, s } }
    }
}

/// Central coordinator: knows only the reduced network.
#[derive(Debug)]
pub(crate) struct CcAgent<T> {
    pub roots: Vec<usize>,
    pub table: ScopedTable<T>,
    /// Cumulative impedance of each subtree root, sent once at setup.
    pub root_base: Vec<PhaseMatrix<T>>,
    /// Reduced-table coordinate → subtree index for root coordinates.
    coord_owner: Vec<Option<usize>>,
    sources: Vec<Option<T>>,
    pub all_nodes: Vec<usize>,
    pub substation: crate::feeder::SubstationCost<T>,
    pub inbox: Vec<Envelope<T>>,
    pub ops: OpCount,
}

impl<T: Scalar> CcAgent<T> {
    pub fn new(
        roots: Vec<usize>,
        table: ScopedTable<T>,
        root_base: Vec<PhaseMatrix<T>>,
        all_nodes: Vec<usize>,
        substation: crate::feeder::SubstationCost<T>,
    ) -> Self {
        let coord_owner = table.coords().iter().map(|c| roots.iter().position(|&r| r == c.node)).collect();
        let n = table.len();
        CcAgent {
            roots,
            table,
            root_base,
            coord_owner,
            sources: vec![None; n],
            all_nodes,
            substation,
            inbox: Vec::new(),
            ops: OpCount::default(),
        }
    }

    pub fn provision(&self) -> Outbox<T> {
        self.root_base
            .iter()
            .enumerate()
            .map(|(k, base)| Envelope { iter: 0, step: 0, from: Actor::Cc, to: Actor::Rc(k), payload: Payload::Provision { subtree: k, base: base.0 } })
            .collect()
    }

    /// Superstep 3: external coupling for every subtree and full coupling
    /// for every unclustered node, from the reduced-network table only.
    pub fn couple(&mut self, iter: usize) -> Result<Outbox<T>> {
        self.sources.iter_mut().for_each(|s| *s = None);
        for env in std::mem::take(&mut self.inbox) {
            let (node, vals) = match env.payload {
                Payload::DualAggregate { subtree, sums } => (self.roots[subtree], sums),
                Payload::UnclusteredDual { node, duals } => (node, duals),
                _ => continue,
            };
            for (ph, d) in vals.iter() {
                if let Some(pos) = self.table.position(Coord { node, phase: ph }) {
                    self.sources[pos] = Some(d);
                }
            }
        }
        let n = self.table.len();
        let mut src = Vec::with_capacity(n);
        for (pos, c) in self.table.coords().iter().enumerate() {
            match (self.sources[pos], self.coord_owner[pos]) {
                (Some(v), _) => src.push(v),
                // a root phase no member carries would have no entry; roots carry every member phase
                (None, Some(k)) => return Err(Error::MissingAggregate(k)),
                (None, None) => {
                    return Err(Error::MissingCoupling { actor: format!("cc (dual of node {})", c.node) })
                }
            }
        }
        let mut msgs = Vec::new();
        let mut outs: Vec<PerPhase<Cx<T>>> = vec![PerPhase::empty(); self.roots.len()];
        let mut nodes: Vec<(usize, PerPhase<Cx<T>>)> = Vec::new();
        for t in 0..n {
            let c = self.table.coords()[t];
            let own = self.coord_owner[t];
            let row = self.table.target_row(t);
            let mut acc = cx0::<T>();
            let mut terms = 0u64;
            for s in 0..n {
                if own.is_some() && self.coord_owner[s] == own {
                    continue;
                }
                acc += row[s].scale(src[s]);
                terms += 1;
            }
            self.ops.mults += terms;
            self.ops.adds += terms.saturating_sub(1);
            match own {
                Some(k) => outs[k].set(c.phase, acc),
                None => match nodes.last_mut() {
                    Some((node, s)) if *node == c.node => s.set(c.phase, acc),
                    _ => {
                        let mut s = PerPhase::empty();
                        s.set(c.phase, acc);
                        nodes.push((c.node, s));
                    }
                },
            }
        }
        for (k, s) in outs.into_iter().enumerate() {
            msgs.push(Envelope { iter, step: 3, from: Actor::Cc, to: Actor::Rc(k), payload: Payload::OutCoupling { subtree: k, s } });
        }
        for (node, s) in nodes {
            msgs.push(Envelope { iter, step: 3, from: Actor::Cc, to: Actor::Node(node), payload: Payload::NodeCoupling { node, s } });
        }
        Ok(msgs)
    }

    /// Superstep 6: broadcast `C₀'(P₀)`.
    pub fn broadcast(&mut self, iter: usize) -> Result<Outbox<T>> {
        let mut p0 = None;
        for env in std::mem::take(&mut self.inbox) {
            if let Payload::SubstationPower { p0: x } = env.payload {
                p0 = Some(x);
            }
        }
        let p0 = p0.ok_or_else(|| Error::MissingCoupling { actor: "cc (substation power)".into() })?;
        let c0_prime = self.substation.derivative(p0);
        Ok(self
            .all_nodes
            .iter()
            .map(|&i| Envelope { iter, step: 6, from: Actor::Cc, to: Actor::Node(i), payload: Payload::SubstationBroadcast { c0_prime } })
            .collect())
    }
}
