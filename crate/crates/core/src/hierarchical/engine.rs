use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::actors::{CcAgent, NodeAgent, Outbox, RcAgent, StepParams};
use super::messages::{Actor, Envelope, Payload};
use crate::clustering::{require_valid, OpBreakdown, OpCount, Partition};
use crate::error::{Error, Result};
use crate::feeder::{PerPhase, PhaseMatrix, SLACK};
use crate::opf::{drive, Engine, IterateState, OpfProblem, SolveResult};
use crate::scalar::Scalar;
use crate::sensitivity::{cumulative_impedance, PathImpedanceTable, ScopedTable};

/// Order in which the actors of one superstep are executed. Results do not
/// depend on it: messages are delivered at the barrier sorted by sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Forward,
    Reverse,
    Shuffled(u64),
    /// Actors of a superstep run concurrently on the rayon pool.
    Parallel,
}

/// Simulated per-message link latency. Each barrier waits for its slowest
/// message; exceeding `timeout_us` aborts the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    pub link_us: u64,
    pub jitter_us: u64,
    pub seed: u64,
    pub timeout_us: Option<u64>,
    /// Actually sleep for the simulated delay.
    pub sleep: bool,
}

/// Drop messages matching a predicate, to exercise barrier checks.
pub type MessageFilter<T> = Arc<dyn Fn(&Envelope<T>) -> bool + Send + Sync>;

pub struct HierOptions<T> {
    pub schedule: Schedule,
    pub latency: Option<Latency>,
    /// Keep a per-actor timing row for every iteration.
    pub record_timing: bool,
    /// Report zero for every wall-clock measurement.
    pub zero_timing: bool,
    /// JSON-lines message log.
    pub log: Option<Box<dyn Write + Send>>,
    pub drop: Option<MessageFilter<T>>,
}

impl<T> Default for HierOptions<T> {
    fn default() -> Self {
        HierOptions { schedule: Schedule::Forward, latency: None, record_timing: false, zero_timing: false, log: None, drop: None }
    }
}

/// Per-actor, per-iteration compute time and coupling operations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimingRow {
    pub iter: usize,
    pub actor: String,
    pub micros: u64,
    pub mults: u64,
    pub adds: u64,
}

/// Execution statistics of a hierarchical run.
#[derive(Debug, Clone, Default)]
pub struct HierStats {
    /// Coupling operations of the last completed iteration.
    pub last_iter_ops: OpBreakdown,
    /// Coupling operations over all iterations, setup excluded.
    pub total_ops: OpBreakdown,
    pub iterations: usize,
    /// Sum over supersteps of the slowest actor's compute time.
    pub critical_path: Duration,
    /// Wall time spent iterating, simulated latency excluded.
    pub wall: Duration,
    pub simulated_latency_us: u64,
    pub messages: u64,
    pub timing: Vec<TimingRow>,
}

/// Algorithm state distributed over node agents, RCs, the CC and the
/// physics stand-in.
pub struct HierarchicalEngine<'a, T: Scalar> {
    problem: &'a OpfProblem<T>,
    nodes: Vec<NodeAgent<T>>,
    rcs: Vec<RcAgent<T>>,
    cc: CcAgent<T>,
    physics_inbox: Vec<Envelope<T>>,
    /// Node agent index for every feeder node (none for the slack).
    agent_of: Vec<Option<usize>>,
    options: HierOptions<T>,
    latency_rng: ChaCha8Rng,
    iter: usize,
    state: IterateState<T>,
    stats: HierStats,
    iter_node_us: Vec<u64>,
    iter_rc_us: Vec<u64>,
    iter_cc_us: u64,
    iter_phys_us: u64,
}

fn elapsed_us(t: Instant) -> u64 {
    t.elapsed().as_micros() as u64
}

impl<'a, T: Scalar> HierarchicalEngine<'a, T> {
    pub fn new(problem: &'a OpfProblem<T>, partition: &Partition, init: IterateState<T>, options: HierOptions<T>) -> Result<Self> {
        let feeder = &problem.case.feeder;
        let reduced = require_valid(feeder, partition)?;
        let idx = feeder.index();
        let n = problem.dim();
        for v in [&init.p, &init.q, &init.mu_lo, &init.mu_hi] {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, got: v.len() });
            }
        }
        let owner = partition.owner(feeder.num_nodes());

        let mut nodes = Vec::with_capacity(feeder.num_nodes() - 1);
        let mut agent_of = vec![None; feeder.num_nodes()];
        for i in 1..feeder.num_nodes() {
            let pos: Vec<usize> = idx.node_positions(i).collect();
            let pick = |v: &[T]| pos.iter().map(|&k| v[k]).collect::<Vec<T>>();
            agent_of[i] = Some(nodes.len());
            nodes.push(NodeAgent::new(
                i,
                pos.iter().map(|&k| idx.coord(k).phase).collect(),
                pos.iter().map(|&k| problem.device(k).cloned()).collect(),
                pick(problem.lower()),
                pick(problem.upper()),
                (pick(&init.p), pick(&init.q), pick(&init.mu_lo), pick(&init.mu_hi)),
                owner[i],
            ));
        }

        // each RC receives its subtree's topology and line impedances
        let rcs = partition
            .subtrees
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut members = s.members.clone();
                members.sort_unstable();
                let local_parent = members
                    .iter()
                    .map(|&m| if m == s.root { None } else { feeder.parent(m).and_then(|p| members.binary_search(&p).ok()) })
                    .collect();
                let line_z = members
                    .iter()
                    .map(|&m| if m == s.root { PhaseMatrix::default() } else { feeder.parent_line(m).unwrap().z })
                    .collect();
                let mut rc = RcAgent::new(k, members, local_parent, line_z, idx.clone());
                rc.root = s.root;
                rc
            })
            .collect::<Vec<_>>();
        // members must be listed root-first for the local tree
        for (rc, s) in rcs.iter().zip(&partition.subtrees) {
            if rc.members.first() != Some(&s.root) {
                return Err(Error::InvalidPartition(format!("subtree {} root {} is not its smallest member", rc.k, s.root)));
            }
        }

        // the CC's table covers the reduced network only
        let red = &reduced.nodes;
        let red_parent: Vec<Option<usize>> = red
            .iter()
            .map(|&i| if i == SLACK { None } else { feeder.parent(i).and_then(|p| red.binary_search(&p).ok()) })
            .collect();
        let red_z: Vec<PhaseMatrix<T>> =
            red.iter().map(|&i| if i == SLACK { PhaseMatrix::default() } else { feeder.parent_line(i).unwrap().z }).collect();
        let cc_paths = PathImpedanceTable::from_local_tree(red.clone(), red_parent, &red_z, PhaseMatrix::default())?;
        let cc_table = ScopedTable::build(&cc_paths, idx);
        let root_base = partition.subtrees.iter().map(|s| cc_paths.get(s.root, s.root)).collect::<Result<Vec<_>>>()?;
        debug_assert!({
            let cum = cumulative_impedance(feeder);
            partition.subtrees.iter().zip(&root_base).all(|(s, b)| cum[s.root] == *b)
        });
        let cc = CcAgent::new(
            partition.subtrees.iter().map(|s| s.root).collect(),
            cc_table,
            root_base,
            (1..feeder.num_nodes()).collect(),
            problem.case.substation,
        );

        let seed = options.latency.map_or(0, |l| l.seed);
        let k = rcs.len();
        let mut engine = HierarchicalEngine {
            problem,
            nodes,
            rcs,
            cc,
            physics_inbox: Vec::new(),
            agent_of,
            options,
            latency_rng: ChaCha8Rng::seed_from_u64(seed),
            iter: 0,
            state: init,
            stats: HierStats::default(),
            iter_node_us: Vec::new(),
            iter_rc_us: vec![0; k],
            iter_cc_us: 0,
            iter_phys_us: 0,
        };
        engine.iter_node_us = vec![0; engine.nodes.len()];
        engine.setup()?;
        Ok(engine)
    }

    pub fn stats(&self) -> &HierStats {
        &self.stats
    }

    pub fn into_parts(self) -> (IterateState<T>, HierStats) {
        (self.state, self.stats)
    }

    /// Subtree table of each RC.
    pub fn rc_tables(&self) -> Vec<&ScopedTable<T>> {
        self.rcs.iter().filter_map(|r| r.table.as_ref()).collect()
    }

    pub fn cc_table(&self) -> &ScopedTable<T> {
        &self.cc.table
    }

    /// Couplings `(α, β)` for an arbitrary dual difference `μ̄ − μ̲`, computed
    /// by the RC and CC agents exactly as in supersteps 2–4. Engine state,
    /// counters and the message log are left untouched.
    pub fn probe_coupling(&mut self, d: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let idx = self.problem.case.feeder.index();
        let n = self.problem.dim();
        if d.len() != n {
            return Err(Error::Dimension { expected: n, got: d.len() });
        }
        let saved_nodes: Vec<_> = self.nodes.iter_mut().map(|a| std::mem::take(&mut a.inbox)).collect();
        let saved_cc = std::mem::take(&mut self.cc.inbox);
        let saved_ops = (self.cc.ops, self.rcs.iter().map(|r| r.ops).collect::<Vec<_>>());
        let (log, drop, latency) = (self.options.log.take(), self.options.drop.take(), self.options.latency.take());
        let messages = self.stats.messages;

        let mut msgs = Vec::with_capacity(self.nodes.len());
        for a in &self.nodes {
            let mut duals = PerPhase::empty();
            for ph in &a.phases {
                duals.set(*ph, d[idx.position(a.node, *ph).unwrap()]);
            }
            let me = Actor::Node(a.node);
            msgs.push(match a.rc {
                Some(k) => Envelope { iter: self.iter, step: 1, from: me, to: Actor::Rc(k), payload: Payload::MemberDual { node: a.node, duals } },
                None => Envelope { iter: self.iter, step: 1, from: me, to: Actor::Cc, payload: Payload::UnclusteredDual { node: a.node, duals } },
            });
        }
        let run = |e: &mut Self| -> Result<()> {
            e.deliver(1, msgs)?;
            e.step_aggregate()?;
            e.step_couple()?;
            e.step_distribute()?;
            Ok(())
        };
        let outcome = run(self);

        let mut alpha = vec![T::zero(); n];
        let mut beta = vec![T::zero(); n];
        for (a, saved) in self.nodes.iter_mut().zip(saved_nodes) {
            for env in std::mem::replace(&mut a.inbox, saved) {
                if let Payload::NodeCoupling { node, s } = env.payload {
                    for (ph, c) in s.iter() {
                        let k = idx.position(node, ph).unwrap();
                        alpha[k] = c.re;
                        beta[k] = -c.im;
                    }
                }
            }
        }
        self.cc.inbox = saved_cc;
        self.cc.ops = saved_ops.0;
        for (rc, ops) in self.rcs.iter_mut().zip(saved_ops.1) {
            rc.ops = ops;
            rc.inbox.clear();
        }
        (self.options.log, self.options.drop, self.options.latency) = (log, drop, latency);
        self.stats.messages = messages;
        outcome.map(|_| (alpha, beta))
    }

    fn params(&self) -> StepParams<T> {
        let c = &self.problem.config;
        StepParams { eps: c.eps, eps_dual: c.eps_dual(), eta: c.eta }
    }

    /// Run `f` over agents in schedule order, returning per-agent outboxes
    /// (in agent order) and compute times.
    fn run_agents<A: Send>(
        schedule: Schedule,
        superstep: u64,
        agents: &mut [A],
        f: impl Fn(&mut A) -> Result<Outbox<T>> + Sync + Send,
    ) -> Result<Vec<(Outbox<T>, u64)>>
    where
        T: Send,
    {
        let timed = |a: &mut A| -> Result<(Outbox<T>, u64)> {
            let t = Instant::now();
            let out = f(a)?;
            Ok((out, elapsed_us(t)))
        };
        match schedule {
            Schedule::Parallel => agents.par_iter_mut().map(timed).collect(),
            _ => {
                let n = agents.len();
                let mut order: Vec<usize> = (0..n).collect();
                match schedule {
                    Schedule::Reverse => order.reverse(),
                    Schedule::Shuffled(seed) => order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ superstep.wrapping_mul(0x9E37_79B9_7F4A_7C15))),
                    _ => {}
                }
                let mut slots: Vec<Option<(Outbox<T>, u64)>> = (0..n).map(|_| None).collect();
                for i in order {
                    slots[i] = Some(timed(&mut agents[i])?);
                }
                Ok(slots.into_iter().map(|s| s.expect("every agent ran")).collect())
            }
        }
    }

    /// Barrier: filter, log and deliver messages sorted by sender.
    fn deliver(&mut self, step: u8, mut msgs: Vec<Envelope<T>>) -> Result<()> {
        msgs.sort_by_key(|m| m.from);
        if let Some(lat) = self.options.latency {
            let mut worst = 0u64;
            for _ in &msgs {
                let j = if lat.jitter_us > 0 { self.latency_rng.gen_range(0..=lat.jitter_us) } else { 0 };
                worst = worst.max(lat.link_us + j);
            }
            if let Some(limit) = lat.timeout_us {
                if worst > limit {
                    return Err(Error::BarrierTimeout { iter: self.iter, step, latency_us: worst, timeout_us: limit });
                }
            }
            self.stats.simulated_latency_us += worst;
            if lat.sleep && worst > 0 {
                std::thread::sleep(Duration::from_micros(worst));
            }
        }
        for m in msgs {
            if let Some(drop) = &self.options.drop {
                if drop(&m) {
                    continue;
                }
            }
            if let Some(log) = self.options.log.as_mut() {
                serde_json::to_writer(&mut *log, &m)?;
                log.write_all(b"\n")?;
            }
            self.stats.messages += 1;
            match m.to {
                Actor::Cc => self.cc.inbox.push(m),
                Actor::Physics => self.physics_inbox.push(m),
                Actor::Rc(k) => self.rcs[k].inbox.push(m),
                Actor::Node(i) => {
                    let a = self.agent_of[i].expect("messages address non-slack nodes");
                    self.nodes[a].inbox.push(m);
                }
            }
        }
        Ok(())
    }

    fn collect(results: Vec<(Outbox<T>, u64)>, times: &mut [u64]) -> (Vec<Envelope<T>>, u64) {
        let mut all = Vec::new();
        let mut worst = 0;
        for (k, (out, us)) in results.into_iter().enumerate() {
            times[k] += us;
            worst = worst.max(us);
            all.extend(out);
        }
        (all, worst)
    }

    fn superstep_key(&self, step: u8) -> u64 {
        self.iter as u64 * 8 + step as u64
    }

    fn step_nodes(&mut self, update_now: bool) -> Result<u64> {
        let (iter, params) = (self.iter, self.params());
        let key = self.superstep_key(1);
        let res = Self::run_agents(self.options.schedule, key, &mut self.nodes, |a| a.step(iter, params, update_now))?;
        let (msgs, worst) = Self::collect(res, &mut self.iter_node_us);
        self.deliver(1, msgs)?;
        Ok(worst)
    }

    fn step_aggregate(&mut self) -> Result<u64> {
        let iter = self.iter;
        let key = self.superstep_key(2);
        let res = Self::run_agents(self.options.schedule, key, &mut self.rcs, |rc| rc.aggregate(iter))?;
        let (msgs, worst) = Self::collect(res, &mut self.iter_rc_us);
        self.deliver(2, msgs)?;
        Ok(worst)
    }

    fn step_couple(&mut self) -> Result<u64> {
        let t = Instant::now();
        let msgs = self.cc.couple(self.iter)?;
        let us = elapsed_us(t);
        self.iter_cc_us += us;
        self.deliver(3, msgs)?;
        Ok(us)
    }

    fn step_distribute(&mut self) -> Result<u64> {
        let iter = self.iter;
        let key = self.superstep_key(4);
        let res = Self::run_agents(self.options.schedule, key, &mut self.rcs, |rc| rc.distribute(iter))?;
        let (msgs, worst) = Self::collect(res, &mut self.iter_rc_us);
        self.deliver(4, msgs)?;
        Ok(worst)
    }

    /// Superstep 5: voltages and substation power at the reported injections.
    fn step_physics(&mut self) -> Result<u64> {
        let t = Instant::now();
        let idx = self.problem.case.feeder.index();
        let n = self.problem.dim();
        let mut p = vec![None; n];
        let mut q = vec![None; n];
        for env in std::mem::take(&mut self.physics_inbox) {
            if let Payload::InjectionReport { node, p: pp, q: qq } = env.payload {
                for (ph, v) in pp.iter() {
                    if let Some(k) = idx.position(node, ph) {
                        p[k] = Some(v);
                    }
                }
                for (ph, v) in qq.iter() {
                    if let Some(k) = idx.position(node, ph) {
                        q[k] = Some(v);
                    }
                }
            }
        }
        let missing = |k: usize| Error::MissingCoupling { actor: format!("physics (injection of node {})", idx.coord(k).node) };
        let p: Vec<T> = p.iter().enumerate().map(|(k, v)| v.ok_or_else(|| missing(k))).collect::<Result<_>>()?;
        let q: Vec<T> = q.iter().enumerate().map(|(k, v)| v.ok_or_else(|| missing(k))).collect::<Result<_>>()?;
        let (v, p0) = self.problem.observe(&p, &q)?;
        let mut msgs = Vec::with_capacity(self.nodes.len() + 1);
        for a in &self.nodes {
            let mut vv = PerPhase::empty();
            for ph in &a.phases {
                vv.set(*ph, v[idx.position(a.node, *ph).unwrap()]);
            }
            msgs.push(Envelope { iter: self.iter, step: 5, from: Actor::Physics, to: Actor::Node(a.node), payload: Payload::VoltageReport { node: a.node, v: vv } });
        }
        msgs.push(Envelope { iter: self.iter, step: 5, from: Actor::Physics, to: Actor::Cc, payload: Payload::SubstationPower { p0 } });
        self.state.v = v;
        self.state.p0 = p0;
        let us = elapsed_us(t);
        self.iter_phys_us += us;
        self.deliver(5, msgs)?;
        Ok(us)
    }

    fn step_broadcast(&mut self) -> Result<u64> {
        let t = Instant::now();
        let msgs = self.cc.broadcast(self.iter)?;
        let us = elapsed_us(t);
        self.iter_cc_us += us;
        self.deliver(6, msgs)?;
        Ok(us)
    }

    /// Round 0: provisioning, then supersteps 1–6 without an update.
    fn setup(&mut self) -> Result<()> {
        let msgs = self.cc.provision();
        self.deliver(0, msgs)?;
        for rc in &mut self.rcs {
            rc.provision()?;
        }
        self.round(false)?;
        self.reset_iter_counters();
        Ok(())
    }

    fn reset_iter_counters(&mut self) {
        self.iter_node_us.iter_mut().for_each(|x| *x = 0);
        self.iter_rc_us.iter_mut().for_each(|x| *x = 0);
        self.iter_cc_us = 0;
        self.iter_phys_us = 0;
        for rc in &mut self.rcs {
            rc.ops = OpCount::default();
        }
        self.cc.ops = OpCount::default();
    }

    fn round(&mut self, update_now: bool) -> Result<Duration> {
        let mut critical = 0u64;
        critical += self.step_nodes(update_now)?;
        critical += self.step_aggregate()?;
        critical += self.step_couple()?;
        critical += self.step_distribute()?;
        critical += self.step_physics()?;
        critical += self.step_broadcast()?;
        Ok(Duration::from_micros(critical))
    }

    fn assemble_state(&mut self) {
        let idx = self.problem.case.feeder.index();
        for a in &self.nodes {
            for (k, ph) in a.phases.iter().enumerate() {
                let pos = idx.position(a.node, *ph).unwrap();
                self.state.p[pos] = a.p[k];
                self.state.q[pos] = a.q[k];
                self.state.mu_lo[pos] = a.mu_lo[k];
                self.state.mu_hi[pos] = a.mu_hi[k];
            }
        }
    }

    fn finish_iteration(&mut self, critical: Duration, wall: Duration) {
        let zero = self.options.zero_timing;
        let breakdown = OpBreakdown { cc: self.cc.ops, rcs: self.rcs.iter().map(|r| r.ops).collect() };
        self.stats.total_ops.cc += breakdown.cc;
        if self.stats.total_ops.rcs.len() != breakdown.rcs.len() {
            self.stats.total_ops.rcs = vec![OpCount::default(); breakdown.rcs.len()];
        }
        for (t, r) in self.stats.total_ops.rcs.iter_mut().zip(&breakdown.rcs) {
            *t += *r;
        }
        if !zero {
            self.stats.critical_path += critical;
            self.stats.wall += wall;
        }
        if self.options.record_timing {
            let us = |x: u64| if zero { 0 } else { x };
            let it = self.iter;
            let t = &mut self.stats.timing;
            t.push(TimingRow { iter: it, actor: "cc".into(), micros: us(self.iter_cc_us), mults: breakdown.cc.mults, adds: breakdown.cc.adds });
            t.push(TimingRow { iter: it, actor: "physics".into(), micros: us(self.iter_phys_us), mults: 0, adds: 0 });
            for (k, r) in breakdown.rcs.iter().enumerate() {
                t.push(TimingRow { iter: it, actor: Actor::Rc(k).to_string(), micros: us(self.iter_rc_us[k]), mults: r.mults, adds: r.adds });
            }
            for (a, &x) in self.nodes.iter().zip(&self.iter_node_us) {
                t.push(TimingRow { iter: it, actor: Actor::Node(a.node).to_string(), micros: us(x), mults: 0, adds: 0 });
            }
        }
        self.stats.last_iter_ops = breakdown;
        self.stats.iterations = self.iter;
    }
}

impl<T: Scalar> Engine<T> for HierarchicalEngine<'_, T> {
    fn step(&mut self) -> Result<()> {
        self.iter += 1;
        self.reset_iter_counters();
        let t = Instant::now();
        let critical = self.round(true)?;
        let wall = t.elapsed();
        self.assemble_state();
        self.finish_iteration(critical, wall);
        Ok(())
    }

    fn state(&self) -> &IterateState<T> {
        &self.state
    }
}

/// Result of a hierarchical solve.
pub struct HierResult<T> {
    pub result: SolveResult<T>,
    pub stats: HierStats,
}

/// Run the hierarchical engine under the problem's stopping rule.
pub fn run_hierarchical<T: Scalar>(
    problem: &OpfProblem<T>,
    partition: &Partition,
    init: Option<IterateState<T>>,
    options: HierOptions<T>,
) -> Result<HierResult<T>> {
    let warnings = crate::opf::stepsize_warnings(problem);
    let init = match init {
        Some(s) => s,
        None => problem.initial_state()?,
    };
    let mut engine = HierarchicalEngine::new(problem, partition, init, options)?;
    let (status, iterations, trajectory) = drive(problem, &mut engine)?;
    let (state, stats) = engine.into_parts();
    Ok(HierResult { result: SolveResult { status, iterations, state, trajectory, warnings }, stats })
}
