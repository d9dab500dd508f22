use std::fmt;

use serde::{Serialize, Serializer};

use crate::feeder::PerPhase;
use crate::scalar::Cx;

/// A participant in the message-passing protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    /// Central coordinator.
    Cc,
    /// Stand-in for the grid: evaluates voltages and substation power.
    Physics,
    /// Regional coordinator of subtree `k`.
    Rc(usize),
    /// Agent of one node.
    Node(usize),
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Cc => f.write_str("cc"),
            Actor::Physics => f.write_str("physics"),
            Actor::Rc(k) => write!(f, "rc:{k}"),
            Actor::Node(i) => write!(f, "node:{i}"),
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Message payloads. Complex couplings `s` carry `α = Re s` and `β = −Im s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "payload", bound(serialize = "T: Serialize + Copy"))]
pub enum Payload<T> {
    /// CC → RC at setup: cumulative impedance from the slack to the root.
    Provision { subtree: usize, base: [[Cx<T>; 3]; 3] },
    /// Node → RC: `μ̄ − μ̲` per phase.
    MemberDual { node: usize, duals: PerPhase<T> },
    /// Unclustered node → CC: `μ̄ − μ̲` per phase.
    UnclusteredDual { node: usize, duals: PerPhase<T> },
    /// Node → physics: current injections.
    InjectionReport { node: usize, p: PerPhase<T>, q: PerPhase<T> },
    /// RC → CC: per-phase sums of member duals.
    DualAggregate { subtree: usize, sums: PerPhase<T> },
    /// CC → RC: coupling from outside the subtree, per root phase.
    OutCoupling { subtree: usize, s: PerPhase<Cx<T>> },
    /// RC or CC → node: total coupling per phase.
    NodeCoupling { node: usize, s: PerPhase<Cx<T>> },
    /// Physics → node: squared voltage per phase.
    VoltageReport { node: usize, v: PerPhase<T> },
    /// Physics → CC: substation active power.
    SubstationPower { p0: T },
    /// CC → node: `C₀'(P₀)`.
    SubstationBroadcast { c0_prime: T },
}

impl<T> Payload<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Provision { .. } => "Provision",
            Payload::MemberDual { .. } => "MemberDual",
            Payload::UnclusteredDual { .. } => "UnclusteredDual",
            Payload::InjectionReport { .. } => "InjectionReport",
            Payload::DualAggregate { .. } => "DualAggregate",
            Payload::OutCoupling { .. } => "OutCoupling",
            Payload::NodeCoupling { .. } => "NodeCoupling",
            Payload::VoltageReport { .. } => "VoltageReport",
            Payload::SubstationPower { .. } => "SubstationPower",
            Payload::SubstationBroadcast { .. } => "SubstationBroadcast",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Serialize + Copy"))]
pub struct Envelope<T> {
    pub iter: usize,
    pub step: u8,
    pub from: Actor,
    pub to: Actor,
    #[serde(flatten)]
    pub payload: Payload<T>,
}
