//! Coordinator-based execution of the primal-dual iteration.
//!
//! Node agents, one regional coordinator (RC) per subtree and a central
//! coordinator (CC) exchange typed messages in barrier-synchronized
//! supersteps. RCs hold only their subtree's impedances, the CC only the
//! reduced network's.

mod actors;
mod engine;
mod messages;

pub use engine::{
    run_hierarchical, HierOptions, HierResult, HierStats, HierarchicalEngine, Latency, MessageFilter, Schedule,
    TimingRow,
};
pub use messages::{Actor, Envelope, Payload};
