//! Voltage regulation on radial multi-phase distribution feeders with a
//! regularized primal-dual gradient method.
//!
//! The iteration can run centrally over dense voltage sensitivities or
//! hierarchically, with regional coordinators per subtree and a central
//! coordinator over the reduced network. Both produce the same iterates.

pub mod clustering;
pub mod error;
pub mod feeder;
pub mod hierarchical;
pub mod opf;
pub mod powerflow;
pub mod report;
pub mod scalar;
pub mod sensitivity;
pub mod synth;

pub use clustering::{auto_partition, recommend_k, validate_partition, OpBreakdown, OpCount, Partition, Subtree};
pub use error::{Error, Result};
pub use feeder::{Case, Coord, Device, DeviceCost, FeasibleSet, Phase, PhaseSet, QuadraticCost, SubstationCost};
pub use hierarchical::{run_hierarchical, HierOptions, HierarchicalEngine, Schedule};
pub use opf::{estimate_constants, solve_centralized, Mode, SolverConfig, Status, VoltageLimits};
pub use scalar::{Cx, Scalar};
pub use sensitivity::{lemma3_check, SensitivityPack};

pub type Feeder64 = feeder::Feeder<f64>;
pub type Case64 = Case<f64>;
pub type Problem64 = opf::OpfProblem<f64>;
pub type State64 = opf::IterateState<f64>;
pub type Config64 = SolverConfig<f64>;
pub type Pack64 = SensitivityPack<f64>;

pub type Feeder32 = feeder::Feeder<f32>;
pub type Case32 = Case<f32>;
pub type Problem32 = opf::OpfProblem<f32>;
