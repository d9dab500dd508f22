//! CSV and JSON artifacts of a solve.

use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Result;
use crate::feeder::Feeder;
use crate::hierarchical::TimingRow;
use crate::opf::{IterateState, OpfProblem, SolveResult, TrajectoryRow};
use crate::scalar::Scalar;

/// Run summary written next to the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub iters: usize,
    pub final_cost: f64,
    /// Largest voltage bound violation in p.u.² (zero when feasible).
    pub max_violation: f64,
    /// Seconds spent iterating.
    pub wallclock: f64,
}

impl Summary {
    pub fn new<T: Scalar>(problem: &OpfProblem<T>, result: &SolveResult<T>, wallclock: f64) -> Self {
        let (under, over) = problem.violations(&result.state.v);
        Summary {
            iters: result.iterations,
            final_cost: problem.cost(&result.state).as_f64(),
            max_violation: under.max(over).as_f64(),
            wallclock,
        }
    }
}

pub fn write_trajectory<T: Scalar, W: Write>(rows: &[TrajectoryRow<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "step_norm", "P0", "max_undervolt", "max_overvolt", "lagrangian"])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            fmt(r.step_norm),
            fmt(r.p0),
            fmt(r.max_undervolt),
            fmt(r.max_overvolt),
            fmt(r.lagrangian),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing<W: Write>(rows: &[TimingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Final state as a JSON object keyed `"<node id>:<phase>"`.
pub fn final_state_json<T: Scalar>(feeder: &Feeder<T>, state: &IterateState<T>) -> Value {
    let mut map = Map::new();
    for (k, c) in feeder.index().coords().iter().enumerate() {
        let mut entry = Map::new();
        entry.insert("p".into(), num(state.p[k]));
        entry.insert("q".into(), num(state.q[k]));
        entry.insert("mu_lo".into(), num(state.mu_lo[k]));
        entry.insert("mu_hi".into(), num(state.mu_hi[k]));
        entry.insert("v".into(), num(state.v[k]));
        map.insert(format!("{}:{}", feeder.node(c.node).id, c.phase), Value::Object(entry));
    }
    Value::Object(map)
}

pub fn write_json<W: Write, V: Serialize + ?Sized>(value: &V, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn fmt<T: Scalar>(x: T) -> String {
    format!("{:.17e}", x.as_f64())
}

fn num<T: Scalar>(x: T) -> Value {
    serde_json::Number::from_f64(x.as_f64()).map_or(Value::Null, Value::Number)
}
