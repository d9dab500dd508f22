#![allow(dead_code)]

use voltreg::opf::{IterateState, OpfProblem, SolverConfig};
use voltreg::{synth, Case64};

/// The five reference fixtures.
pub fn fixtures() -> Vec<(&'static str, Case64)> {
    vec![
        ("line3", synth::line3()),
        ("tri2", synth::tri2()),
        ("star8", synth::star8()),
        ("binary63", synth::binary63()),
        ("multiphase200", synth::random_multiphase(200, 11)),
    ]
}

pub fn config(eps: f64) -> SolverConfig<f64> {
    SolverConfig { eps, check_stepsize: false, ..SolverConfig::default() }
}

pub fn problem(case: &Case64, eps: f64) -> OpfProblem<f64> {
    OpfProblem::new(case.clone(), config(eps)).unwrap()
}

pub fn gap(a: &IterateState<f64>, b: &IterateState<f64>) -> f64 {
    a.max_abs_diff(b)
}
