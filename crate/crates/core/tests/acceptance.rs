//! Acceptance run: one PASS/FAIL line per criterion.

use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voltreg::clustering::{auto_partition, centralized_op_count, recommend_k, validate_partition, Partition, Subtree};
use voltreg::hierarchical::{run_hierarchical, HierOptions, HierarchicalEngine, Schedule};
use voltreg::opf::{
    estimate_constants, solve_centralized, CentralEngine, Engine, IterateState, Mode, OpfProblem, SolverConfig, Status,
};
use voltreg::report::{final_state_json, write_json, write_timing, write_trajectory, Summary};
use voltreg::{lemma3_check, synth, Case64, SensitivityPack};

type Outcome = (bool, String);

fn fixtures() -> Vec<(&'static str, Case64)> {
    vec![
        ("line3", synth::line3()),
        ("tri2", synth::tri2()),
        ("star8", synth::star8()),
        ("binary63", synth::binary63()),
        ("multiphase200", synth::random_multiphase(200, 11)),
    ]
}

fn config(eps: f64) -> SolverConfig<f64> {
    SolverConfig { eps, check_stepsize: false, ..SolverConfig::default() }
}

fn leaf_count(case: &Case64) -> usize {
    (1..case.feeder.num_nodes()).filter(|&i| case.feeder.children(i).is_empty()).count()
}

/// A feasible auto partition near the recommended size.
fn recommended_partition(case: &Case64) -> Partition {
    let n = case.feeder.num_nodes() - 1;
    let k = recommend_k(n).min(leaf_count(case)).max(1);
    auto_partition(&case.feeder, k).expect("k bounded by the leaf count")
}

fn dist(a: &IterateState<f64>, b: &IterateState<f64>) -> f64 {
    a.z_dist2(b)
}

fn engine_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut runs = 0;
    for (_, case) in fixtures() {
        for mode in [Mode::Linear, Mode::Feedback] {
            let problem = OpfProblem::new(case.clone(), SolverConfig { mode, ..config(3.5e-4) }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let init = problem.random_state(&mut rng, 1.0).unwrap();
            for part in [Partition::slack_children(&case.feeder), recommended_partition(&case)] {
                let mut c = CentralEngine::new(&problem, init.clone());
                let mut h = HierarchicalEngine::new(&problem, &part, init.clone(), HierOptions::default()).unwrap();
                for _ in 0..200 {
                    c.step().unwrap();
                    h.step().unwrap();
                    worst = worst.max(c.state().max_abs_diff(h.state()));
                }
                runs += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (worst <= 1e-9 && secs < 60.0, format!("{runs} runs x 200 iterations, max gap {worst:.2e}, {secs:.1}s"))
}

fn decomposition_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for (_, case) in fixtures() {
        let problem = OpfProblem::new(case.clone(), config(1e-3)).unwrap();
        let part = recommended_partition(&case);
        let mut e = HierarchicalEngine::new(&problem, &part, problem.initial_state().unwrap(), HierOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d: Vec<f64> = (0..problem.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = e.probe_coupling(&d).unwrap();
            let (ra, rb) = problem.pack.transpose_apply(&d).unwrap();
            for k in 0..d.len() {
                worst = worst.max((a[k] - ra[k]).abs()).max((b[k] - rb[k]).abs());
            }
        }
    }
    (worst <= 1e-10, format!("5 fixtures x 1000 dual vectors, max error {worst:.2e}"))
}

fn block_structure() -> Outcome {
    let mut checked = 0;
    let mut ok = true;
    for (_, case) in fixtures() {
        let pack = SensitivityPack::build(&case.feeder);
        let mut parts = vec![Partition::slack_children(&case.feeder)];
        for k in 1..=leaf_count(&case).min(24) {
            parts.push(auto_partition(&case.feeder, k).unwrap());
        }
        for p in parts {
            ok &= validate_partition(&case.feeder, &p).is_ok() && lemma3_check(&pack, &p).ok();
            checked += 1;
        }
    }
    // three invalid partitions, each must be caught
    let b63 = synth::binary63();
    let n63 = b63.feeder.num_nodes();
    let shallow = Partition::with_remaining_unclustered(n63, vec![Subtree { root: 1, members: vec![1, 3, 4] }]);
    let foreign = Partition::with_remaining_unclustered(n63, vec![Subtree { root: 1, members: vec![1, 2] }]);
    let mp = synth::random_multiphase(200, 11);
    let n = mp.feeder.num_nodes();
    let first = mp.feeder.children(0)[0];
    let mut members = mp.feeder.descendants(first);
    members.push(first);
    members.sort_unstable();
    let leaf = *members
        .iter()
        .filter(|&&m| mp.feeder.children(m).is_empty() && mp.feeder.parent(m) != Some(first))
        .max_by_key(|&&m| mp.feeder.depth(m))
        .unwrap();
    members.retain(|&m| m != leaf);
    let missing_leaf = Partition::with_remaining_unclustered(n, vec![Subtree { root: first, members }]);
    let mut caught = 0;
    for (case, p) in [(&b63, &shallow), (&b63, &foreign), (&mp, &missing_leaf)] {
        let pack = SensitivityPack::build(&case.feeder);
        let report = lemma3_check(&pack, p);
        if !report.ok() && !validate_partition(&case.feeder, p).is_ok() {
            caught += 1;
        }
    }
    (ok && caught == 3, format!("{checked} valid partitions pass, {caught}/3 invalid partitions rejected"))
}

fn contraction() -> Outcome {
    let case = synth::binary63();
    let probe = OpfProblem::new(case.clone(), SolverConfig { eta: 1.0, ..config(1e-3) }).unwrap();
    let c = estimate_constants(&probe).unwrap();
    let eps = c.m / (c.l * c.l);
    let delta = c.contraction(eps);
    let cfg = SolverConfig { eta: 1.0, dual_mult: 1.0, ..config(eps) };
    let problem = OpfProblem::new(case, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let init = problem.random_state(&mut rng, 1.0).unwrap();
    // z* by running to stagnation
    let mut e = CentralEngine::new(&problem, init.clone());
    let mut star = init.clone();
    for _ in 0..2_000_000 {
        e.step().unwrap();
        let step = dist(&star, e.state());
        star = e.state().clone();
        if step < 1e-12 {
            break;
        }
    }
    let mut e = CentralEngine::new(&problem, init.clone());
    let mut prev = dist(&init, &star);
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    while prev > 1e-10 && steps < 100_000 {
        e.step().unwrap();
        let d = dist(e.state(), &star);
        worst = worst.max((d * d) / (prev * prev));
        prev = d;
        steps += 1;
    }
    let ok = c.m <= c.l && worst <= delta + 1e-6;
    (ok, format!("M={:.4} L={:.4} eps=M/L^2={eps:.4e}, worst squared ratio {worst:.6} vs bound {delta:.6} over {steps} steps", c.m, c.l))
}

fn monotone_lipschitz() -> Outcome {
    let mut ok = true;
    let mut worst_m = f64::INFINITY;
    let mut worst_l: f64 = 0.0;
    for (_, case) in fixtures() {
        let problem = OpfProblem::new(case, config(1e-3)).unwrap();
        let c = estimate_constants(&problem).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = problem.random_state(&mut rng, 1.0).unwrap();
            let b = problem.random_state(&mut rng, 1.0).unwrap();
            let ta = problem.gradient(&a).unwrap().flat();
            let tb = problem.gradient(&b).unwrap().flat();
            let dz: Vec<f64> = a.z().iter().zip(b.z()).map(|(x, y)| x - y).collect();
            let dt: Vec<f64> = ta.iter().zip(&tb).map(|(x, y)| x - y).collect();
            let inner: f64 = dz.iter().zip(&dt).map(|(x, y)| x * y).sum();
            let nz2: f64 = dz.iter().map(|x| x * x).sum();
            let nt = dt.iter().map(|x| x * x).sum::<f64>().sqrt();
            ok &= inner >= c.m * nz2 - 1e-12 && nt <= c.l * nz2.sqrt() + 1e-12;
            worst_m = worst_m.min(inner / nz2 / c.m);
            worst_l = worst_l.max(nt / nz2.sqrt() / c.l);
        }
    }
    (ok, format!("5000 pairs, min <dT,dz>/(M|dz|^2) = {worst_m:.3}, max |dT|/(L|dz|) = {worst_l:.3}"))
}

fn voltage_regulation() -> Outcome {
    let case = synth::line3();
    let lower = 0.95f64 * 0.95;
    let nominal = {
        let p: Vec<f64> = vec![-0.1, -0.15];
        let q: Vec<f64> = vec![-0.05, -0.05];
        let pack = SensitivityPack::build(&case.feeder);
        voltreg::powerflow::linear_voltages(&pack, &p, &q, &case.feeder.v_tilde()).unwrap()
    };
    let violated = nominal.iter().any(|&v| v < lower);
    let mut detail = format!("nominal min v {:.4}", nominal.iter().cloned().fold(f64::INFINITY, f64::min));
    let mut ok = violated;
    for (eta, floor) in [(1e-3, lower - 10.0 * 1e-3), (1e-5, lower - 1e-3)] {
        let cfg = SolverConfig { eta, max_iters: 1_000_000, sigma: 1e-12, sigma_z: 1e-11, ..config(0.2) };
        let problem = OpfProblem::new(case.clone(), cfg).unwrap();
        let r = solve_centralized(&problem, None).unwrap();
        let vmin = r.state.v.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= r.status == Status::Converged && vmin >= floor;
        detail += &format!("; eta={eta:e}: min v {vmin:.6} >= {floor:.6}");
    }
    (ok, detail)
}

fn fit_exponent(ns: &[f64], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ls.iter().sum::<f64>() / ls.len() as f64;
    let num: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn complexity_scaling() -> Outcome {
    let start = Instant::now();
    let sizes = [256usize, 1024, 4096];
    let mut hier = Vec::new();
    let mut central = Vec::new();
    let mut ratio_1024 = 1.0;
    for &n in &sizes {
        let (case, part) = synth::laterals(n, recommend_k(n), 2, n as u64);
        let problem = OpfProblem::new(case, config(1e-3)).unwrap();
        let init = problem.initial_state().unwrap();
        let mut h = HierarchicalEngine::new(&problem, &part, init.clone(), HierOptions::default()).unwrap();
        h.step().unwrap();
        let hops = h.stats().last_iter_ops.total().total() as f64;
        let mut c = CentralEngine::new(&problem, init);
        c.step().unwrap();
        let cops = c.ops().total() as f64;
        assert_eq!(c.ops(), centralized_op_count(problem.dim()));
        if n == 1024 {
            ratio_1024 = hops / cops;
        }
        hier.push(hops);
        central.push(cops);
    }
    let ns: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let eh = fit_exponent(&ns, &hier);
    let ec = fit_exponent(&ns, &central);
    let secs = start.elapsed().as_secs_f64();
    let ok = (eh - 4.0 / 3.0).abs() <= 0.15 && (ec - 2.0).abs() <= 0.05 && ratio_1024 < 0.1 && secs < 300.0;
    (ok, format!("hierarchical exponent {eh:.3}, centralized {ec:.3}, N=1024 ratio {:.2}%, {secs:.1}s", 100.0 * ratio_1024))
}

fn feedback_radius() -> Outcome {
    let case = synth::tri2_extended();
    let probe = OpfProblem::new(case.clone(), config(1e-3)).unwrap();
    let bound = estimate_constants(&probe).unwrap().eps_bound;
    let eps0 = 0.9 * bound;
    let mut radii = Vec::new();
    for eps in [eps0, eps0 / 2.0, eps0 / 4.0] {
        let lin = SolverConfig { max_iters: 2_000_000, sigma: 1e-14, sigma_z: 1e-13, ..config(eps) };
        let linear = OpfProblem::new(case.clone(), lin.clone()).unwrap();
        let star = solve_centralized(&linear, None).unwrap().state;
        let fb = OpfProblem::new(case.clone(), SolverConfig { mode: Mode::Feedback, ..lin }).unwrap();
        let mut e = CentralEngine::new(&fb, fb.initial_state().unwrap());
        let mut tail = Vec::new();
        let mut prev = e.state().clone();
        for it in 0..2_000_000 {
            e.step().unwrap();
            let step = dist(&prev, e.state());
            prev = e.state().clone();
            tail.push(dist(e.state(), &star));
            if tail.len() > 200 {
                tail.remove(0);
            }
            if step < 1e-13 && it > 200 {
                break;
            }
        }
        radii.push(tail.iter().cloned().fold(0.0, f64::max));
    }
    let ok = radii.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    (ok, format!("eps={eps0:.3e}, /2, /4: stagnation radius {:.4e}, {:.4e}, {:.4e}", radii[0], radii[1], radii[2]))
}

fn saddle_uniqueness() -> Outcome {
    let mut worst = 0.0f64;
    let mut ok = true;
    for (_, case) in fixtures() {
        let cfg = SolverConfig { max_iters: 1_000_000, sigma: 1e-13, sigma_z: 1e-11, ..config(0.05) };
        let problem = OpfProblem::new(case, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let finals: Vec<IterateState<f64>> = (0..5)
            .map(|_| {
                let init = problem.random_state(&mut rng, 2.0).unwrap();
                let r = solve_centralized(&problem, Some(init)).unwrap();
                ok &= r.status == Status::Converged;
                r.state
            })
            .collect();
        for s in &finals[1..] {
            worst = worst.max(s.max_abs_diff(&finals[0]));
        }
    }
    (ok && worst <= 1e-6, format!("5 fixtures x 5 initializations, max final-state gap {worst:.2e}"))
}

#[derive(Clone, Default)]
struct Buf(Arc<Mutex<Vec<u8>>>);

impl Write for Buf {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().write(b)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Every artifact of one hierarchical run, concatenated.
fn artifacts(schedule: Schedule, seed: u64) -> Vec<u8> {
    let case = synth::random_multiphase(120, seed);
    let problem = OpfProblem::new(case.clone(), SolverConfig { max_iters: 300, ..config(0.05) }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = problem.random_state(&mut rng, 1.0).unwrap();
    let part = recommended_partition(&case);
    let log = Buf::default();
    let opts = HierOptions { schedule, record_timing: true, zero_timing: true, log: Some(Box::new(log.clone())), ..HierOptions::default() };
    let out = run_hierarchical(&problem, &part, Some(init), opts).unwrap();
    let mut bytes = Vec::new();
    write_trajectory(&out.result.trajectory, &mut bytes).unwrap();
    write_json(&final_state_json(&case.feeder, &out.result.state), &mut bytes).unwrap();
    write_json(&Summary::new(&problem, &out.result, 0.0), &mut bytes).unwrap();
    write_timing(&out.stats.timing, &mut bytes).unwrap();
    bytes.extend(log.0.lock().unwrap().iter());
    bytes
}

fn determinism() -> Outcome {
    let a = artifacts(Schedule::Forward, 3);
    let b = artifacts(Schedule::Forward, 3);
    let repeat = a == b;
    let s1 = artifacts(Schedule::Shuffled(1), 3);
    let s2 = artifacts(Schedule::Parallel, 3);
    let schedules = a == s1 && a == s2;
    (repeat && schedules, format!("{} bytes of artifacts; repeat identical: {repeat}; shuffled and parallel schedules identical: {schedules}", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("engine equivalence", engine_equivalence),
        ("decomposition exactness", decomposition_exactness),
        ("block structure", block_structure),
        ("contraction", contraction),
        ("monotonicity and Lipschitz sampling", monotone_lipschitz),
        ("voltage regulation", voltage_regulation),
        ("complexity scaling", complexity_scaling),
        ("feedback-mode radius", feedback_radius),
        ("saddle uniqueness", saddle_uniqueness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!("{} criterion {}: {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
