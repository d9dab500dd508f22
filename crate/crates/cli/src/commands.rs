use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use voltreg::clustering::{
    auto_partition, centralized_op_count, model_op_count_sizes, recommend_k, validate_partition, OpCount, Partition,
};
use voltreg::feeder::io::{case_to_json, load_case, partition_from_json, partition_to_json};
use voltreg::hierarchical::{run_hierarchical, HierOptions, HierarchicalEngine, Schedule};
use voltreg::opf::{solve_centralized, CentralEngine, Engine, Mode, OpfProblem, SolveResult, SolverConfig, Status, VoltageLimits};
use voltreg::powerflow::nonlinear_solve;
use voltreg::report::{final_state_json, write_json, write_timing, write_trajectory, Summary};
use voltreg::{lemma3_check, synth, Case64, SensitivityPack};

use crate::{BenchArgs, ClusterArgs, CompareArgs, EngineKind, Family, Fixture, GenArgs, ModeArg, SolveArgs, SolverArgs};

fn config(a: &SolverArgs) -> Result<SolverConfig<f64>> {
    let cfg = SolverConfig {
        eps: a.eps,
        dual_mult: a.eps_dual_mult,
        eta: a.eta,
        limits: VoltageLimits::from_magnitudes(a.vmin, a.vmax),
        max_iters: a.max_iters,
        sigma: a.sigma,
        mode: match a.mode {
            ModeArg::Linear => Mode::Linear,
            ModeArg::Feedback => Mode::Feedback,
        },
        ..SolverConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn resolve_partition(case: &Case64, spec: Option<&str>) -> Result<Partition> {
    let feeder = &case.feeder;
    match spec {
        Some(s) => {
            if let Some(path) = s.strip_prefix("file:") {
                let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                Ok(partition_from_json(feeder, &text)?)
            } else if let Some(k) = s.strip_prefix("auto:") {
                let k: usize = k.parse().with_context(|| format!("bad subtree count {k:?}"))?;
                Ok(auto_partition(feeder, k)?)
            } else {
                bail!("partition must be file:<path> or auto:<k>, got {s:?}")
            }
        }
        None => match &case.clusters {
            Some(p) => Ok(p.clone()),
            None => {
                let leaves = (1..feeder.num_nodes()).filter(|&i| feeder.children(i).is_empty()).count();
                Ok(auto_partition(feeder, recommend_k(feeder.num_nodes() - 1).min(leaves).max(1))?)
            }
        },
    }
}

fn exit_for(status: Status) -> ExitCode {
    match status {
        Status::Converged => ExitCode::SUCCESS,
        Status::MaxIters | Status::Diverged => ExitCode::from(2),
    }
}

fn write_outputs(dir: &Path, problem: &OpfProblem<f64>, res: &SolveResult<f64>, wall: f64) -> Result<Summary> {
    write_trajectory(&res.trajectory, create(dir, "trajectory.csv")?)?;
    write_json(&final_state_json(&problem.case.feeder, &res.state), create(dir, "final_state.json")?)?;
    let summary = Summary::new(problem, res, wall);
    write_json(&summary, create(dir, "summary.json")?)?;
    Ok(summary)
}

pub fn solve(a: &SolveArgs) -> Result<ExitCode> {
    let case: Case64 = load_case(&a.feeder)?;
    let cfg = config(&a.solver)?;
    let problem = OpfProblem::new(case.clone(), cfg)?;
    let init = match a.seed {
        Some(s) => problem.random_state(&mut ChaCha8Rng::seed_from_u64(s), 1.0)?,
        None => problem.initial_state()?,
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let start = Instant::now();
    let res = match a.engine {
        EngineKind::Central => solve_centralized(&problem, Some(init))?,
        EngineKind::Hier => {
            let part = resolve_partition(&case, a.partition.as_deref())?;
            let log: Option<Box<dyn Write + Send>> =
                if a.log_messages { Some(Box::new(create(&a.out, "messages.jsonl")?)) } else { None };
            let opts = HierOptions { record_timing: true, zero_timing: a.solver.no_timing, log, ..HierOptions::default() };
            let out = run_hierarchical(&problem, &part, Some(init), opts)?;
            write_timing(&out.stats.timing, create(&a.out, "timing.csv")?)?;
            out.result
        }
    };
    let wall = if a.solver.no_timing { 0.0 } else { start.elapsed().as_secs_f64() };
    for w in &res.warnings {
        eprintln!("warning: {}", serde_json::to_string(w)?);
    }
    if a.dump_flows {
        let (_, flows) = nonlinear_solve(&case.feeder, &res.state.p, &res.state.q)?;
        flows.write_csv(&case.feeder, create(&a.out, "flows.csv")?)?;
    }
    let summary = write_outputs(&a.out, &problem, &res, wall)?;
    println!(
        "{:?} after {} iterations, cost {:.10}, max violation {:.3e}",
        res.status, summary.iters, summary.final_cost, summary.max_violation
    );
    Ok(exit_for(res.status))
}

pub fn cluster(a: &ClusterArgs) -> Result<ExitCode> {
    let case: Case64 = load_case(&a.feeder)?;
    let part = resolve_partition(&case, a.partition.as_deref())?;
    let report = validate_partition(&case.feeder, &part);
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("partition.json"), partition_to_json(&case.feeder, &part)? + "\n")?;
    let pack = SensitivityPack::build(&case.feeder);
    let block = lemma3_check(&pack, &part);
    let ids = |v: &[usize]| v.iter().map(|&i| case.feeder.node(i).id.clone()).collect::<Vec<_>>();
    let sizes: Vec<usize> = part.subtrees.iter().map(|s| s.members.len()).collect();
    let model = model_op_count_sizes(&sizes);
    let out = json!({
        "k": part.k(),
        "unclustered": part.unclustered.len(),
        "valid": report.is_ok(),
        "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "reduced_nodes": report.reduced.as_ref().map(|r| ids(&r.nodes)),
        "block_structure": { "checked": block.checked, "violations": block.violation_count },
        "model_ops": model.total().total(),
        "central_ops": centralized_op_count(case.feeder.index().len()).total(),
    });
    write_json(&out, create(&a.out, "cluster.json")?)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if report.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn k_values(tokens: &[String], n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for t in tokens {
        let k = match t.as_str() {
            "rec" => recommend_k(n),
            "quarter" => (n / 4).max(1),
            s => s.parse().with_context(|| format!("bad subtree count {s:?}"))?,
        };
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

/// Mean seconds per step of an engine.
fn time_steps<E: Engine<f64>>(engine: &mut E, iters: usize) -> Result<f64> {
    let start = Instant::now();
    for _ in 0..iters {
        engine.step()?;
    }
    Ok(start.elapsed().as_secs_f64() / iters.max(1) as f64)
}

pub fn benchmark(a: &BenchArgs) -> Result<ExitCode> {
    fs::create_dir_all(&a.out)?;
    let mut w = create(&a.out, "benchmark.csv")?;
    writeln!(
        w,
        "N,K,model_ops,measured_ops,central_ops,per_iter_wallclock_central,per_iter_wallclock_hier,per_iter_wallclock_hier_parallel"
    )?;
    let cfg = SolverConfig { check_stepsize: false, ..SolverConfig::default() };
    for &n in &a.sizes {
        let dary = synth::balanced_dary(n + 1, a.branching, a.seed);
        for k in k_values(&a.k, n)? {
            let (case, part) = match a.family {
                Family::Dary => match auto_partition(&dary.feeder, k) {
                    Ok(p) => (dary.clone(), p),
                    Err(e) => {
                        eprintln!("skipping N={n} K={k}: {e}");
                        continue;
                    }
                },
                Family::Laterals => synth::laterals(n, k, a.branching, a.seed),
            };
            let problem = OpfProblem::new(case, cfg.clone())?;
            let init = problem.initial_state()?;
            let sizes: Vec<usize> = part.subtrees.iter().map(|s| s.members.len()).collect();
            let mut model = model_op_count_sizes(&sizes);
            // unclustered nodes join the CC's reduced network
            let m = (part.k() + part.unclustered.len()) as u64;
            model.cc = OpCount::new(m * m, m * m.saturating_sub(1));
            let model = model.total().total();

            let mut central = CentralEngine::new(&problem, init.clone());
            let t_central = time_steps(&mut central, a.iters)?;
            let central_ops = central.ops().total() / a.iters.max(1) as u64;

            let mut hier = HierarchicalEngine::new(&problem, &part, init.clone(), HierOptions::default())?;
            let t_hier = time_steps(&mut hier, a.iters)?;
            let measured = hier.stats().last_iter_ops.total().total();
            let par = HierOptions { schedule: Schedule::Parallel, ..HierOptions::default() };
            let mut hier_par = HierarchicalEngine::new(&problem, &part, init, par)?;
            let t_par = time_steps(&mut hier_par, a.iters)?;

            let t = |x: f64| if a.no_timing { 0.0 } else { x };
            writeln!(
                w,
                "{n},{},{model},{measured},{central_ops},{:.6e},{:.6e},{:.6e}",
                part.k(),
                t(t_central),
                t(t_hier),
                t(t_par)
            )?;
            println!("N={n} K={} measured {measured} central {central_ops}", part.k());
        }
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn compare(a: &CompareArgs) -> Result<ExitCode> {
    let case: Case64 = match &a.feeder {
        Some(p) => load_case(p)?,
        None => synth::tri2_extended(),
    };
    let mut cfg = config(&a.solver)?;
    cfg.mode = Mode::Feedback;
    cfg.check_stepsize = false;
    let full = OpfProblem::new(case.clone(), cfg.clone())?;
    let diag_pack = full.pack.diagonal_phases_only();
    let diag = OpfProblem::with_pack(case.clone(), diag_pack, cfg)?;
    fs::create_dir_all(&a.out)?;
    let mut report = serde_json::Map::new();
    let mut series = Vec::new();
    let mut worst = ExitCode::SUCCESS;
    for (name, problem) in [("multi_phase", &full), ("single_phase", &diag)] {
        let res = solve_centralized(problem, None)?;
        if res.status != Status::Converged {
            worst = ExitCode::from(2);
        }
        let summary = Summary::new(problem, &res, 0.0);
        report.insert(
            name.into(),
            json!({
                "status": res.status,
                "iters": summary.iters,
                "cost": summary.final_cost,
                "max_violation": summary.max_violation,
            }),
        );
        series.push(res.trajectory.iter().map(|r| r.p0).collect::<Vec<_>>());
        write_trajectory(&res.trajectory, create(&a.out, &format!("trajectory_{name}.csv"))?)?;
    }
    let mut w = create(&a.out, "p0_series.csv")?;
    writeln!(w, "iter,multi_phase,single_phase")?;
    for i in 0..series[0].len().max(series[1].len()) {
        let cell = |s: &Vec<f64>| s.get(i).map_or(String::new(), |x| format!("{x:.17e}"));
        writeln!(w, "{},{},{}", i + 1, cell(&series[0]), cell(&series[1]))?;
    }
    w.flush()?;
    let report = serde_json::Value::Object(report);
    write_json(&report, create(&a.out, "compare.json")?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(worst)
}

pub fn gen(a: &GenArgs) -> Result<ExitCode> {
    let n = a.nodes.max(2);
    let case = match a.fixture {
        Fixture::Line3 => synth::line3(),
        Fixture::Tri2 => synth::tri2(),
        Fixture::Star8 => synth::star8(),
        Fixture::Binary63 => synth::binary63(),
        Fixture::Tri2Extended => synth::tri2_extended(),
        Fixture::Dary => synth::balanced_dary(n, a.branching, a.seed),
        Fixture::Multiphase => synth::random_multiphase(n, a.seed),
        Fixture::Laterals => {
            let k = a.k.unwrap_or_else(|| recommend_k(n - 1));
            let (mut case, part) = synth::laterals(n - 1, k, a.branching, a.seed);
            case.clusters = Some(part);
            case
        }
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, case_to_json(&case)? + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    Ok(ExitCode::SUCCESS)
}
