mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voltreg::clustering::{auto_partition, validate_partition};
use voltreg::feeder::io::{case_to_json, parse_case, partition_from_json, partition_to_json};
use voltreg::hierarchical::{HierOptions, HierarchicalEngine};
use voltreg::opf::{estimate_constants, project_feasible, Engine};
use voltreg::powerflow::{distflow_sweep, linear_voltages, nonlinear_solve};
use voltreg::sensitivity::common_path_impedance;
use voltreg::{lemma3_check, synth, Case64, FeasibleSet, SensitivityPack};

fn feasible_set() -> impl Strategy<Value = FeasibleSet<f64>> {
    prop_oneof![
        (-1.0..0.5f64, 0.0..1.0f64, -1.0..0.5f64, 0.0..1.0f64).prop_map(|(a, w, c, h)| FeasibleSet::Box {
            p_min: a,
            p_max: a + w,
            q_min: c,
            q_max: c + h
        }),
        (0.0..1.0f64, 0.05..1.0f64).prop_map(|(p, r)| FeasibleSet::PvInverter { p_av: p, eta_cap: r }),
        (0.05..1.0f64, -0.9..0.9f64, 0.0..1.0f64).prop_map(|(r, a, w)| {
            let lo = a * r;
            FeasibleSet::Storage { p_min: lo, p_max: (lo + w).min(r), eta_cap: r }
        }),
    ]
}

fn tree_case() -> impl Strategy<Value = Case64> {
    prop_oneof![
        (5usize..60, 2usize..4, any::<u64>()).prop_map(|(n, d, s)| synth::balanced_dary(n, d, s)),
        (4usize..40, any::<u64>()).prop_map(|(n, s)| synth::random_multiphase(n, s)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn projection_is_nearest_feasible_point(set in feasible_set(), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let (p, q) = project_feasible(&set, x, y);
        prop_assert!(set.contains(p, q, 1e-12));
        let d = ((p - x).powi(2) + (q - y).powi(2)).sqrt();
        // no sampled feasible point is closer
        let mut rng = ChaCha8Rng::seed_from_u64(x.to_bits() ^ y.to_bits());
        let (lo, hi, r) = set.p_interval_and_radius();
        let (qlo, qhi) = match set {
            FeasibleSet::Box { q_min, q_max, .. } => (q_min, q_max),
            _ => (-r.unwrap(), r.unwrap()),
        };
        for _ in 0..2000 {
            let a = lo + rng.gen::<f64>() * (hi - lo);
            let b = qlo + rng.gen::<f64>() * (qhi - qlo);
            if set.contains(a, b, 0.0) {
                prop_assert!(((a - x).powi(2) + (b - y).powi(2)).sqrt() >= d - 1e-12);
            }
        }
        // idempotent and nonexpansive
        let (pp, qq) = project_feasible(&set, p, q);
        prop_assert!((pp - p).abs() <= 1e-15 && (qq - q).abs() <= 1e-15);
        let (p2, q2) = project_feasible(&set, x + 0.1, y - 0.05);
        prop_assert!(((p2 - p).powi(2) + (q2 - q).powi(2)).sqrt() <= (0.1f64.powi(2) + 0.05f64.powi(2)).sqrt() + 1e-12);
    }

    #[test]
    fn paths_and_symmetry(case in tree_case()) {
        let f = &case.feeder;
        for i in 1..f.num_nodes() {
            let path = f.path_to_root(i).unwrap();
            prop_assert_eq!(path.len(), f.depth(i));
            prop_assert_eq!(f.lines()[path[0]].from, 0);
            prop_assert_eq!(f.lines()[*path.last().unwrap()].to, i);
        }
        for i in 1..f.num_nodes().min(12) {
            for j in 1..f.num_nodes().min(12) {
                prop_assert_eq!(common_path_impedance(f, i, j).unwrap(), common_path_impedance(f, j, i).unwrap());
            }
        }
        if f.single_phase().is_some() {
            let pack = SensitivityPack::build_single_phase(f).unwrap();
            let multi = SensitivityPack::build_multi_phase(f);
            for a in 0..pack.dim() {
                for b in 0..pack.dim() {
                    prop_assert_eq!(pack.r(a, b), pack.r(b, a));
                    prop_assert_eq!(pack.x(a, b), pack.x(b, a));
                    prop_assert_eq!(pack.r(a, b), multi.r(a, b));
                    prop_assert_eq!(pack.x(a, b), multi.x(a, b));
                }
            }
        }
    }

    #[test]
    fn block_structure_on_auto_partitions(case in tree_case(), k in 1usize..6) {
        let pack = SensitivityPack::build(&case.feeder);
        if let Ok(part) = auto_partition(&case.feeder, k) {
            prop_assert!(validate_partition(&case.feeder, &part).is_ok());
            let report = lemma3_check(&pack, &part);
            prop_assert!(report.ok(), "{:?}", report.violations);
            // shared paths across subtrees reduce to the roots' shared path
            let owner = part.owner(case.feeder.num_nodes());
            for i in 1..case.feeder.num_nodes() {
                for j in 1..case.feeder.num_nodes() {
                    if let (Some(h), Some(g)) = (owner[i], owner[j]) {
                        if h != g {
                            let (ri, rj) = (part.subtrees[h].root, part.subtrees[g].root);
                            prop_assert_eq!(
                                common_path_impedance(&case.feeder, i, j).unwrap(),
                                common_path_impedance(&case.feeder, ri, rj).unwrap()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn json_round_trip(generated in tree_case(), k in 1usize..4) {
        // loading re-indexes breadth-first, so compare loaded cases
        let case: Case64 = parse_case(&case_to_json(&generated).unwrap()).unwrap();
        let text = case_to_json(&case).unwrap();
        let back: Case64 = parse_case(&text).unwrap();
        prop_assert_eq!(&back.feeder, &case.feeder);
        prop_assert_eq!(back.devices.len(), case.devices.len());
        for (a, b) in back.devices.iter().zip(&case.devices) {
            prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        }
        prop_assert_eq!(back.substation, case.substation);
        if let Ok(part) = auto_partition(&case.feeder, k) {
            let pt = partition_to_json(&case.feeder, &part).unwrap();
            prop_assert_eq!(partition_from_json(&case.feeder, &pt).unwrap(), part);
        }
    }

    #[test]
    fn decomposition_is_exact(case in tree_case(), k in 1usize..6, seed in any::<u64>()) {
        let problem = common::problem(&case, 1e-3);
        let Ok(part) = auto_partition(&case.feeder, k) else { return Ok(()) };
        let mut e = HierarchicalEngine::new(&problem, &part, problem.initial_state().unwrap(), HierOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let d: Vec<f64> = (0..problem.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = e.probe_coupling(&d).unwrap();
            let (ra, rb) = problem.pack.transpose_apply(&d).unwrap();
            for k in 0..d.len() {
                prop_assert!((a[k] - ra[k]).abs() <= 1e-10);
                prop_assert!((b[k] - rb[k]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn operator_is_monotone_and_lipschitz(case in tree_case(), seed in any::<u64>()) {
        let problem = common::problem(&case, 1e-3);
        let c = estimate_constants(&problem).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let z1 = problem.random_state(&mut rng, 1.0).unwrap();
            let z2 = problem.random_state(&mut rng, 1.0).unwrap();
            let t1 = problem.gradient(&z1).unwrap().flat();
            let t2 = problem.gradient(&z2).unwrap().flat();
            let dz: Vec<f64> = z1.z().iter().zip(z2.z()).map(|(a, b)| a - b).collect();
            let dt: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a - b).collect();
            let inner: f64 = dz.iter().zip(&dt).map(|(a, b)| a * b).sum();
            let nz = dz.iter().map(|x| x * x).sum::<f64>();
            prop_assert!(inner >= c.m * nz - 1e-12);
            prop_assert!(dt.iter().map(|x| x * x).sum::<f64>().sqrt() <= c.l * nz.sqrt() + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), n in 4usize..25) {
        let case = synth::random_multiphase(n, seed);
        let problem = common::problem(&case, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = problem.random_state(&mut rng, 1.0).unwrap();
        let g = problem.gradient(&s).unwrap();
        let h = 1e-6;
        let lag = |p: &[f64], q: &[f64], lo: &[f64], hi: &[f64]| {
            let st = problem.state(p.to_vec(), q.to_vec(), lo.to_vec(), hi.to_vec()).unwrap();
            problem.lagrangian(&st)
        };
        for k in 0..problem.dim() {
            if problem.device(k).is_none() {
                continue;
            }
            let (mut pp, mut pm) = (s.p.clone(), s.p.clone());
            pp[k] += h;
            pm[k] -= h;
            let fd = (lag(&pp, &s.q, &s.mu_lo, &s.mu_hi) - lag(&pm, &s.q, &s.mu_lo, &s.mu_hi)) / (2.0 * h);
            prop_assert!((fd - g.p[k]).abs() <= 1e-6 * (1.0 + g.p[k].abs()), "p {k}: {fd} vs {}", g.p[k]);
            let (mut qp, mut qm) = (s.q.clone(), s.q.clone());
            qp[k] += h;
            qm[k] -= h;
            let fd = (lag(&s.p, &qp, &s.mu_lo, &s.mu_hi) - lag(&s.p, &qm, &s.mu_lo, &s.mu_hi)) / (2.0 * h);
            prop_assert!((fd - g.q[k]).abs() <= 1e-6 * (1.0 + g.q[k].abs()), "q {k}: {fd} vs {}", g.q[k]);
        }
        // dual blocks are minus the ascent direction
        let k = rng.gen_range(0..problem.dim());
        let (mut hp, mut hm) = (s.mu_hi.clone(), s.mu_hi.clone());
        hp[k] += h;
        hm[k] -= h;
        let fd = (lag(&s.p, &s.q, &s.mu_lo, &hp) - lag(&s.p, &s.q, &s.mu_lo, &hm)) / (2.0 * h);
        prop_assert!((fd + g.mu_hi[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn sweep_balances_power(n in 3usize..40, d in 1usize..4, seed in any::<u64>(), scale in 0.05..0.5f64) {
        let case = synth::balanced_dary(n, d, seed);
        let f = &case.feeder;
        let m = f.index().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..m).map(|_| -scale * rng.gen_range(0.0..2.0) / n as f64).collect();
        let q: Vec<f64> = (0..m).map(|_| -scale * rng.gen_range(0.0..1.0) / n as f64).collect();
        let pack = SensitivityPack::build(f);
        let lin = linear_voltages(&pack, &p, &q, &f.v_tilde()).unwrap();
        // stay away from voltage collapse
        prop_assume!(lin.iter().all(|&v| v > 0.85));
        let (st, flows) = distflow_sweep(f, &p, &q, true).unwrap();
        // the sending-end flow of each line covers its child's injection, the
        // child's outgoing flows and the line's own loss
        for (li, line) in f.lines().iter().enumerate() {
            let fl = flows.flows.iter().find(|b| b.line == li).unwrap();
            let i = line.to;
            let out_p: f64 = f.children(i).iter().map(|&c| flows.flows.iter().find(|b| b.line == f.parent_line_index(c).unwrap()).unwrap().p).sum();
            let out_q: f64 = f.children(i).iter().map(|&c| flows.flows.iter().find(|b| b.line == f.parent_line_index(c).unwrap()).unwrap().q).sum();
            let z = line.z.0[0][0];
            prop_assert!((fl.p - (-p[i - 1] + out_p + z.re * fl.ell)).abs() < 1e-9);
            prop_assert!((fl.q - (-q[i - 1] + out_q + z.im * fl.ell)).abs() < 1e-9);
            let v_from = if line.from == 0 { 1.0 } else { st.v[line.from - 1] };
            prop_assert!((fl.ell * v_from - fl.p * fl.p - fl.q * fl.q).abs() < 1e-9);
        }
        let (lossless, _) = distflow_sweep(f, &p, &q, false).unwrap();
        for (a, b) in lossless.v.iter().zip(&lin) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn finite_difference_voltages_track_sensitivities() {
    let case = synth::random_multiphase(12, 3);
    let f = &case.feeder;
    let m = f.index().len();
    let pack = SensitivityPack::build(f);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p: Vec<f64> = (0..m).map(|_| -rng.gen_range(0.0..0.05)).collect();
    let q: Vec<f64> = (0..m).map(|_| -rng.gen_range(0.0..0.02)).collect();
    let (base, _) = nonlinear_solve(f, &p, &q).unwrap();
    let delta = 1e-5;
    for j in 0..m {
        let mut pj = p.clone();
        pj[j] += delta;
        let (st, _) = nonlinear_solve(f, &pj, &q).unwrap();
        let fd: Vec<f64> = st.v.iter().zip(&base.v).map(|(a, b)| (a - b) / delta).collect();
        let col: Vec<f64> = (0..m).map(|i| pack.r(i, j)).collect();
        let err = fd.iter().zip(&col).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(err <= 0.05 * norm, "column {j}: relative error {}", err / norm);
    }
}

#[test]
fn information_hiding() {
    let case = synth::random_multiphase(80, 2);
    let problem = common::problem(&case, 1e-3);
    let part = auto_partition(&case.feeder, 4).unwrap();
    let mut e = HierarchicalEngine::new(&problem, &part, problem.initial_state().unwrap(), HierOptions::default()).unwrap();
    let owner = part.owner(case.feeder.num_nodes());
    let roots: Vec<usize> = part.subtrees.iter().map(|s| s.root).collect();
    // the CC table holds no subtree member except the roots
    for c in e.cc_table().coords() {
        assert!(owner[c.node].is_none() || roots.contains(&c.node));
    }
    for (k, t) in e.rc_tables().iter().enumerate() {
        assert!(t.coords().iter().all(|c| owner[c.node] == Some(k)));
    }
    let before: Vec<u64> = e.rc_tables().iter().map(|t| t.reads()).collect();
    let cc_before = e.cc_table().reads();
    e.step().unwrap();
    for (t, b) in e.rc_tables().iter().zip(before) {
        assert_eq!(t.reads() - b, (t.len() * t.len()) as u64);
    }
    let m = e.cc_table().len();
    assert_eq!(e.cc_table().reads() - cc_before, (m * m) as u64);
}
