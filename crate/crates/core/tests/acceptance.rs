//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use superiorization::convex_sets::{AffineGraphProjector, ConvexSet};
use superiorization::engines::{run_smp_basic, AlgorithmicOperator, RunConfig, StopRule, TraceLevel};
use superiorization::experiments::guarantee::{demo_guarantee_problem, GuaranteeConfig, MIN_NORM_POINT};
use superiorization::experiments::imrt::{run_exp3_seeds, ImrtAlgorithm, ImrtConfig, ImrtRunConfig};
use superiorization::experiments::montecarlo::{run_exp1_montecarlo, MonteCarloConfig};
use superiorization::experiments::smp_demo::{run_exp2, SmpDemoConfig, SOLUTION};
use superiorization::par::Execution;
use superiorization::schedules::{ScheduleConfig, StepSchedule};
use superiorization::targets::{Target, TvGrid};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn within(limit: Duration, start: Instant) -> Result<String, String> {
    let spent = start.elapsed();
    if spent <= limit {
        Ok(format!("{:.2}s", spent.as_secs_f64()))
    } else {
        Err(format!(
            "took {:.1}s, budget {:.0}s",
            spent.as_secs_f64(),
            limit.as_secs_f64()
        ))
    }
}

fn guarantee() -> Outcome {
    let clock = Instant::now();
    let run = |start: [f64; 2]| {
        demo_guarantee_problem(
            &GuaranteeConfig {
                start,
                ..Default::default()
            },
            TraceLevel::Full,
        )
        .unwrap()
    };
    let near = run([0.3, 0.0]);
    let first = near.basic.records[0].iterate.as_ref().unwrap();
    let basic_one_step = dist(first, &MIN_NORM_POINT);
    if basic_one_step > 1e-12 {
        return Err(format!(
            "basic AP after one iteration is {basic_one_step:e} from (1/2, 1/2)"
        ));
    }
    let sup_far = dist(&near.superiorized.final_iterate, &MIN_NORM_POINT);
    if !(sup_far > 0.05) {
        return Err(format!("superiorized from (3/10, 0) ends {sup_far} from (1/2, 1/2)"));
    }
    let far = run([1.1, 0.0]);
    let sup_near = dist(&far.superiorized.final_iterate, &MIN_NORM_POINT);
    let basic_off = dist(&far.basic.final_iterate, &MIN_NORM_POINT);
    if !(sup_near < 1e-6) || !(basic_off > 1e-6) {
        return Err(format!(
            "from (11/10, 0): superiorized {sup_near:e}, basic {basic_off:e}"
        ));
    }
    let t = within(Duration::from_secs(1), clock)?;
    Ok(format!(
        "sup from (3/10,0) stays {sup_far:.3} away; from (11/10,0) reaches {sup_near:.1e}; {t}"
    ))
}

fn summability() -> Outcome {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 0.9, 0.99] {
        for w in [1, 20, 50] {
            let mut s = ScheduleConfig::restarts(alpha, 1.0, w).build().unwrap();
            let bound = 1.0 / ((1.0 - alpha) * (1.0 - alpha));
            let mut sum = 0.0;
            for _ in 0..100_000 {
                sum += s.next_candidate();
                s.complete_outer_iteration();
            }
            if !(sum <= bound) {
                return Err(format!("alpha {alpha}, W {w}: sum {sum} exceeds {bound}"));
            }
            worst = worst.max(sum / bound);
        }
    }
    let t = within(Duration::from_secs(1), clock)?;
    Ok(format!("largest sum / bound = {worst:.4}; {t}"))
}

fn exp2() -> Outcome {
    let clock = Instant::now();
    let t = run_exp2(&SmpDemoConfig::default(), TraceLevel::Summary).map_err(|e| e.to_string())?;
    let z = &t.superiorized.final_iterate;
    let err = dist(&z[..2], &SOLUTION);
    if !(err < 1e-2) {
        return Err(format!("|x50 - (9,1)| = {err}"));
    }
    let a = t.problem.matrix();
    let ax = a * nalgebra::DVector::from_column_slice(&z[..2]);
    let graph_gap = dist(ax.as_slice(), &z[2..]);
    if !(graph_gap <= 1e-10) {
        return Err(format!("|A x50 - y50| = {graph_gap:e}"));
    }
    let basic_prox = t.basic.final_proximity();
    let (fb, fs) = (t.basic.final_iterate[1], z[1]);
    if !(basic_prox < 1e-6) || !(fb > fs) {
        return Err(format!("basic proximity {basic_prox:e}, f basic {fb} vs f sup {fs}"));
    }
    let time = within(Duration::from_secs(1), clock)?;
    Ok(format!(
        "|x50 - (9,1)| = {err:.2e}; f basic {fb} > f sup {fs:.4}; {time}"
    ))
}

fn monte_carlo() -> Outcome {
    let clock = Instant::now();
    let cfg = MonteCarloConfig {
        runs: 10_000,
        kernels: vec![0.5, 0.9],
        window: 20,
        ..Default::default()
    };
    let report = run_exp1_montecarlo(&cfg, Execution::Parallel).map_err(|e| e.to_string())?;
    let (r05, r09) = (&report.rows[0], &report.rows[1]);
    let res_worse = r09.sup_vs_sup_res.first_wins;
    let ap_beats = r05.ap_vs_sup.first_wins;
    let sup_beats = r05.ap_vs_sup.second_wins;
    let summary = format!(
        "(a) Sup.Res worse at 0.9: {res_worse:.2}% [<= 0.05]; (b) AP beats Sup at 0.5: {ap_beats:.2}% \
         [1.29 +- 0.5]; (c) Sup beats AP at 0.5: {sup_beats:.2}% [56.17 +- 2]"
    );
    let ok = res_worse <= 0.05 && (ap_beats - 1.29).abs() <= 0.5 && (sup_beats - 56.17).abs() <= 2.0;
    let time = within(Duration::from_secs(120), clock);
    match (ok, time) {
        (true, Ok(t)) => Ok(format!("{summary}; {t}")),
        (_, Ok(t)) => Err(format!("{summary}; {t}")),
        (_, Err(t)) => Err(format!("{summary}; {t}")),
    }
}

fn imrt() -> Outcome {
    let clock = Instant::now();
    let seeds = [0, 1, 2, 3, 4];
    let results = run_exp3_seeds(
        &ImrtConfig::desk(),
        &seeds,
        &ImrtRunConfig::default(),
        Execution::Parallel,
    );
    let mut ordered = 0;
    let mut problems = Vec::new();
    let mut lines = Vec::new();
    for (seed, result) in seeds.iter().zip(results) {
        let (instance, run) = result.map_err(|e| format!("seed {seed}: {e}"))?;
        let get = |a| run.outcome(a).unwrap();
        let (basic, sup, res) = (
            get(ImrtAlgorithm::Basic),
            get(ImrtAlgorithm::Superiorized),
            get(ImrtAlgorithm::Restarts),
        );
        for o in [basic, sup, res] {
            // Recheck the proximity independently of the engine's record.
            let problem = instance.split_problem().unwrap();
            let z = &o.trace.final_iterate;
            let prox = superiorization::engines::proximity(&problem, &z[..instance.beamlets], &z[instance.beamlets..])
                .unwrap();
            if !o.converged() || !(prox < 0.01) {
                problems.push(format!("seed {seed} {} ended at proximity {prox}", o.algorithm.name()));
            }
        }
        let strict = (0..instance.tumors.len()).all(|l| res.tv[l] < sup.tv[l] && sup.tv[l] < basic.tv[l]);
        ordered += usize::from(strict);
        for l in 0..instance.tumors.len() {
            if !(res.tv[l] < 0.5 * basic.tv[l]) {
                problems.push(format!(
                    "seed {seed} tumor {l}: restarts {} vs basic {}",
                    res.tv[l], basic.tv[l]
                ));
            }
        }
        lines.push(format!(
            "seed {seed}: TV basic {:.1?} sup {:.1?} res {:.1?}",
            basic.tv, sup.tv, res.tv
        ));
    }
    if ordered < 4 {
        problems.push(format!("strict ordering res < sup < basic on {ordered}/5 seeds"));
    }
    if let Err(t) = within(Duration::from_secs(300), clock) {
        problems.push(t);
    }
    let detail = lines.join("; ");
    if problems.is_empty() {
        Ok(format!("ordering on {ordered}/5 seeds; {detail}"))
    } else {
        Err(format!("{}; {detail}", problems.join("; ")))
    }
}

fn invariants() -> Outcome {
    let clock = Instant::now();
    let mut r = rng(6);
    let mut cases = 0;
    for (name, make) in SET_KINDS {
        for _ in 0..1000 {
            let d = r.gen_range_usize(if name == "affine_graph" { 2 } else { 1 }, 10);
            let set = make(&mut r, d);
            let (x, y, w) = (
                uniform_vec(&mut r, d, 10.0),
                uniform_vec(&mut r, d, 10.0),
                uniform_vec(&mut r, d, 10.0),
            );
            check_projection(&set, &x, &y, &w).map_err(|e| format!("{name}: {e}"))?;
            cases += 1;
        }
    }
    for _ in 0..1000 {
        let d = r.gen_range_usize(1, 9);
        let x = uniform_vec(&mut r, d, 10.0);
        let coeffs = uniform_vec(&mut r, d, 1.0);
        let side = r.gen_range_usize(2, 7);
        let z: Vec<f64> = uniform_vec(&mut r, side * side, 20.0)
            .iter()
            .map(|v| v + 20.0)
            .collect();
        for (t, p) in [
            (Target::SquaredNorm { half: true }, &x),
            (Target::Linear(coeffs), &x),
            (Target::NegatedCoordinate { index: 0, dim: d }, &x),
            (Target::TotalVariation(TvGrid::square(side)), &z),
        ] {
            check_direction(&t, p).map_err(|e| format!("direction: {e}"))?;
        }
        cases += 4;
    }
    let mut worst_fd: f64 = 0.0;
    let mut fd_cases = 0;
    while fd_cases < 1000 {
        let side = r.gen_range_usize(2, 7);
        let z: Vec<f64> = uniform_vec(&mut r, side * side, 20.0)
            .iter()
            .map(|v| v + 20.0)
            .collect();
        if min_tv_term(side, &z) <= 0.05 {
            continue;
        }
        let err = gradient_relative_error(&Target::TotalVariation(TvGrid::square(side)), &z, 1e-6);
        worst_fd = worst_fd.max(err);
        fd_cases += 1;
    }
    if !(worst_fd < 1e-5) {
        return Err(format!("TV finite-difference relative error {worst_fd:e}"));
    }
    for _ in 0..200 {
        let op = AlgorithmicOperator::alternating(vec![random_halfspace(&mut r, 3), random_ball(&mut r, 3)]).unwrap();
        let alpha = 0.05 + 0.9 * r.unit();
        let window = r.gen_range_usize(1, 30) as u64;
        let cfg = RunConfig::superiorized(ScheduleConfig::restarts(alpha, 1.0, window), 2, StopRule::fixed(30))
            .with_trace(TraceLevel::Full);
        check_zero_target_bisimulation(&op, &uniform_vec(&mut r, 3, 5.0), &cfg)?;
    }
    let mut worst_pv: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.gen_range_usize(1, 11);
        let m = r.gen_range_usize(1, 21 - n);
        let a = random_matrix(&mut r, m, n);
        let z = uniform_vec(&mut r, n + m, 10.0);
        let set: ConvexSet = AffineGraphProjector::new(a.clone()).unwrap().into();
        let gap = dist(&project(&set, &z), &graph_projection_oracle(&a, &z));
        worst_pv = worst_pv.max(gap / (1.0 + norm(&z)));
    }
    if !(worst_pv <= 1e-9) {
        return Err(format!("P_V differs from the QR oracle by {worst_pv:e}"));
    }
    // Split-problem runs must keep y = A x after every outer step.
    let problem = superiorization::experiments::smp_demo::smp_demo_problem(None).unwrap();
    let basic = run_smp_basic(
        &problem,
        &[7.0, 5.0],
        &RunConfig::basic(StopRule::fixed(20)).with_trace(TraceLevel::Full),
    )
    .unwrap();
    for rec in &basic.records {
        let z = rec.iterate.as_ref().unwrap();
        if (z[2] + z[1]).abs() > 1e-10 || (z[3] - z[0]).abs() > 1e-10 {
            return Err(format!("split iterate off the graph: {z:?}"));
        }
    }
    let t = within(Duration::from_secs(30), clock)?;
    Ok(format!(
        "{cases} projection/direction cases, TV gradient error {worst_fd:.1e}, P_V oracle gap {worst_pv:.1e}; {t}"
    ))
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_superiorize"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p.to_string_lossy().into_owned()
    };
    let mc = write("mc.json", r#"{"runs": 300}"#);
    let problem = write(
        "problem.json",
        r#"{"problem": {"kind": "feasibility",
              "sets": [{"kind": "ball", "center": [2, 0.5], "radius": 1.5},
                       {"kind": "ball", "center": [0.5, 2], "radius": 1.5}],
              "target": {"kind": "squared_norm"}},
            "start": [3, 3.5],
            "algorithms": [{"name": "ap"}, {"name": "sup", "schedule": {"alpha": 0.6, "window": 50}}],
            "stop": {"max_iterations": 500, "proximity_threshold": null}}"#,
    );
    let gen_dir = dir.join("gen-a");
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("demo-guarantee", vec!["demo-guarantee", "--trace", "full"]),
        ("exp1-balls", vec!["exp1-balls"]),
        ("exp1-mc", vec!["exp1-mc", "--config", &mc, "--seed", "3"]),
        ("exp2", vec!["exp2", "--format", "json"]),
        ("exp3-gen", vec!["exp3-gen", "--seed", "1"]),
        ("exp3-run", vec!["exp3-run", "--instance", gen_dir.to_str().unwrap()]),
        ("run", vec!["run", &problem]),
    ];
    for (name, args) in &commands {
        let (a, b) = (dir.join(format!("{name}-a")), dir.join(format!("{name}-b")));
        let (a, b) = if *name == "exp3-gen" {
            (gen_dir.clone(), dir.join("gen-b"))
        } else {
            (a, b)
        };
        run_cli(args, &a)?;
        run_cli(args, &b)?;
        let (ra, rb) = (
            std::fs::read(a.join("report.json")),
            std::fs::read(b.join("report.json")),
        );
        match (ra, rb) {
            (Ok(ra), Ok(rb)) if ra == rb => {}
            _ => return Err(format!("{name}: report.json differs between runs")),
        }
    }
    Ok(format!(
        "{} subcommands produce byte-identical report.json",
        commands.len()
    ))
}

trait Draw {
    fn gen_range_usize(&mut self, lo: usize, hi: usize) -> usize;
    fn unit(&mut self) -> f64;
}

impl Draw for rand_chacha::ChaCha8Rng {
    fn gen_range_usize(&mut self, lo: usize, hi: usize) -> usize {
        rand::Rng::gen_range(self, lo..hi)
    }

    fn unit(&mut self) -> f64 {
        rand::Rng::gen(self)
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("guarantee problem", guarantee),
        ("restart summability", summability),
        ("split minimization demo", exp2),
        ("Monte Carlo win rates", monte_carlo),
        ("IMRT property suite", imrt),
        ("invariant suites", invariants),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
