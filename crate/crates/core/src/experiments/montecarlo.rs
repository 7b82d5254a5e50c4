//! Random half-space pairs: alternating projections against the superiorized
//! versions with and without restarts, for several kernels.
//!
//! Draw order per run (stream = run index): `c_A` (two uniforms in [-1, 1],
//! then normalized), `b_A` in (-1, 0), `c_B`, `b_B`, then starting points in
//! [-1, 1]^2 until one lies outside `A ∩ B`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex_sets::{ConvexSet, HalfSpace};
use crate::engines::{
    run_basic, run_superiorized, run_superiorized_restarts, AlgorithmicOperator, RunConfig, StopRule, Termination,
};
use crate::error::Result;
use crate::par::{map_indexed, Execution};
use crate::schedules::ScheduleConfig;
use crate::targets::{BlockTargets, Target};

use super::{euclid, stream_rng};

/// A method wins when its final norm is below the other's minus this margin.
pub const WIN_MARGIN: f64 = 1e-3;
const START_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub kernels: Vec<f64>,
    pub window: u64,
    pub perturbations: usize,
    /// Cap on outer iterations per method and run. Runs normally stop once
    /// feasible with every remaining step below `negligible_step`.
    pub max_iterations: usize,
    pub feasibility: f64,
    pub negligible_step: f64,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            runs: 10_000,
            kernels: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            window: 20,
            perturbations: 1,
            max_iterations: 100_000,
            feasibility: 1e-10,
            negligible_step: 1e-12,
            seed: 0,
        }
    }
}

/// Win percentages for one pair of methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRates {
    pub first_wins: f64,
    pub second_wins: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub alpha: f64,
    pub ap_vs_sup: PairwiseRates,
    pub ap_vs_sup_res: PairwiseRates,
    pub sup_vs_sup_res: PairwiseRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub seed: u64,
    pub window: u64,
    pub max_iterations: usize,
    /// Method runs that hit the iteration cap.
    pub capped: usize,
    pub rows: Vec<KernelRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceInstance {
    pub a: HalfSpace,
    pub b: HalfSpace,
    pub start: [f64; 2],
}

/// Final norms of one run: AP, then per kernel `(Sup, Sup.Res.)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunNorms {
    pub ap: f64,
    pub per_kernel: Vec<(f64, f64)>,
    /// Method runs that stopped at the iteration cap.
    pub capped: usize,
}

/// Returns `Some(true)` when `a` wins, `Some(false)` when `b` wins.
pub fn winner(a: f64, b: f64) -> Option<bool> {
    if a < b - WIN_MARGIN {
        Some(true)
    } else if b < a - WIN_MARGIN {
        Some(false)
    } else {
        None
    }
}

fn unit_normal(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let c = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let len = euclid(&c);
        if len > 1e-12 {
            return vec![c[0] / len, c[1] / len];
        }
    }
}

fn open_unit_negative(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let b: f64 = rng.gen_range(-1.0..0.0);
        if b > -1.0 {
            return b;
        }
    }
}

pub fn sample_instance(rng: &mut ChaCha8Rng) -> HalfSpaceInstance {
    loop {
        let a = HalfSpace::new(unit_normal(rng), open_unit_negative(rng)).expect("unit normal");
        let b = HalfSpace::new(unit_normal(rng), open_unit_negative(rng)).expect("unit normal");
        let (sa, sb): (ConvexSet, ConvexSet) = (a.clone().into(), b.clone().into());
        for _ in 0..START_ATTEMPTS {
            let start = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let inside = sa.distance(&start).unwrap() == 0.0 && sb.distance(&start).unwrap() == 0.0;
            if !inside {
                return HalfSpaceInstance { a, b, start };
            }
        }
    }
}

pub fn run_instance(inst: &HalfSpaceInstance, cfg: &MonteCarloConfig) -> Result<RunNorms> {
    let op = AlgorithmicOperator::alternating(vec![inst.a.clone().into(), inst.b.clone().into()])?;
    let targets = BlockTargets::whole(Target::SquaredNorm { half: true }, 2)?;
    let stop = StopRule::settled(cfg.feasibility, cfg.negligible_step, cfg.max_iterations);
    let ap = run_basic(&op, &targets, &inst.start, &RunConfig::basic(stop.clone()))?;
    let mut capped = usize::from(ap.termination == Termination::MaxIterations);
    let per_kernel = cfg
        .kernels
        .iter()
        .map(|&alpha| {
            let sup = run_superiorized(
                &op,
                &targets,
                &inst.start,
                &RunConfig::superiorized(ScheduleConfig::kernel(alpha, 1.0), cfg.perturbations, stop.clone()),
            )?;
            let res = run_superiorized_restarts(
                &op,
                &targets,
                &inst.start,
                &RunConfig::superiorized(
                    ScheduleConfig::restarts(alpha, 1.0, cfg.window),
                    cfg.perturbations,
                    stop.clone(),
                ),
            )?;
            capped += [&sup, &res]
                .iter()
                .filter(|t| t.termination == Termination::MaxIterations)
                .count();
            Ok((euclid(&sup.final_iterate), euclid(&res.final_iterate)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunNorms {
        ap: euclid(&ap.final_iterate),
        per_kernel,
        capped,
    })
}

fn rates(pairs: impl Iterator<Item = (f64, f64)>, runs: usize) -> PairwiseRates {
    let (mut first, mut second) = (0usize, 0usize);
    for (a, b) in pairs {
        match winner(a, b) {
            Some(true) => first += 1,
            Some(false) => second += 1,
            None => {}
        }
    }
    let pct = |c: usize| if runs == 0 { 0.0 } else { 100.0 * c as f64 / runs as f64 };
    PairwiseRates {
        first_wins: pct(first),
        second_wins: pct(second),
    }
}

pub fn run_exp1_montecarlo(cfg: &MonteCarloConfig, execution: Execution) -> Result<MonteCarloReport> {
    let norms = map_indexed(cfg.runs, execution, |i| {
        let mut rng = stream_rng(cfg.seed, i as u64);
        run_instance(&sample_instance(&mut rng), cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let rows = cfg
        .kernels
        .iter()
        .enumerate()
        .map(|(k, &alpha)| KernelRow {
            alpha,
            ap_vs_sup: rates(norms.iter().map(|n| (n.ap, n.per_kernel[k].0)), cfg.runs),
            ap_vs_sup_res: rates(norms.iter().map(|n| (n.ap, n.per_kernel[k].1)), cfg.runs),
            sup_vs_sup_res: rates(norms.iter().map(|n| n.per_kernel[k]), cfg.runs),
        })
        .collect();
    Ok(MonteCarloReport {
        runs: cfg.runs,
        seed: cfg.seed,
        window: cfg.window,
        max_iterations: cfg.max_iterations,
        capped: norms.iter().map(|n| n.capped).sum(),
        rows,
    })
}
