//! Minimum-norm point in the intersection of two discs: alternating
//! projections, two superiorized kernels, and the restarted version.

use serde::{Deserialize, Serialize};

use crate::convex_sets::{Ball, ConvexSet};
use crate::engines::{
    run_basic, run_superiorized, run_superiorized_restarts, AlgorithmicOperator, IterationTrace, RunConfig, StopRule,
    TraceLevel,
};
use crate::error::Result;
use crate::schedules::ScheduleConfig;
use crate::targets::{BlockTargets, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BallsConfig {
    pub a: Disc,
    pub b: Disc,
    pub start: [f64; 2],
    pub iterations: usize,
    pub small_kernel: f64,
    pub large_kernel: f64,
    pub restart_kernel: f64,
    pub window: u64,
    pub c: f64,
}

impl Default for BallsConfig {
    fn default() -> Self {
        Self {
            a: Disc {
                center: [2.0, 0.5],
                radius: 1.5,
            },
            b: Disc {
                center: [0.5, 2.0],
                radius: 1.5,
            },
            start: [3.0, 3.5],
            iterations: 500,
            small_kernel: 0.6,
            large_kernel: 0.999,
            restart_kernel: 0.6,
            window: 50,
            c: 1.0,
        }
    }
}

/// The four runs, in the order AP, Sup (small kernel), Sup (large kernel),
/// Sup with restarts. They are always recorded in full so that the perturbed
/// points are available.
#[derive(Debug, Clone)]
pub struct BallsTraces {
    pub operator: AlgorithmicOperator,
    pub ap: IterationTrace,
    pub sup_small: IterationTrace,
    pub sup_large: IterationTrace,
    pub sup_restarts: IterationTrace,
}

impl BallsTraces {
    pub fn named(&self) -> [(&'static str, &IterationTrace); 4] {
        [
            ("ap", &self.ap),
            ("sup_small", &self.sup_small),
            ("sup_large", &self.sup_large),
            ("sup_restarts", &self.sup_restarts),
        ]
    }

    /// Proximity of the last point handed to the operator, `y^{k,N}`.
    pub fn perturbed_proximity(&self, trace: &IterationTrace) -> f64 {
        trace
            .records
            .last()
            .and_then(|r| r.perturbed.as_deref())
            .map_or(f64::NAN, |p| self.operator.proximity(p))
    }
}

pub fn run_exp1_balls(cfg: &BallsConfig) -> Result<BallsTraces> {
    let trace = TraceLevel::Full;
    let disc = |d: &Disc| -> Result<ConvexSet> { Ok(Ball::new(d.center.to_vec(), d.radius)?.into()) };
    let op = AlgorithmicOperator::alternating(vec![disc(&cfg.a)?, disc(&cfg.b)?])?;
    let targets = BlockTargets::whole(Target::SquaredNorm { half: true }, 2)?;
    let stop = StopRule::fixed(cfg.iterations);
    let sup = |schedule: ScheduleConfig| RunConfig::superiorized(schedule, 1, stop.clone()).with_trace(trace);
    Ok(BallsTraces {
        operator: op.clone(),
        ap: run_basic(
            &op,
            &targets,
            &cfg.start,
            &RunConfig::basic(stop.clone()).with_trace(trace),
        )?,
        sup_small: run_superiorized(
            &op,
            &targets,
            &cfg.start,
            &sup(ScheduleConfig::kernel(cfg.small_kernel, cfg.c)),
        )?,
        sup_large: run_superiorized(
            &op,
            &targets,
            &cfg.start,
            &sup(ScheduleConfig::kernel(cfg.large_kernel, cfg.c)),
        )?,
        sup_restarts: run_superiorized_restarts(
            &op,
            &targets,
            &cfg.start,
            &sup(ScheduleConfig::restarts(cfg.restart_kernel, cfg.c, cfg.window)),
        )?,
    })
}
