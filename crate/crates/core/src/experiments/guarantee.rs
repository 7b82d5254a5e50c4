//! Two half-planes where vanishing perturbations can leave the superiorized
//! iteration away from the minimum-norm point:
//! `A = {x1 + x2 >= 1}`, `B = {x1 - x2 <= 0}`, `T = P_B P_A`, steps `2^-l`.

use serde::{Deserialize, Serialize};

use crate::convex_sets::{ConvexSet, HalfSpace};
use crate::engines::{
    run_basic, run_superiorized, AlgorithmicOperator, IterationTrace, RunConfig, StopRule, TraceLevel,
};
use crate::error::Result;
use crate::schedules::ScheduleConfig;
use crate::targets::{BlockTargets, Target};

/// Minimum-norm point of `A ∩ B`.
pub const MIN_NORM_POINT: [f64; 2] = [0.5, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuaranteeConfig {
    pub start: [f64; 2],
    pub iterations: usize,
    pub alpha: f64,
    pub c: f64,
}

impl Default for GuaranteeConfig {
    fn default() -> Self {
        Self {
            start: [0.3, 0.0],
            iterations: 50,
            alpha: 0.5,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuaranteeTraces {
    pub basic: IterationTrace,
    pub superiorized: IterationTrace,
}

pub fn guarantee_operator() -> AlgorithmicOperator {
    let a: ConvexSet = HalfSpace::at_least(vec![1.0, 1.0], 1.0).expect("nonzero normal").into();
    let b: ConvexSet = HalfSpace::new(vec![1.0, -1.0], 0.0).expect("nonzero normal").into();
    AlgorithmicOperator::alternating(vec![a, b]).expect("two planar sets")
}

pub fn demo_guarantee_problem(cfg: &GuaranteeConfig, trace: TraceLevel) -> Result<GuaranteeTraces> {
    let op = guarantee_operator();
    let targets = BlockTargets::whole(Target::SquaredNorm { half: true }, 2)?;
    let stop = StopRule::fixed(cfg.iterations);
    let basic = run_basic(
        &op,
        &targets,
        &cfg.start,
        &RunConfig::basic(stop.clone()).with_trace(trace),
    )?;
    let superiorized = run_superiorized(
        &op,
        &targets,
        &cfg.start,
        &RunConfig::superiorized(ScheduleConfig::kernel(cfg.alpha, cfg.c), 1, stop).with_trace(trace),
    )?;
    Ok(GuaranteeTraces { basic, superiorized })
}
