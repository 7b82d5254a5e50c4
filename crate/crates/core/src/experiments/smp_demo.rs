//! A planar split minimization problem: three half-planes in the x-space,
//! their images under a quarter-turn rotation in the y-space, `f = x2`,
//! `phi_1 = -y1` and `phi_2 = -y2`. The unique solution is `x = (9, 1)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex_sets::{ConvexSet, HalfSpace};
use crate::engines::{run_smp_basic, run_smp_superiorized, IterationTrace, RunConfig, StopRule, TraceLevel};
use crate::error::Result;
use crate::schedules::ScheduleConfig;
use crate::split_problems::SplitProblem;
use crate::targets::Target;

pub const SOLUTION: [f64; 2] = [9.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmpDemoConfig {
    pub start: [f64; 2],
    pub iterations: usize,
    pub alpha: f64,
    pub c: f64,
    /// Replace the computed x-direction by this fixed vector.
    pub x_direction: Option<[f64; 2]>,
}

impl Default for SmpDemoConfig {
    fn default() -> Self {
        Self {
            start: [7.0, 5.0],
            iterations: 50,
            alpha: 0.9,
            c: 1.0,
            x_direction: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmpDemoTraces {
    pub problem: SplitProblem,
    pub basic: IterationTrace,
    pub superiorized: IterationTrace,
}

/// Counter-clockwise rotation by a quarter turn.
pub fn rotation() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

fn x_halfplanes() -> Vec<HalfSpace> {
    vec![
        HalfSpace::new(vec![1.0, 1.0], 10.0).expect("nonzero normal"),
        HalfSpace::new(vec![-13.0, 3.0], -26.0).expect("nonzero normal"),
        HalfSpace::at_least(vec![0.0, 1.0], 1.0).expect("nonzero normal"),
    ]
}

/// `R {<c, x> <= b} = {<R c, y> <= b}` for an orthogonal `R`.
fn rotated(h: &HalfSpace, r: &DMatrix<f64>) -> HalfSpace {
    let n = r * nalgebra::DVector::from_column_slice(h.normal());
    HalfSpace::new(n.as_slice().to_vec(), h.offset()).expect("rotation keeps the normal nonzero")
}

pub fn smp_demo_problem(x_direction: Option<[f64; 2]>) -> Result<SplitProblem> {
    let r = rotation();
    let cs = x_halfplanes();
    let qs: Vec<ConvexSet> = cs.iter().map(|h| rotated(h, &r).into()).collect();
    let f = Target::Linear(vec![0.0, 1.0]);
    let f = match x_direction {
        Some(d) => Target::fixed(f, d.to_vec())?,
        None => f,
    };
    SplitProblem::new(
        cs.into_iter().map(ConvexSet::from).collect(),
        qs,
        r,
        &[1, 1],
        f,
        vec![
            Target::NegatedCoordinate { index: 0, dim: 1 },
            Target::NegatedCoordinate { index: 0, dim: 1 },
        ],
    )
}

pub fn run_exp2(cfg: &SmpDemoConfig, trace: TraceLevel) -> Result<SmpDemoTraces> {
    let problem = smp_demo_problem(cfg.x_direction)?;
    let stop = StopRule::fixed(cfg.iterations);
    let basic = run_smp_basic(&problem, &cfg.start, &RunConfig::basic(stop.clone()).with_trace(trace))?;
    let superiorized = run_smp_superiorized(
        &problem,
        &cfg.start,
        &RunConfig::superiorized(ScheduleConfig::kernel(cfg.alpha, cfg.c), 1, stop).with_trace(trace),
    )?;
    Ok(SmpDemoTraces {
        problem,
        basic,
        superiorized,
    })
}
