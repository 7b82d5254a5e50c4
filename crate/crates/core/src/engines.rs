//! Iterative drivers: the basic projection iteration, its superiorized
//! version (with or without step-size restarts) and the split-problem
//! superiorizer with independent subvector targets.
//!
//! All drivers share one loop. Each outer iteration perturbs the current
//! point `N` times along nonascending directions, runs the restart
//! bookkeeping, then applies the algorithmic operator.

use std::ops::Range;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convex_sets::ConvexSet;
use crate::error::{check_dim, Error, Result};
use crate::schedules::{Schedule, ScheduleConfig, StepSchedule};
use crate::split_problems::SplitProblem;
use crate::targets::BlockTargets;

/// Sum of distances from coordinate ranges of a point to given sets.
#[derive(Debug, Clone)]
pub struct Proximity {
    terms: Vec<(Range<usize>, ConvexSet)>,
}

impl Proximity {
    pub fn new(terms: Vec<(Range<usize>, ConvexSet)>) -> Result<Self> {
        for (range, set) in &terms {
            check_dim(set.dim(), range.len())?;
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[(Range<usize>, ConvexSet)] {
        &self.terms
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(range, set)| set.distance_slice(&z[range.clone()]))
            .sum()
    }
}

/// `T = P_{C_p} ... P_{C_1}`, applied right to left (first set first).
#[derive(Debug, Clone)]
pub struct AlgorithmicOperator {
    sets: Vec<ConvexSet>,
    dim: usize,
    proximity: Proximity,
}

impl AlgorithmicOperator {
    /// Sequential alternating projections; proximity is the sum of distances
    /// to the individual sets.
    pub fn alternating(sets: Vec<ConvexSet>) -> Result<Self> {
        let dim = sets
            .first()
            .map(ConvexSet::dim)
            .ok_or_else(|| Error::Config("alternating projections need at least one set".into()))?;
        let terms = sets.iter().map(|s| (0..dim, s.clone())).collect();
        Self::with_proximity(sets, dim, Proximity::new(terms)?)
    }

    /// The empty composition on `R^dim`.
    pub fn identity(dim: usize) -> Self {
        Self {
            sets: Vec::new(),
            dim,
            proximity: Proximity { terms: Vec::new() },
        }
    }

    pub fn with_proximity(sets: Vec<ConvexSet>, dim: usize, proximity: Proximity) -> Result<Self> {
        for s in &sets {
            check_dim(dim, s.dim())?;
        }
        for (range, _) in proximity.terms() {
            if range.end > dim {
                return Err(Error::Config(format!("proximity range {range:?} outside R^{dim}")));
            }
        }
        Ok(Self { sets, dim, proximity })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sets(&self) -> &[ConvexSet] {
        &self.sets
    }

    pub fn apply_in_place(&self, z: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        for set in &self.sets {
            set.project_slice(z);
        }
    }

    pub fn apply(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, z.len())?;
        let mut out = z.clone();
        self.apply_in_place(out.as_mut_slice());
        Ok(out)
    }

    pub fn proximity(&self, z: &[f64]) -> f64 {
        self.proximity.value(z)
    }

    pub fn proximity_function(&self) -> &Proximity {
        &self.proximity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceLevel {
    /// Keep iterates and perturbed points for every outer iteration.
    Full,
    /// Scalars only.
    #[default]
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iterations: usize,
    /// Stop as soon as the proximity drops strictly below this value.
    pub proximity_threshold: Option<f64>,
    /// When set, the proximity stop also waits until every step the schedule
    /// can still emit is below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negligible_step: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            proximity_threshold: Some(0.01),
            negligible_step: None,
        }
    }
}

impl StopRule {
    pub fn fixed(iterations: usize) -> Self {
        Self {
            max_iterations: iterations,
            proximity_threshold: None,
            negligible_step: None,
        }
    }

    /// Runs until the iterate is feasible to within `threshold` and the
    /// remaining perturbations cannot move it by more than `step`.
    pub fn settled(threshold: f64, step: f64, cap: usize) -> Self {
        Self {
            max_iterations: cap,
            proximity_threshold: Some(threshold),
            negligible_step: Some(step),
        }
    }
}

pub const DEFAULT_GUARD_LIMIT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Perturbations per outer iteration (`N`).
    #[serde(default = "one")]
    pub perturbations: usize,
    /// Absent for the unperturbed basic algorithm.
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub stop: StopRule,
    /// Consecutive rejected candidates before a zero step is taken.
    #[serde(default = "default_guard")]
    pub guard_limit: usize,
    #[serde(default)]
    pub trace: TraceLevel,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn default_guard() -> usize {
    DEFAULT_GUARD_LIMIT
}

impl RunConfig {
    pub fn basic(stop: StopRule) -> Self {
        Self {
            perturbations: 1,
            schedule: None,
            stop,
            guard_limit: DEFAULT_GUARD_LIMIT,
            trace: TraceLevel::Summary,
            seed: 0,
        }
    }

    pub fn superiorized(schedule: ScheduleConfig, perturbations: usize, stop: StopRule) -> Self {
        Self {
            perturbations,
            schedule: Some(schedule),
            ..Self::basic(stop)
        }
    }

    pub fn with_trace(mut self, trace: TraceLevel) -> Self {
        self.trace = trace;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.perturbations == 0 {
            return Err(Error::Config(
                "N (perturbations per iteration) must be at least 1".into(),
            ));
        }
        if self.guard_limit == 0 {
            return Err(Error::Config("guard limit must be at least 1".into()));
        }
        if let Some(t) = self.stop.proximity_threshold {
            if !(t > 0.0) {
                return Err(Error::Config(format!("proximity threshold must be positive, got {t}")));
            }
        }
        if let Some(eps) = self.stop.negligible_step {
            if !(eps > 0.0) {
                return Err(Error::Config(format!("negligible step must be positive, got {eps}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ProximityReached,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Index of the iterate this record describes (1 for the first output).
    pub k: usize,
    pub proximity: f64,
    /// Target value per block at the iterate.
    pub targets: Vec<f64>,
    /// Sum of the step sizes accepted during this outer iteration.
    pub step: f64,
    /// Candidates drawn from the schedule during this outer iteration.
    pub candidates: usize,
    pub restart: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterate: Option<Vec<f64>>,
    /// The perturbed point fed to the operator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbed: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub initial: Vec<f64>,
    pub final_iterate: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub accepted_step_sum: f64,
    pub emitted_step_sum: f64,
    pub restarts: usize,
    /// Inner loops that hit the guard limit and took a zero step.
    pub guard_exhaustions: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl IterationTrace {
    pub fn final_proximity(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.proximity)
    }

    pub fn final_targets(&self) -> &[f64] {
        self.records.last().map_or(&[], |r| &r.targets[..])
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerturbationOutcome {
    pub candidates: usize,
    pub accepted: Vec<f64>,
    pub emitted_sum: f64,
    pub guard_exhaustions: usize,
}

/// Inner loop of the superiorized algorithms.
///
/// For `j = 0..N`: take the nonascending direction of every block at the
/// current point, draw the next candidate step, and keep drawing while any
/// block target would rise strictly above its value at the start of the
/// outer iteration. A single shared step is applied to all blocks.
pub fn perturb_inner_loop<S: StepSchedule + ?Sized>(
    z: &mut [f64],
    targets: &BlockTargets,
    schedule: &mut S,
    perturbations: usize,
    guard_limit: usize,
) -> Result<PerturbationOutcome> {
    check_dim(targets.dim(), z.len())?;
    let active: Vec<_> = targets.blocks().iter().filter(|(_, t)| !t.is_zero()).collect();
    let reference: Vec<f64> = active.iter().map(|(r, t)| t.value(&z[r.clone()])).collect();
    let mut directions: Vec<Vec<f64>> = active.iter().map(|(r, _)| vec![0.0; r.len()]).collect();
    let mut scratch = Vec::new();
    let mut out = PerturbationOutcome::default();

    for _ in 0..perturbations {
        let mut moving = false;
        for ((range, target), dir) in active.iter().zip(directions.iter_mut()) {
            target.direction_into(&z[range.clone()], dir);
            moving |= dir.iter().any(|&v| v != 0.0);
        }

        let mut rejected = 0;
        let step = loop {
            let eta = schedule.next_candidate();
            out.candidates += 1;
            out.emitted_sum += eta;
            if eta == 0.0 || !moving {
                break eta;
            }
            let acceptable = active
                .iter()
                .zip(&directions)
                .zip(&reference)
                .all(|(((range, target), dir), &bound)| {
                    scratch.clear();
                    scratch.extend(z[range.clone()].iter().zip(dir).map(|(a, d)| a + eta * d));
                    target.value(&scratch) <= bound
                });
            if acceptable {
                break eta;
            }
            rejected += 1;
            if rejected >= guard_limit {
                out.guard_exhaustions += 1;
                break 0.0;
            }
        };

        if moving && step != 0.0 {
            for ((range, _), dir) in active.iter().zip(&directions) {
                for (zi, d) in z[range.clone()].iter_mut().zip(dir) {
                    *zi += step * d;
                }
            }
        }
        out.accepted.push(if moving { step } else { 0.0 });
    }
    Ok(out)
}

fn drive(
    operator: &AlgorithmicOperator,
    targets: &BlockTargets,
    z0: &[f64],
    cfg: &RunConfig,
) -> Result<IterationTrace> {
    cfg.validate()?;
    check_dim(operator.dim(), z0.len())?;
    check_dim(operator.dim(), targets.dim())?;
    let mut schedule: Option<Schedule> = cfg.schedule.as_ref().map(|s| s.build()).transpose()?;

    let start = Instant::now();
    let mut z = z0.to_vec();
    let full = cfg.trace == TraceLevel::Full;
    let mut trace = IterationTrace {
        records: Vec::new(),
        initial: z0.to_vec(),
        final_iterate: Vec::new(),
        iterations: 0,
        termination: Termination::MaxIterations,
        accepted_step_sum: 0.0,
        emitted_step_sum: 0.0,
        restarts: 0,
        guard_exhaustions: 0,
        wall_time_s: 0.0,
    };

    for k in 0..cfg.stop.max_iterations {
        let mut step = 0.0;
        let mut candidates = 0;
        let mut restart = false;
        if let Some(schedule) = schedule.as_mut() {
            let outcome = perturb_inner_loop(&mut z, targets, schedule, cfg.perturbations, cfg.guard_limit)?;
            step = outcome.accepted.iter().sum();
            candidates = outcome.candidates;
            trace.accepted_step_sum += step;
            trace.emitted_step_sum += outcome.emitted_sum;
            trace.guard_exhaustions += outcome.guard_exhaustions;
            restart = schedule.complete_outer_iteration();
            trace.restarts += usize::from(restart);
        }
        let perturbed = full.then(|| z.clone());

        operator.apply_in_place(&mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: k + 1 });
        }

        let proximity = operator.proximity(&z);
        trace.records.push(IterationRecord {
            k: k + 1,
            proximity,
            targets: targets.values(&z),
            step,
            candidates,
            restart,
            iterate: full.then(|| z.clone()),
            perturbed,
        });
        trace.iterations = k + 1;
        let quiet = match (cfg.stop.negligible_step, schedule.as_ref()) {
            (Some(eps), Some(s)) => s.largest_future_step() < eps,
            _ => true,
        };
        if quiet && cfg.stop.proximity_threshold.is_some_and(|t| proximity < t) {
            trace.termination = Termination::ProximityReached;
            break;
        }
    }

    trace.final_iterate = z;
    trace.wall_time_s = start.elapsed().as_secs_f64();
    Ok(trace)
}

/// Unperturbed iteration `x^{k+1} = T(x^k)`. `targets` only feed the trace.
pub fn run_basic(
    operator: &AlgorithmicOperator,
    targets: &BlockTargets,
    x0: &[f64],
    cfg: &RunConfig,
) -> Result<IterationTrace> {
    let cfg = RunConfig {
        schedule: None,
        ..cfg.clone()
    };
    drive(operator, targets, x0, &cfg)
}

/// Superiorized version with a plain kernel schedule. Any restart window in
/// the configuration is ignored.
pub fn run_superiorized(
    operator: &AlgorithmicOperator,
    targets: &BlockTargets,
    x0: &[f64],
    cfg: &RunConfig,
) -> Result<IterationTrace> {
    let schedule = cfg
        .schedule
        .as_ref()
        .ok_or_else(|| Error::Config("superiorized run needs a schedule".into()))?;
    let cfg = RunConfig {
        schedule: Some(ScheduleConfig::kernel(schedule.alpha, schedule.c)),
        ..cfg.clone()
    };
    drive(operator, targets, x0, &cfg)
}

/// Superiorized version with step-size restarts after each window.
pub fn run_superiorized_restarts(
    operator: &AlgorithmicOperator,
    targets: &BlockTargets,
    x0: &[f64],
    cfg: &RunConfig,
) -> Result<IterationTrace> {
    if cfg.schedule.is_none() {
        return Err(Error::Config("superiorized run needs a schedule".into()));
    }
    drive(operator, targets, x0, cfg)
}

/// Basic product-space iteration for a split problem, started at
/// `(x0, A x0)`.
pub fn run_smp_basic(problem: &SplitProblem, x0: &[f64], cfg: &RunConfig) -> Result<IterationTrace> {
    let z0 = problem.lift(x0)?;
    run_basic(&problem.build_mssfp_operator(), &problem.targets(), &z0, cfg)
}

/// Superiorized split-problem iteration: the x-target and every subvector
/// target must not increase for a candidate step to be accepted. Uses the
/// configured schedule as is, so restarts apply when a window is set.
pub fn run_smp_superiorized(problem: &SplitProblem, x0: &[f64], cfg: &RunConfig) -> Result<IterationTrace> {
    if cfg.schedule.is_none() {
        return Err(Error::Config("superiorized run needs a schedule".into()));
    }
    let z0 = problem.lift(x0)?;
    drive(&problem.build_mssfp_operator(), &problem.targets(), &z0, cfg)
}

/// `|x - P_box(x)| + |y - P_Q(y)|` for a split problem, summed over all
/// constraint sets of each space.
pub fn proximity(problem: &SplitProblem, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(problem.x_dim(), x.len())?;
    check_dim(problem.y_dim(), y.len())?;
    let mut z = x.to_vec();
    z.extend_from_slice(y);
    Ok(problem.proximity_function().value(&z))
}
