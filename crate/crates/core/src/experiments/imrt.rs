//! Synthetic IMRT fluence-map instances and the three-way comparison of the
//! basic product-space iteration, its superiorized version and the
//! superiorized version with restarts, using TV targets on tumor doses.
//!
//! Generation draws from stream 0 of the master seed, in this order:
//! tumor blobs (a seed pixel, then random-walk growth steps for each tumor
//! in turn), `eps_1..eps_7`, the reference dose `y_ref` pixel by pixel,
//! then `V` row by row; a retry after an ill-conditioned `V` continues on the
//! same stream with a fresh `V`. The common start point of the algorithms is
//! drawn from stream 1, coordinate by coordinate.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex_sets::{feasibility_tolerance, AffineGraphProjector, BoxSet, ConvexSet};
use crate::engines::{
    run_smp_basic, run_smp_superiorized, IterationTrace, RunConfig, StopRule, Termination, TraceLevel,
    DEFAULT_GUARD_LIMIT,
};
use crate::error::{check_dim, Error, Result};
use crate::par::{map_indexed, Execution};
use crate::schedules::ScheduleConfig;
use crate::split_problems::SplitProblem;
use crate::targets::{Target, TvGrid};

use super::output::{read_matrix_bin, OutputDir};
use super::stream_rng;

const ORGAN_DOSE: (f64, f64) = (0.0, 15.0);
const TUMOR_DOSE: (f64, f64) = (10.0, 40.0);
const MAX_ATTEMPTS: usize = 5;
/// Reject `V` when `min |R_ii| / max |R_ii|` of its QR factor is below this.
const MIN_PIVOT_RATIO: f64 = 1e-10;
const GROWTH_STEPS_PER_PIXEL: usize = 1000;
pub const INSTANCE_FILE: &str = "instance.json";
pub const DOSE_FILE: &str = "dose_matrix.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImrtConfig {
    /// Grid side `M`; the dose space has `M^2` pixels.
    pub side: usize,
    /// Beamlet count `n`, at least `M^2`.
    pub beamlets: usize,
    /// Pixel count of each tumor; the number of entries is `L`.
    pub tumor_pixels: Vec<usize>,
    pub seed: u64,
}

impl Default for ImrtConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ImrtConfig {
    pub fn desk() -> Self {
        Self {
            side: 20,
            beamlets: 460,
            tumor_pixels: vec![40, 30],
            seed: 0,
        }
    }

    pub fn paper_scale() -> Self {
        Self {
            side: 50,
            beamlets: 2840,
            tumor_pixels: vec![250, 180],
            seed: 0,
        }
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseBounds {
    /// `[d_lower, d_upper]` on organ-at-risk pixels.
    pub organ: Interval,
    /// `[c_lower_l, c_upper_l]` per tumor.
    pub tumors: Vec<Interval>,
    /// `[e_lower, e_upper]` on every beamlet intensity.
    pub intensity: Interval,
}

/// Pixels are numbered row-major, `j = row * M + col`. The dose matrix keeps
/// that row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImrtInstance {
    pub side: usize,
    pub beamlets: usize,
    pub seed: u64,
    /// Ill-conditioned draws of `V` rejected before this one.
    pub rejected_draws: usize,
    pub tumors: Vec<Vec<usize>>,
    pub organ: Vec<usize>,
    pub eps: [f64; 7],
    pub bounds: DoseBounds,
    pub x_ref: Vec<f64>,
    pub y_ref: Vec<f64>,
    #[serde(skip, default = "empty_matrix")]
    pub dose: DMatrix<f64>,
}

fn empty_matrix() -> DMatrix<f64> {
    DMatrix::zeros(0, 0)
}

fn unit_interval_open_below(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

fn grow_blob(rng: &mut ChaCha8Rng, side: usize, size: usize, taken: &mut [bool]) -> Option<Vec<usize>> {
    let free: Vec<usize> = (0..taken.len()).filter(|&j| !taken[j]).collect();
    if size == 0 {
        return Some(Vec::new());
    }
    if free.len() < size {
        return None;
    }
    let seed = free[rng.gen_range(0..free.len())];
    let mut blob = BTreeSet::from([seed]);
    let mut order = vec![seed];
    taken[seed] = true;
    let mut steps = 0;
    while blob.len() < size {
        steps += 1;
        if steps > GROWTH_STEPS_PER_PIXEL * size {
            for &j in &order {
                taken[j] = false;
            }
            return None;
        }
        let from = order[rng.gen_range(0..order.len())];
        let (r, c) = (from / side, from % side);
        let next = match rng.gen_range(0..4) {
            0 if r > 0 => from - side,
            1 if r + 1 < side => from + side,
            2 if c > 0 => from - 1,
            3 if c + 1 < side => from + 1,
            _ => continue,
        };
        if !taken[next] {
            taken[next] = true;
            blob.insert(next);
            order.push(next);
        }
    }
    Some(blob.into_iter().collect())
}

fn phantom(rng: &mut ChaCha8Rng, cfg: &ImrtConfig) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    let mut taken = vec![false; cfg.pixels()];
    let mut tumors = Vec::with_capacity(cfg.tumor_pixels.len());
    for (l, &size) in cfg.tumor_pixels.iter().enumerate() {
        let blob = grow_blob(rng, cfg.side, size, &mut taken)
            .ok_or_else(|| Error::Config(format!("could not place tumor {l} with {size} pixels")))?;
        tumors.push(blob);
    }
    let organ = (0..cfg.pixels()).filter(|&j| !taken[j]).collect();
    Ok((tumors, organ))
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// `(V^T V)^{-1} V^T = R^{-1} Q^T` from a thin QR of `V`, or `None` when `R`
/// is numerically singular.
fn left_inverse(v: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let qr = v.qr();
    let r = qr.r();
    let (lo, hi) = min_max(r.diagonal().iter().map(|d| d.abs()));
    if !(lo > MIN_PIVOT_RATIO * hi) {
        return None;
    }
    let qt = qr.q().transpose();
    r.solve_upper_triangular(&qt)
}

pub fn gen_imrt_instance(cfg: &ImrtConfig) -> Result<ImrtInstance> {
    let (m, n) = (cfg.pixels(), cfg.beamlets);
    if cfg.side == 0 {
        return Err(Error::Config("grid side must be positive".into()));
    }
    if n < m {
        return Err(Error::Config(format!(
            "need at least as many beamlets as pixels ({n} < {m})"
        )));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let (tumors, organ) = phantom(&mut rng, cfg)?;
    let mut eps = [0.0; 7];
    for e in &mut eps {
        *e = unit_interval_open_below(&mut rng);
    }

    let mut in_tumor = vec![false; m];
    for &j in tumors.iter().flatten() {
        in_tumor[j] = true;
    }
    let y_ref: Vec<f64> = in_tumor
        .iter()
        .map(|&t| {
            let (lo, hi) = if t { TUMOR_DOSE } else { ORGAN_DOSE };
            rng.gen_range(lo..=hi)
        })
        .collect();

    let mut rejected_draws = 0;
    let (v, dose) = loop {
        let mut v = DMatrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                v[(i, j)] = rng.gen::<f64>();
            }
        }
        if let Some(a) = left_inverse(v.clone()) {
            break (v, a);
        }
        rejected_draws += 1;
        if rejected_draws == MAX_ATTEMPTS {
            return Err(Error::Config(format!(
                "V^T V was numerically singular in {MAX_ATTEMPTS} draws"
            )));
        }
    };
    let x_ref: Vec<f64> = (&v * nalgebra::DVector::from_column_slice(&y_ref)).as_slice().to_vec();

    let organ_max = organ.iter().map(|&j| y_ref[j]).fold(f64::NEG_INFINITY, f64::max);
    let organ_upper = if organ.is_empty() { ORGAN_DOSE.1 } else { organ_max } + 5.0 * eps[0];
    let tumor_bounds = tumors
        .iter()
        .enumerate()
        .map(|(l, t)| {
            let (lo, hi) = min_max(t.iter().map(|&j| y_ref[j]));
            // Tumors past the second reuse the last two epsilons.
            let (a, b) = (eps[(1 + 2 * l).min(3)], eps[(2 + 2 * l).min(4)]);
            Interval {
                lower: lo - 5.0 * a,
                upper: hi + 5.0 * b,
            }
        })
        .collect();
    let (x_lo, x_hi) = min_max(x_ref.iter().copied());
    let bounds = DoseBounds {
        organ: Interval {
            lower: 0.0,
            upper: organ_upper,
        },
        tumors: tumor_bounds,
        intensity: Interval {
            lower: (eps[5] + 1.0) / 2.0 * x_lo,
            upper: (1.0 + eps[6] / 2.0) * x_hi,
        },
    };

    let instance = ImrtInstance {
        side: cfg.side,
        beamlets: n,
        seed: cfg.seed,
        rejected_draws,
        tumors,
        organ,
        eps,
        bounds,
        x_ref,
        y_ref,
        dose,
    };
    instance.certify()?;
    Ok(instance)
}

impl ImrtInstance {
    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    /// Dose bounds per pixel, in pixel order.
    pub fn pixel_bounds(&self) -> Vec<Interval> {
        let mut out = vec![self.bounds.organ; self.pixels()];
        for (t, b) in self.tumors.iter().zip(&self.bounds.tumors) {
            for &j in t {
                out[j] = *b;
            }
        }
        out
    }

    /// Checks the structural invariants and that `x_ref` is feasible.
    pub fn certify(&self) -> Result<()> {
        let m = self.pixels();
        check_dim(m, self.dose.nrows())?;
        check_dim(self.beamlets, self.dose.ncols())?;
        check_dim(m, self.y_ref.len())?;
        check_dim(self.beamlets, self.x_ref.len())?;
        if self.tumors.len() != self.bounds.tumors.len() {
            return Err(Error::Config("one dose interval per tumor is required".into()));
        }
        let mut seen = vec![false; m];
        for &j in self.tumors.iter().flatten().chain(&self.organ) {
            if j >= m || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Config(format!("pixel {j} is out of range or assigned twice")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("tumors and organ do not cover the grid".into()));
        }
        let e = self.bounds.intensity;
        let x_tol = feasibility_tolerance(&self.x_ref);
        if self.x_ref.iter().any(|&x| x < e.lower - x_tol || x > e.upper + x_tol) {
            return Err(Error::Config("reference intensities violate the beamlet bounds".into()));
        }
        let dose = &self.dose * nalgebra::DVector::from_column_slice(&self.x_ref);
        let y_tol = 1e-6 * (1.0 + self.y_ref.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        for ((j, (&d, &y)), b) in dose.iter().zip(&self.y_ref).enumerate().zip(self.pixel_bounds()) {
            if (d - y).abs() > y_tol || d < b.lower - y_tol || d > b.upper + y_tol {
                return Err(Error::Config(format!(
                    "reference dose at pixel {j} is {d}, expected {y} within [{}, {}]",
                    b.lower, b.upper
                )));
            }
        }
        Ok(())
    }

    /// Dose coordinates of the split problem: tumors in turn, then the organ.
    pub fn pixel_order(&self) -> Vec<usize> {
        self.tumors.iter().flatten().chain(&self.organ).copied().collect()
    }

    fn grid_of(&self, pixels: &[usize]) -> Result<TvGrid> {
        let rc: Vec<(usize, usize)> = pixels.iter().map(|&j| (j / self.side, j % self.side)).collect();
        TvGrid::from_pixels(&rc)
    }

    /// Split problem with rows of `A` permuted into tumor blocks followed by
    /// the organ block, TV targets on tumors and zero targets elsewhere.
    pub fn split_problem(&self) -> Result<SplitProblem> {
        let order = self.pixel_order();
        let a = DMatrix::from_fn(order.len(), self.beamlets, |r, c| self.dose[(order[r], c)]);
        let bounds = self.pixel_bounds();
        let (lo, hi): (Vec<f64>, Vec<f64>) = order.iter().map(|&j| (bounds[j].lower, bounds[j].upper)).unzip();
        let e = self.bounds.intensity;
        let x_box: ConvexSet = BoxSet::uniform(self.beamlets, e.lower, e.upper)?.into();
        let y_box: ConvexSet = BoxSet::new(lo, hi)?.into();

        let mut partition: Vec<usize> = self.tumors.iter().map(Vec::len).collect();
        let mut targets = self
            .tumors
            .iter()
            .map(|t| Ok(Target::TotalVariation(self.grid_of(t)?)))
            .collect::<Result<Vec<_>>>()?;
        if !self.organ.is_empty() {
            partition.push(self.organ.len());
            targets.push(Target::Zero);
        }
        SplitProblem::with_projector(
            vec![x_box],
            vec![y_box],
            Arc::new(AffineGraphProjector::new(a)?),
            &partition,
            Target::Zero,
            targets,
        )
    }

    /// `M x M` grid of a dose vector given in split-problem order.
    pub fn heatmap(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.pixels(), y.len())?;
        let mut grid = vec![vec![0.0; self.side]; self.side];
        for (&j, &v) in self.pixel_order().iter().zip(y) {
            grid[j / self.side][j % self.side] = v;
        }
        Ok(grid)
    }

    /// Writes `instance.json` and the row-major `dose_matrix.bin`.
    pub fn save(&self, out: &mut OutputDir) -> Result<()> {
        out.json(INSTANCE_FILE, self)?;
        let (rows, cols) = self.dose.shape();
        out.matrix_bin(
            DOSE_FILE,
            (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (r, c)))
                .map(|rc| self.dose[rc]),
        )
    }

    /// Reads an instance written by [`ImrtInstance::save`] and re-certifies it.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(INSTANCE_FILE))?;
        let mut instance: ImrtInstance = serde_json::from_str(&text)?;
        let m = instance.pixels();
        let data = read_matrix_bin(&dir.join(DOSE_FILE), m, instance.beamlets)?;
        instance.dose = DMatrix::from_row_slice(m, instance.beamlets, &data);
        instance.certify()?;
        Ok(instance)
    }

    /// Uniform start in `[e_lower, e_upper]^n`, drawn from stream 1.
    pub fn start_point(&self) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, 1);
        let e = self.bounds.intensity;
        (0..self.beamlets).map(|_| rng.gen_range(e.lower..=e.upper)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImrtAlgorithm {
    Basic,
    Superiorized,
    Restarts,
}

impl ImrtAlgorithm {
    pub const ALL: [ImrtAlgorithm; 3] = [
        ImrtAlgorithm::Basic,
        ImrtAlgorithm::Superiorized,
        ImrtAlgorithm::Restarts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImrtAlgorithm::Basic => "basic",
            ImrtAlgorithm::Superiorized => "superiorized",
            ImrtAlgorithm::Restarts => "restarts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImrtRunConfig {
    pub superiorized: ScheduleConfig,
    pub restarts: ScheduleConfig,
    /// Perturbations per outer iteration (`N`) for both superiorized runs.
    pub perturbations: usize,
    pub proximity_threshold: f64,
    pub max_iterations: usize,
    pub guard_limit: usize,
}

impl Default for ImrtRunConfig {
    fn default() -> Self {
        Self {
            superiorized: ScheduleConfig::kernel(0.999, 100_000.0),
            restarts: ScheduleConfig::restarts(0.99, 100.0, 20),
            perturbations: 5,
            proximity_threshold: 0.01,
            max_iterations: 100_000,
            guard_limit: DEFAULT_GUARD_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmOutcome {
    pub algorithm: ImrtAlgorithm,
    pub trace: IterationTrace,
    /// Final TV per tumor.
    pub tv: Vec<f64>,
}

impl AlgorithmOutcome {
    pub fn converged(&self) -> bool {
        self.trace.termination == Termination::ProximityReached
    }

    /// Final dose vector in split-problem order.
    pub fn final_dose(&self, beamlets: usize) -> &[f64] {
        &self.trace.final_iterate[beamlets..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImrtRun {
    pub start: Vec<f64>,
    pub outcomes: Vec<AlgorithmOutcome>,
}

impl ImrtRun {
    pub fn outcome(&self, algorithm: ImrtAlgorithm) -> Option<&AlgorithmOutcome> {
        self.outcomes.iter().find(|o| o.algorithm == algorithm)
    }
}

/// Runs the requested algorithms from the instance's common start point.
pub fn run_exp3(
    instance: &ImrtInstance,
    problem: &SplitProblem,
    cfg: &ImrtRunConfig,
    algorithms: &[ImrtAlgorithm],
    trace: TraceLevel,
) -> Result<ImrtRun> {
    let start = instance.start_point();
    let stop = StopRule {
        max_iterations: cfg.max_iterations,
        proximity_threshold: Some(cfg.proximity_threshold),
        negligible_step: None,
    };
    let tumors = instance.tumors.len();
    let outcomes = algorithms
        .iter()
        .map(|&algorithm| {
            let run = |schedule: &ScheduleConfig| {
                let mut rc =
                    RunConfig::superiorized(schedule.clone(), cfg.perturbations, stop.clone()).with_trace(trace);
                rc.guard_limit = cfg.guard_limit;
                run_smp_superiorized(problem, &start, &rc)
            };
            let trace = match algorithm {
                ImrtAlgorithm::Basic => {
                    run_smp_basic(problem, &start, &RunConfig::basic(stop.clone()).with_trace(trace))?
                }
                ImrtAlgorithm::Superiorized => {
                    run(&ScheduleConfig::kernel(cfg.superiorized.alpha, cfg.superiorized.c))?
                }
                ImrtAlgorithm::Restarts => run(&cfg.restarts)?,
            };
            // Block values are ordered x, tumors, organ.
            let tv = trace.final_targets().get(1..1 + tumors).unwrap_or(&[]).to_vec();
            Ok(AlgorithmOutcome { algorithm, trace, tv })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImrtRun { start, outcomes })
}

/// One instance per seed, generated and run independently.
pub fn run_exp3_seeds(
    instance_cfg: &ImrtConfig,
    seeds: &[u64],
    cfg: &ImrtRunConfig,
    execution: Execution,
) -> Vec<Result<(ImrtInstance, ImrtRun)>> {
    map_indexed(seeds.len(), execution, |i| {
        let instance = gen_imrt_instance(&ImrtConfig {
            seed: seeds[i],
            ..instance_cfg.clone()
        })?;
        let problem = instance.split_problem()?;
        let run = run_exp3(&instance, &problem, cfg, &ImrtAlgorithm::ALL, TraceLevel::Summary)?;
        Ok((instance, run))
    })
}
