//! Declarative problem files for the generic `run` subcommand.
//!
//! ```json
//! {
//!   "problem": {
//!     "kind": "split",
//!     "x_sets": [{"kind": "box", "lower": [0, 0], "upper": [5, 5]}],
//!     "y_sets": [{"kind": "half_space", "normal": [1, 1, 1], "offset": 4}],
//!     "matrix": {"source": "inline", "rows": [[1, 0], [0, 1], [1, 1]]},
//!     "partition": [2, 1],
//!     "block_targets": [{"kind": "squared_norm"}, {"kind": "zero"}]
//!   },
//!   "start": [4, 4],
//!   "algorithms": [
//!     {"name": "basic"},
//!     {"name": "sup", "schedule": {"alpha": 0.9, "c": 1}, "perturbations": 1}
//!   ],
//!   "stop": {"max_iterations": 1000, "proximity_threshold": 1e-6}
//! }
//! ```
//!
//! A `"feasibility"` problem lists `sets` and one `target` on the whole
//! space. Matrix files are read relative to the problem file.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::convex_sets::{Ball, BoxSet, ConvexSet, HalfSpace};
use crate::engines::{
    run_basic, run_smp_basic, run_smp_superiorized, run_superiorized_restarts, AlgorithmicOperator, IterationTrace,
    RunConfig, StopRule, TraceLevel, DEFAULT_GUARD_LIMIT,
};
use crate::error::{Error, Result};
use crate::schedules::ScheduleConfig;
use crate::split_problems::SplitProblem;
use crate::targets::{BlockTargets, Target, TvGrid};

use super::output::read_matrix_bin;
use super::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Whole {
        dim: usize,
    },
    /// `<normal, x> <= offset`.
    HalfSpace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// `<normal, x> >= bound`.
    AtLeast {
        normal: Vec<f64>,
        bound: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    UniformBox {
        dim: usize,
        lower: f64,
        upper: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

impl SetSpec {
    pub fn build(&self) -> Result<ConvexSet> {
        Ok(match self {
            SetSpec::Whole { dim } => ConvexSet::Whole(*dim),
            SetSpec::HalfSpace { normal, offset } => HalfSpace::new(normal.clone(), *offset)?.into(),
            SetSpec::AtLeast { normal, bound } => HalfSpace::at_least(normal.clone(), *bound)?.into(),
            SetSpec::Box { lower, upper } => BoxSet::new(lower.clone(), upper.clone())?.into(),
            SetSpec::UniformBox { dim, lower, upper } => BoxSet::uniform(*dim, *lower, *upper)?.into(),
            SetSpec::Ball { center, radius } => Ball::new(center.clone(), *radius)?.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Zero,
    SquaredNorm {
        #[serde(default = "yes")]
        half: bool,
    },
    Linear {
        coefficients: Vec<f64>,
    },
    NegatedCoordinate {
        index: usize,
        dim: usize,
    },
    /// TV on a full `side x side` grid, row-major.
    TotalVariation {
        side: usize,
    },
    /// TV on a masked grid; coordinate `i` is the pixel `pixels[i]`.
    MaskedTotalVariation {
        pixels: Vec<(usize, usize)>,
    },
    Fixed {
        base: Box<TargetSpec>,
        direction: Vec<f64>,
    },
}

fn yes() -> bool {
    true
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target> {
        Ok(match self {
            TargetSpec::Zero => Target::Zero,
            TargetSpec::SquaredNorm { half } => Target::SquaredNorm { half: *half },
            TargetSpec::Linear { coefficients } => Target::Linear(coefficients.clone()),
            TargetSpec::NegatedCoordinate { index, dim } => {
                if index >= dim {
                    return Err(Error::Config(format!("coordinate {index} outside dimension {dim}")));
                }
                Target::NegatedCoordinate {
                    index: *index,
                    dim: *dim,
                }
            }
            TargetSpec::TotalVariation { side } => Target::TotalVariation(TvGrid::square(*side)),
            TargetSpec::MaskedTotalVariation { pixels } => Target::TotalVariation(TvGrid::from_pixels(pixels)?),
            TargetSpec::Fixed { base, direction } => Target::fixed(base.build()?, direction.clone())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Inline {
        rows: Vec<Vec<f64>>,
    },
    /// Little-endian `f64`, row-major.
    Binary {
        path: PathBuf,
        rows: usize,
        cols: usize,
    },
    /// One matrix row per line, no header.
    Csv {
        path: PathBuf,
    },
    /// Entries uniform in `[lower, upper)`, drawn row by row from stream 0.
    Uniform {
        rows: usize,
        cols: usize,
        lower: f64,
        upper: f64,
        seed: u64,
    },
}

impl MatrixSpec {
    pub fn build(&self, base: &Path) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Inline { rows } => from_rows(rows),
            MatrixSpec::Binary { path, rows, cols } => {
                let data = read_matrix_bin(&base.join(path), *rows, *cols)?;
                Ok(DMatrix::from_row_slice(*rows, *cols, &data))
            }
            MatrixSpec::Csv { path } => {
                let mut reader = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .trim(csv::Trim::All)
                    .from_path(base.join(path))
                    .map_err(|e| Error::Config(format!("cannot open matrix file: {e}")))?;
                let rows = reader
                    .records()
                    .map(|rec| {
                        let rec = rec.map_err(|e| Error::Config(format!("bad matrix file: {e}")))?;
                        rec.iter()
                            .map(|s| {
                                s.parse::<f64>()
                                    .map_err(|e| Error::Config(format!("bad entry {s:?}: {e}")))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                from_rows(&rows)
            }
            MatrixSpec::Uniform {
                rows,
                cols,
                lower,
                upper,
                seed,
            } => {
                if !(lower < upper) {
                    return Err(Error::Config(format!("empty entry range [{lower}, {upper})")));
                }
                let mut rng = stream_rng(*seed, 0);
                let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(*lower..*upper)).collect();
                Ok(DMatrix::from_row_slice(*rows, *cols, &data))
            }
        }
    }
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config("matrix rows must be nonempty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Cyclic projections onto `sets`, target on the whole vector.
    Feasibility {
        sets: Vec<SetSpec>,
        #[serde(default = "zero_target")]
        target: TargetSpec,
    },
    /// `x` in every `x_set`, `A x` in every `y_set`, one target per block of
    /// consecutive `y` coordinates.
    Split {
        x_sets: Vec<SetSpec>,
        y_sets: Vec<SetSpec>,
        matrix: MatrixSpec,
        partition: Vec<usize>,
        #[serde(default = "zero_target")]
        x_target: TargetSpec,
        block_targets: Vec<TargetSpec>,
    },
}

fn zero_target() -> TargetSpec {
    TargetSpec::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    /// Used in output file names.
    pub name: String,
    /// Absent for the basic algorithm.
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default = "one")]
    pub perturbations: usize,
    #[serde(default = "default_guard")]
    pub guard_limit: usize,
}

fn one() -> usize {
    1
}

fn default_guard() -> usize {
    DEFAULT_GUARD_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub problem: ProblemSpec,
    /// `x`-space start for split problems.
    pub start: Vec<f64>,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub stop: StopRule,
}

/// A problem ready to run.
#[derive(Debug, Clone)]
pub enum LoadedProblem {
    Feasibility {
        operator: AlgorithmicOperator,
        targets: BlockTargets,
    },
    Split(SplitProblem),
}

impl ProblemFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `base` is the directory that relative matrix paths start from.
    pub fn load(&self, base: &Path) -> Result<LoadedProblem> {
        match &self.problem {
            ProblemSpec::Feasibility { sets, target } => {
                let sets = sets.iter().map(SetSpec::build).collect::<Result<Vec<_>>>()?;
                let operator = AlgorithmicOperator::alternating(sets)?;
                let targets = BlockTargets::whole(target.build()?, operator.dim())?;
                Ok(LoadedProblem::Feasibility { operator, targets })
            }
            ProblemSpec::Split {
                x_sets,
                y_sets,
                matrix,
                partition,
                x_target,
                block_targets,
            } => Ok(LoadedProblem::Split(SplitProblem::new(
                x_sets.iter().map(SetSpec::build).collect::<Result<_>>()?,
                y_sets.iter().map(SetSpec::build).collect::<Result<_>>()?,
                matrix.build(base)?,
                partition,
                x_target.build()?,
                block_targets.iter().map(TargetSpec::build).collect::<Result<_>>()?,
            )?)),
        }
    }

    /// Runs every listed algorithm from `start`, in order.
    pub fn run(&self, base: &Path, trace: TraceLevel) -> Result<Vec<(String, IterationTrace)>> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms listed".into()));
        }
        let loaded = self.load(base)?;
        self.algorithms
            .iter()
            .map(|alg| {
                let mut cfg = match &alg.schedule {
                    Some(s) => RunConfig::superiorized(s.clone(), alg.perturbations, self.stop.clone()),
                    None => RunConfig::basic(self.stop.clone()),
                }
                .with_trace(trace);
                cfg.guard_limit = alg.guard_limit;
                let out = match (&loaded, cfg.schedule.is_some()) {
                    (LoadedProblem::Feasibility { operator, targets }, false) => {
                        run_basic(operator, targets, &self.start, &cfg)
                    }
                    (LoadedProblem::Feasibility { operator, targets }, true) => {
                        run_superiorized_restarts(operator, targets, &self.start, &cfg)
                    }
                    (LoadedProblem::Split(p), false) => run_smp_basic(p, &self.start, &cfg),
                    (LoadedProblem::Split(p), true) => run_smp_superiorized(p, &self.start, &cfg),
                }?;
                Ok((alg.name.clone(), out))
            })
            .collect()
    }
}
