//! Target functions and their nonascending directions.
//!
//! Directions follow the convex-function recipe: take the partial derivatives
//! where they exist, zero where they do not, then normalize. The result is
//! either the zero vector or a unit vector.

use std::ops::Range;

use nalgebra::DVector;

use crate::convex_sets::{dot, norm};
use crate::error::{check_dim, Error, Result};

/// Total variation over a set of pixels laid out on a rectangular grid.
///
/// Each coordinate is one pixel. A pixel contributes
/// `sqrt(sum of squared differences to its lower and right neighbours)`,
/// counting only neighbours that are present. On a full `M x M` grid this is
/// the usual isotropic TV with one-sided terms along the last row and column.
/// Pixels outside the mask behave as copies of the adjacent in-mask pixel, so
/// they add nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct TvGrid {
    down: Vec<Option<usize>>,
    right: Vec<Option<usize>>,
    shape: (usize, usize),
    pixels: Vec<(usize, usize)>,
}

impl TvGrid {
    /// Full `side x side` grid, row-major.
    pub fn square(side: usize) -> Self {
        let pixels = (0..side)
            .flat_map(|s| (0..side).map(move |t| (s, t)))
            .collect::<Vec<_>>();
        Self::from_pixels(&pixels).expect("square grid pixels are distinct")
    }

    /// Builds the grid from `(row, col)` positions; coordinate `i` of the
    /// vector is the pixel `pixels[i]`.
    pub fn from_pixels(pixels: &[(usize, usize)]) -> Result<Self> {
        let rows = pixels.iter().map(|p| p.0 + 1).max().unwrap_or(0);
        let cols = pixels.iter().map(|p| p.1 + 1).max().unwrap_or(0);
        let mut index = vec![None; rows * cols];
        for (i, &(s, t)) in pixels.iter().enumerate() {
            let slot = &mut index[s * cols + t];
            if slot.is_some() {
                return Err(Error::Config(format!("pixel ({s}, {t}) listed twice")));
            }
            *slot = Some(i);
        }
        let lookup = |s: usize, t: usize| {
            if s < rows && t < cols {
                index[s * cols + t]
            } else {
                None
            }
        };
        let down = pixels.iter().map(|&(s, t)| lookup(s + 1, t)).collect();
        let right = pixels.iter().map(|&(s, t)| lookup(s, t + 1)).collect();
        Ok(Self {
            down,
            right,
            shape: (rows, cols),
            pixels: pixels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.down.len()
    }

    pub fn is_empty(&self) -> bool {
        self.down.is_empty()
    }

    /// Bounding box `(rows, cols)` of the pixels.
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    fn differences(&self, z: &[f64], i: usize) -> (f64, f64) {
        let d = self.down[i].map_or(0.0, |j| z[i] - z[j]);
        let r = self.right[i].map_or(0.0, |j| z[i] - z[j]);
        (d, r)
    }

    fn value(&self, z: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| {
                let (d, r) = self.differences(z, i);
                (d * d + r * r).sqrt()
            })
            .sum()
    }

    /// Partial derivatives, zeroing every coordinate that touches a term
    /// whose magnitude is below `1e-12 * (1 + |z|_inf)`.
    fn partials(&self, z: &[f64], u: &mut [f64]) {
        let tol = 1e-12 * (1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        u.fill(0.0);
        let mut kink = vec![false; self.len()];
        for i in 0..self.len() {
            if self.down[i].is_none() && self.right[i].is_none() {
                continue;
            }
            let (d, r) = self.differences(z, i);
            let term = (d * d + r * r).sqrt();
            if term < tol {
                kink[i] = true;
                if let Some(j) = self.down[i] {
                    kink[j] = true;
                }
                if let Some(j) = self.right[i] {
                    kink[j] = true;
                }
                continue;
            }
            u[i] += (d + r) / term;
            if let Some(j) = self.down[i] {
                u[j] -= d / term;
            }
            if let Some(j) = self.right[i] {
                u[j] -= r / term;
            }
        }
        for (ui, k) in u.iter_mut().zip(kink) {
            if k {
                *ui = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `phi = 0`; its direction is always zero.
    Zero,
    /// `0.5 |x|^2` when `half` is set, `|x|^2` otherwise.
    SquaredNorm {
        half: bool,
    },
    /// `<a, x>`.
    Linear(Vec<f64>),
    /// `-x_index` on `R^dim`.
    NegatedCoordinate {
        index: usize,
        dim: usize,
    },
    TotalVariation(TvGrid),
    /// Evaluates `base` but always proposes `direction`, whatever the point.
    Fixed {
        base: Box<Target>,
        direction: Vec<f64>,
    },
}

impl Target {
    pub fn fixed(base: Target, direction: Vec<f64>) -> Result<Self> {
        if norm(&direction) > 1.0 + 1e-12 {
            return Err(Error::Config("fixed direction must have norm at most 1".into()));
        }
        if let Some(d) = base.dim() {
            check_dim(d, direction.len())?;
        }
        Ok(Target::Fixed {
            base: Box::new(base),
            direction,
        })
    }

    /// Required input dimension, if the target fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Target::Zero | Target::SquaredNorm { .. } => None,
            Target::Linear(a) => Some(a.len()),
            Target::NegatedCoordinate { dim, .. } => Some(*dim),
            Target::TotalVariation(g) => Some(g.len()),
            Target::Fixed { direction, .. } => Some(direction.len()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Target::Zero)
    }

    pub fn check(&self, len: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim(d, len),
            None => Ok(()),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check(x.len())?;
        Ok(self.value(x))
    }

    /// Unnormalized partial-derivative vector `u`.
    pub fn partials(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check(x.len())?;
        let mut u = DVector::zeros(x.len());
        self.fill_partials(x, u.as_mut_slice());
        Ok(u)
    }

    /// `0` if `u = 0`, else `-u / |u|`.
    pub fn nonascending(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check(x.len())?;
        let mut v = DVector::zeros(x.len());
        self.direction_into(x, v.as_mut_slice());
        Ok(v)
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match self {
            Target::Zero => 0.0,
            Target::SquaredNorm { half } => {
                let sq = dot(x, x);
                if *half {
                    0.5 * sq
                } else {
                    sq
                }
            }
            Target::Linear(a) => dot(a, x),
            Target::NegatedCoordinate { index, .. } => -x[*index],
            Target::TotalVariation(g) => g.value(x),
            Target::Fixed { base, .. } => base.value(x),
        }
    }

    fn fill_partials(&self, x: &[f64], u: &mut [f64]) {
        match self {
            Target::Zero => u.fill(0.0),
            Target::SquaredNorm { half } => {
                let k = if *half { 1.0 } else { 2.0 };
                for (ui, xi) in u.iter_mut().zip(x) {
                    *ui = k * xi;
                }
            }
            Target::Linear(a) => u.copy_from_slice(a),
            Target::NegatedCoordinate { index, .. } => {
                u.fill(0.0);
                u[*index] = -1.0;
            }
            Target::TotalVariation(g) => g.partials(x, u),
            Target::Fixed { direction, .. } => {
                for (ui, d) in u.iter_mut().zip(direction) {
                    *ui = -d;
                }
            }
        }
    }

    /// Writes the nonascending direction at `x` into `v`.
    pub(crate) fn direction_into(&self, x: &[f64], v: &mut [f64]) {
        match self {
            Target::Zero => v.fill(0.0),
            Target::Fixed { direction, .. } => v.copy_from_slice(direction),
            _ => {
                self.fill_partials(x, v);
                let len = norm(v);
                if len == 0.0 {
                    v.fill(0.0);
                } else {
                    for vi in v.iter_mut() {
                        *vi = -*vi / len;
                    }
                }
            }
        }
    }
}

/// Targets attached to contiguous coordinate blocks of one state vector.
///
/// For a plain feasibility problem this is a single block covering the whole
/// vector; for a split problem it is the x-space block followed by the
/// y-space subvectors.
#[derive(Debug, Clone)]
pub struct BlockTargets {
    blocks: Vec<(Range<usize>, Target)>,
    dim: usize,
}

impl BlockTargets {
    pub fn new(blocks: Vec<(Range<usize>, Target)>, dim: usize) -> Result<Self> {
        for (range, target) in &blocks {
            if range.end > dim || range.start > range.end {
                return Err(Error::Config(format!("target block {range:?} outside R^{dim}")));
            }
            target.check(range.len())?;
        }
        for (i, (a, _)) in blocks.iter().enumerate() {
            for (b, _) in &blocks[i + 1..] {
                if a.start < b.end && b.start < a.end {
                    return Err(Error::Config(format!("target blocks {a:?} and {b:?} overlap")));
                }
            }
        }
        Ok(Self { blocks, dim })
    }

    pub fn whole(target: Target, dim: usize) -> Result<Self> {
        Self::new(vec![(0..dim, target)], dim)
    }

    pub fn blocks(&self) -> &[(Range<usize>, Target)] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn all_zero(&self) -> bool {
        self.blocks.iter().all(|(_, t)| t.is_zero())
    }

    pub fn values(&self, z: &[f64]) -> Vec<f64> {
        self.blocks.iter().map(|(r, t)| t.value(&z[r.clone()])).collect()
    }
}
