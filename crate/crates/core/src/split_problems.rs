//! Split minimization problems with subvector targets, and their
//! product-space reformulation.
//!
//! The state is `z = (x, y)` with `x` in `R^n` and `y` in `R^m`. Rows of `A`
//! are split into consecutive blocks `A_1, ..., A_B`, and `y^b = A_b x`
//! carries its own target.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::convex_sets::{AffineGraphProjector, ConvexSet, ProductSet};
use crate::engines::{AlgorithmicOperator, Proximity};
use crate::error::{check_dim, Error, Result};
use crate::targets::{BlockTargets, Target};

/// Consecutive row blocks of `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockView {
    offsets: Vec<usize>,
}

impl BlockView {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Config("at least one y-block is required".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for &s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Ok(Self { offsets })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Row range of block `b` inside `y`.
    pub fn range(&self, b: usize) -> Range<usize> {
        self.offsets[b]..self.offsets[b + 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SplitProblem {
    x_sets: Vec<ConvexSet>,
    y_sets: Vec<ConvexSet>,
    projector: Arc<AffineGraphProjector>,
    blocks: BlockView,
    x_target: Target,
    block_targets: Vec<Target>,
}

impl SplitProblem {
    pub fn new(
        x_sets: Vec<ConvexSet>,
        y_sets: Vec<ConvexSet>,
        a: DMatrix<f64>,
        partition: &[usize],
        x_target: Target,
        block_targets: Vec<Target>,
    ) -> Result<Self> {
        Self::with_projector(
            x_sets,
            y_sets,
            Arc::new(AffineGraphProjector::new(a)?),
            partition,
            x_target,
            block_targets,
        )
    }

    /// Reuses an already factored projector (large dose matrices).
    pub fn with_projector(
        x_sets: Vec<ConvexSet>,
        y_sets: Vec<ConvexSet>,
        projector: Arc<AffineGraphProjector>,
        partition: &[usize],
        x_target: Target,
        block_targets: Vec<Target>,
    ) -> Result<Self> {
        let (n, m) = (projector.x_dim(), projector.y_dim());
        if x_sets.is_empty() || y_sets.is_empty() {
            return Err(Error::Config("need at least one set in each space".into()));
        }
        for s in &x_sets {
            check_dim(n, s.dim())?;
        }
        for s in &y_sets {
            check_dim(m, s.dim())?;
        }
        let blocks = BlockView::new(partition)?;
        if blocks.total() != m {
            return Err(Error::Config(format!(
                "block partition {partition:?} sums to {}, but A has {m} rows",
                blocks.total()
            )));
        }
        if block_targets.len() != blocks.len() {
            return Err(Error::Config(format!(
                "{} block targets for {} blocks",
                block_targets.len(),
                blocks.len()
            )));
        }
        x_target.check(n)?;
        for (b, t) in block_targets.iter().enumerate() {
            t.check(blocks.range(b).len())?;
        }
        Ok(Self {
            x_sets,
            y_sets,
            projector,
            blocks,
            x_target,
            block_targets,
        })
    }

    pub fn x_dim(&self) -> usize {
        self.projector.x_dim()
    }

    pub fn y_dim(&self) -> usize {
        self.projector.y_dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.projector.matrix()
    }

    pub fn projector(&self) -> &Arc<AffineGraphProjector> {
        &self.projector
    }

    pub fn blocks(&self) -> &BlockView {
        &self.blocks
    }

    pub fn x_sets(&self) -> &[ConvexSet] {
        &self.x_sets
    }

    pub fn y_sets(&self) -> &[ConvexSet] {
        &self.y_sets
    }

    pub fn x_target(&self) -> &Target {
        &self.x_target
    }

    pub fn block_targets(&self) -> &[Target] {
        &self.block_targets
    }

    /// Same data with different targets.
    pub fn with_targets(&self, x_target: Target, block_targets: Vec<Target>) -> Result<Self> {
        Self::with_projector(
            self.x_sets.clone(),
            self.y_sets.clone(),
            self.projector.clone(),
            &self.blocks.sizes(),
            x_target,
            block_targets,
        )
    }

    /// `P_V o (P_{C_p} x P_{Q_p}) o ... o (P_{C_1} x P_{Q_1})`. The shorter
    /// family is padded at the end with whole-space factors.
    pub fn build_mssfp_operator(&self) -> AlgorithmicOperator {
        let (n, m) = (self.x_dim(), self.y_dim());
        let pairs = self.x_sets.len().max(self.y_sets.len());
        let mut steps: Vec<ConvexSet> = (0..pairs)
            .map(|i| {
                let c = self.x_sets.get(i).cloned().unwrap_or(ConvexSet::Whole(n));
                let q = self.y_sets.get(i).cloned().unwrap_or(ConvexSet::Whole(m));
                ProductSet::new(vec![c, q]).into()
            })
            .collect();
        steps.push(ConvexSet::AffineGraph(self.projector.clone()));
        AlgorithmicOperator::with_proximity(steps, n + m, self.proximity_function())
            .expect("factor dimensions were checked at construction")
    }

    /// Sum of distances of `x` to every `C_s` and of `y` to every `Q_t`.
    pub fn proximity_function(&self) -> Proximity {
        let (n, m) = (self.x_dim(), self.y_dim());
        let terms = self
            .x_sets
            .iter()
            .map(|s| (0..n, s.clone()))
            .chain(self.y_sets.iter().map(|s| (n..n + m, s.clone())))
            .collect();
        Proximity::new(terms).expect("set dimensions were checked at construction")
    }

    /// `(A_1 x, ..., A_B x)`, computed block by block from row views of `A`.
    pub fn block_image(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        check_dim(self.x_dim(), x.len())?;
        let xv = DVectorView::from_slice(x, x.len());
        let a = self.matrix();
        Ok((0..self.blocks.len())
            .map(|b| {
                let r = self.blocks.range(b);
                a.rows(r.start, r.len()) * xv
            })
            .collect())
    }

    /// `(x, A x)`.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = x.to_vec();
        for block in self.block_image(x)? {
            z.extend(block.iter());
        }
        Ok(z)
    }

    /// The x-target on `0..n`, then each block target on its y-range.
    pub fn targets(&self) -> BlockTargets {
        let n = self.x_dim();
        let mut blocks = vec![(0..n, self.x_target.clone())];
        for (b, t) in self.block_targets.iter().enumerate() {
            let r = self.blocks.range(b);
            blocks.push((n + r.start..n + r.end, t.clone()));
        }
        BlockTargets::new(blocks, n + self.y_dim()).expect("block ranges were checked")
    }
}

/// `(x, y) + eta (u, v)` direction part: returns `eta * (u, v^1, ..., v^B)`.
pub fn assemble_perturbation(
    x_dir: &[f64],
    block_dirs: &[Vec<f64>],
    blocks: &BlockView,
    eta: f64,
) -> Result<DVector<f64>> {
    check_dim(blocks.len(), block_dirs.len())?;
    for (b, d) in block_dirs.iter().enumerate() {
        check_dim(blocks.range(b).len(), d.len())?;
        if crate::convex_sets::norm(d) > 1.0 + 1e-12 {
            return Err(Error::Argument(format!("direction of block {b} has norm above 1")));
        }
    }
    let stacked = x_dir.iter().chain(block_dirs.iter().flatten()).map(|v| eta * v);
    Ok(DVector::from_iterator(x_dir.len() + blocks.total(), stacked))
}
