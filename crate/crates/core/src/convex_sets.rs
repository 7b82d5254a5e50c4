//! Closed convex sets and their exact orthogonal projections.
//!
//! Every set works on plain `f64` slices internally so that product sets can
//! project factor by factor without copying. The public entry points take
//! `DVector<f64>` and check dimensions.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, DVectorView, Dyn};

use crate::error::{check_dim, Error, Result};

/// Relative membership tolerance: `x` belongs to a set when its distance is
/// at most `1e-9 * (1 + |x|)`.
pub fn feasibility_tolerance(x: &[f64]) -> f64 {
    1e-9 * (1.0 + norm(x))
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `{x : <normal, x> <= offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: Vec<f64>,
    offset: f64,
    normal_sq: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.iter().chain([&offset]).any(|v| !v.is_finite()) {
            return Err(Error::Argument("half-space data must be finite".into()));
        }
        let normal_sq = dot(&normal, &normal);
        if normal_sq == 0.0 {
            return Err(Error::Argument("half-space normal must be nonzero".into()));
        }
        Ok(Self {
            normal,
            offset,
            normal_sq,
        })
    }

    /// `{x : <normal, x> >= bound}`, stored as `<-normal, x> <= -bound`.
    pub fn at_least(normal: Vec<f64>, bound: f64) -> Result<Self> {
        Self::new(normal.into_iter().map(|v| -v).collect(), -bound)
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    fn project_slice(&self, x: &mut [f64]) {
        let excess = dot(&self.normal, x) - self.offset;
        if excess > 0.0 {
            let scale = excess / self.normal_sq;
            for (xi, ci) in x.iter_mut().zip(&self.normal) {
                *xi -= scale * ci;
            }
        }
    }
}

/// Coordinate-wise bounds; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Argument(format!(
                    "box bounds invalid at coordinate {i}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project_slice(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "ball needs a finite center and positive radius, got radius {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn project_slice(&self, x: &mut [f64]) {
        let dist = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        if dist > self.radius {
            let scale = self.radius / dist;
            for (xi, ci) in x.iter_mut().zip(&self.center) {
                *xi = ci + scale * (*xi - ci);
            }
        }
    }
}

/// Each coordinate carries a label, and each label an interval. Used for
/// dose bounds where organ and tumor pixels have different windows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledIntervalSet {
    labels: Vec<usize>,
    intervals: Vec<(f64, f64)>,
}

impl LabeledIntervalSet {
    pub fn new(labels: Vec<usize>, intervals: Vec<(f64, f64)>) -> Result<Self> {
        for (l, &(lo, hi)) in intervals.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Config(format!(
                    "interval for label {l} is invalid: [{lo}, {hi}]"
                )));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= intervals.len()) {
            return Err(Error::Config(format!(
                "label {bad} has no interval ({} intervals given)",
                intervals.len()
            )));
        }
        Ok(Self { labels, intervals })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    fn project_slice(&self, y: &mut [f64]) {
        for (yi, &l) in y.iter_mut().zip(&self.labels) {
            let (lo, hi) = self.intervals[l];
            *yi = yi.clamp(lo, hi);
        }
    }
}

/// Orthogonal projector onto the graph `V = {(x, y) : A x = y}`.
///
/// With `Z = [A, -I]`, `V` is the null space of `Z` and the projection is
/// `z - Z^T (Z Z^T)^{-1} Z z`. `Z Z^T = A A^T + I` is factored once.
#[derive(Debug, Clone)]
pub struct AffineGraphProjector {
    a: DMatrix<f64>,
    gram: Cholesky<f64, Dyn>,
}

impl AffineGraphProjector {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("matrix has non-finite entries".into()));
        }
        let mut zzt = &a * a.transpose();
        for i in 0..zzt.nrows() {
            zzt[(i, i)] += 1.0;
        }
        let gram = Cholesky::new(zzt).ok_or_else(|| Error::Argument("A A^T + I is not positive definite".into()))?;
        Ok(Self { a, gram })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `Z Z^T = A A^T + I`, reconstructed from the cached factor.
    pub fn gram(&self) -> DMatrix<f64> {
        let l = self.gram.l();
        &l * l.transpose()
    }

    pub fn x_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn y_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x_dim() + self.y_dim()
    }

    /// Residual `A x - y` of a stacked point.
    pub fn residual(&self, z: &[f64]) -> DVector<f64> {
        let n = self.x_dim();
        let x = DVectorView::from_slice(&z[..n], n);
        let y = DVectorView::from_slice(&z[n..], self.y_dim());
        &self.a * x - y
    }

    fn project_slice(&self, z: &mut [f64]) {
        let n = self.x_dim();
        let w = self.gram.solve(&self.residual(z));
        let correction = self.a.tr_mul(&w);
        for (zi, ci) in z[..n].iter_mut().zip(correction.iter()) {
            *zi -= ci;
        }
        for (zi, wi) in z[n..].iter_mut().zip(w.iter()) {
            *zi += wi;
        }
    }
}

/// Cartesian product of sets over contiguous coordinate ranges.
#[derive(Debug, Clone)]
pub struct ProductSet {
    factors: Vec<(ConvexSet, Range<usize>)>,
    dim: usize,
}

impl ProductSet {
    /// Factors are laid out in order; ranges follow from each factor's dimension.
    pub fn new(factors: Vec<ConvexSet>) -> Self {
        let mut start = 0;
        let factors = factors
            .into_iter()
            .map(|set| {
                let range = start..start + set.dim();
                start = range.end;
                (set, range)
            })
            .collect();
        Self { factors, dim: start }
    }

    /// Explicit ranges; they must be disjoint, match each factor's dimension
    /// and cover `0..dim` exactly.
    pub fn with_ranges(factors: Vec<(ConvexSet, Range<usize>)>, dim: usize) -> Result<Self> {
        let mut covered = vec![false; dim];
        for (set, range) in &factors {
            if range.end > dim || range.len() != set.dim() {
                return Err(Error::Config(format!(
                    "factor range {range:?} does not fit a set of dimension {} in R^{dim}",
                    set.dim()
                )));
            }
            for c in &mut covered[range.clone()] {
                if *c {
                    return Err(Error::Config(format!("factor range {range:?} overlaps")));
                }
                *c = true;
            }
        }
        if let Some(gap) = covered.iter().position(|c| !c) {
            return Err(Error::Config(format!("coordinate {gap} not covered by any factor")));
        }
        Ok(Self { factors, dim })
    }

    pub fn factors(&self) -> &[(ConvexSet, Range<usize>)] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn project_slice(&self, z: &mut [f64]) {
        for (set, range) in &self.factors {
            set.project_slice(&mut z[range.clone()]);
        }
    }
}

#[derive(Debug, Clone)]
pub enum ConvexSet {
    /// The whole space `R^d`; its projection is the identity.
    Whole(usize),
    HalfSpace(HalfSpace),
    Box(BoxSet),
    Ball(Ball),
    LabeledIntervals(LabeledIntervalSet),
    AffineGraph(Arc<AffineGraphProjector>),
    Product(ProductSet),
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Whole(d) => *d,
            ConvexSet::HalfSpace(h) => h.dim(),
            ConvexSet::Box(b) => b.dim(),
            ConvexSet::Ball(b) => b.dim(),
            ConvexSet::LabeledIntervals(s) => s.dim(),
            ConvexSet::AffineGraph(p) => p.dim(),
            ConvexSet::Product(p) => p.dim(),
        }
    }

    /// Projects in place; the caller guarantees `x.len() == self.dim()`.
    pub(crate) fn project_slice(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            ConvexSet::Whole(_) => {}
            ConvexSet::HalfSpace(h) => h.project_slice(x),
            ConvexSet::Box(b) => b.project_slice(x),
            ConvexSet::Ball(b) => b.project_slice(x),
            ConvexSet::LabeledIntervals(s) => s.project_slice(x),
            ConvexSet::AffineGraph(p) => p.project_slice(x),
            ConvexSet::Product(p) => p.project_slice(x),
        }
    }

    pub fn project_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        self.project_slice(x);
        Ok(())
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = x.clone();
        self.project_in_place(out.as_mut_slice())?;
        Ok(out)
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.distance_slice(x))
    }

    /// Distance without dimension check; closed forms where available.
    pub(crate) fn distance_slice(&self, x: &[f64]) -> f64 {
        match self {
            ConvexSet::Whole(_) => 0.0,
            ConvexSet::HalfSpace(h) => {
                let excess = dot(&h.normal, x) - h.offset;
                if excess > 0.0 {
                    excess / h.normal_sq.sqrt()
                } else {
                    0.0
                }
            }
            ConvexSet::Box(b) => x
                .iter()
                .zip(&b.lower)
                .zip(&b.upper)
                .map(|((v, lo), hi)| {
                    let d = v - v.clamp(*lo, *hi);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            ConvexSet::Product(p) => p
                .factors
                .iter()
                .map(|(set, range)| {
                    let d = set.distance_slice(&x[range.clone()]);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            _ => {
                let mut p = x.to_vec();
                self.project_slice(&mut p);
                x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.distance(x)? <= feasibility_tolerance(x))
    }
}

impl From<HalfSpace> for ConvexSet {
    fn from(h: HalfSpace) -> Self {
        ConvexSet::HalfSpace(h)
    }
}

impl From<BoxSet> for ConvexSet {
    fn from(b: BoxSet) -> Self {
        ConvexSet::Box(b)
    }
}

impl From<Ball> for ConvexSet {
    fn from(b: Ball) -> Self {
        ConvexSet::Ball(b)
    }
}

impl From<LabeledIntervalSet> for ConvexSet {
    fn from(s: LabeledIntervalSet) -> Self {
        ConvexSet::LabeledIntervals(s)
    }
}

impl From<AffineGraphProjector> for ConvexSet {
    fn from(p: AffineGraphProjector) -> Self {
        ConvexSet::AffineGraph(Arc::new(p))
    }
}

impl From<ProductSet> for ConvexSet {
    fn from(p: ProductSet) -> Self {
        ConvexSet::Product(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn assert_vec(actual: &DVector<f64>, expected: &[f64], eps: f64) {
        assert_eq!(actual.len(), expected.len());
        for (a, e) in actual.iter().zip(expected) {
            assert_abs_diff_eq!(*a, *e, epsilon = eps);
        }
    }

    #[test]
    fn halfspace_projection() {
        let a: ConvexSet = HalfSpace::at_least(vec![1.0, 1.0], 1.0).unwrap().into();
        assert_vec(&a.project(&dvector![0.3, 0.0]).unwrap(), &[0.65, 0.35], 1e-15);
        assert_vec(&a.project(&dvector![1.0, 1.0]).unwrap(), &[1.0, 1.0], 0.0);

        let b: ConvexSet = HalfSpace::new(vec![1.0, -1.0], 0.0).unwrap().into();
        assert_vec(&b.project(&dvector![0.65, 0.35]).unwrap(), &[0.5, 0.5], 1e-15);
    }

    #[test]
    fn halfspace_rejects_zero_normal_and_bad_dims() {
        assert!(matches!(HalfSpace::new(vec![0.0, 0.0], 1.0), Err(Error::Argument(_))));
        let h: ConvexSet = HalfSpace::new(vec![1.0, 0.0], 0.0).unwrap().into();
        assert!(matches!(
            h.project(&dvector![1.0, 2.0, 3.0]),
            Err(Error::Dimension { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn box_projection() {
        let b: ConvexSet = BoxSet::uniform(2, 0.0, 1.0).unwrap().into();
        assert_vec(&b.project(&dvector![2.0, -1.0]).unwrap(), &[1.0, 0.0], 0.0);
        assert_vec(&b.project(&dvector![0.5, 0.5]).unwrap(), &[0.5, 0.5], 0.0);
        let half_line: ConvexSet = BoxSet::uniform(1, 0.0, f64::INFINITY).unwrap().into();
        assert_vec(&half_line.project(&dvector![-3.0]).unwrap(), &[0.0], 0.0);
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn ball_projection() {
        let unit: ConvexSet = Ball::new(vec![0.0, 0.0], 1.0).unwrap().into();
        assert_vec(&unit.project(&dvector![2.0, 0.0]).unwrap(), &[1.0, 0.0], 0.0);
        assert_vec(&unit.project(&dvector![0.3, 0.4]).unwrap(), &[0.3, 0.4], 0.0);
        let shifted: ConvexSet = Ball::new(vec![1.0, 1.0], 2.0).unwrap().into();
        assert_vec(&shifted.project(&dvector![1.0, 4.0]).unwrap(), &[1.0, 3.0], 1e-15);
        assert!(Ball::new(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn labeled_interval_projection() {
        let all_organ: ConvexSet = LabeledIntervalSet::new(vec![0; 3], vec![(0.0, 10.0)]).unwrap().into();
        assert_vec(
            &all_organ.project(&dvector![12.0, -1.0, 5.0]).unwrap(),
            &[10.0, 0.0, 5.0],
            0.0,
        );
        assert_vec(
            &all_organ.project(&dvector![1.0, 2.0, 3.0]).unwrap(),
            &[1.0, 2.0, 3.0],
            0.0,
        );
        // label 0 = organ [0, 15], label 1 = tumor [10, 40]
        let mixed: ConvexSet = LabeledIntervalSet::new(vec![1, 0], vec![(0.0, 15.0), (10.0, 40.0)])
            .unwrap()
            .into();
        assert_vec(&mixed.project(&dvector![8.0, 20.0]).unwrap(), &[10.0, 15.0], 0.0);
    }

    #[test]
    fn labeled_interval_unknown_label_is_config_error() {
        assert!(matches!(
            LabeledIntervalSet::new(vec![0, 2], vec![(0.0, 1.0)]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn affine_graph_gram() {
        let one = AffineGraphProjector::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_abs_diff_eq!(one.gram()[(0, 0)], 2.0, epsilon = 1e-14);

        let id = AffineGraphProjector::new(DMatrix::identity(2, 2)).unwrap();
        assert!((id.gram() - DMatrix::identity(2, 2) * 2.0).abs().max() < 1e-14);

        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let p = AffineGraphProjector::new(rot).unwrap();
        assert!((p.gram() - DMatrix::identity(2, 2) * 2.0).abs().max() < 1e-14);

        assert!(AffineGraphProjector::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn affine_graph_projection() {
        let diag: ConvexSet = AffineGraphProjector::new(DMatrix::identity(1, 1)).unwrap().into();
        assert_vec(&diag.project(&dvector![3.0, 1.0]).unwrap(), &[2.0, 2.0], 1e-15);
        assert_vec(&diag.project(&dvector![4.0, 4.0]).unwrap(), &[4.0, 4.0], 0.0);

        let two: ConvexSet = AffineGraphProjector::new(DMatrix::from_element(1, 1, 2.0))
            .unwrap()
            .into();
        assert_vec(&two.project(&dvector![1.0, 0.0]).unwrap(), &[0.2, 0.4], 1e-15);
    }

    #[test]
    fn product_projection() {
        let p: ConvexSet = ProductSet::new(vec![
            Ball::new(vec![0.0, 0.0], 1.0).unwrap().into(),
            BoxSet::uniform(1, 0.0, 1.0).unwrap().into(),
        ])
        .into();
        assert_vec(&p.project(&dvector![2.0, 0.0, 2.0]).unwrap(), &[1.0, 0.0, 1.0], 0.0);

        let whole: ConvexSet = ProductSet::new(vec![ConvexSet::Whole(2), ConvexSet::Whole(3)]).into();
        let z = dvector![1.0, -2.0, 3.0, 4.0, 5.0];
        assert_eq!(whole.project(&z).unwrap(), z);

        let halves: ConvexSet = ProductSet::new(vec![
            HalfSpace::new(vec![1.0, 0.0], 0.0).unwrap().into(),
            HalfSpace::at_least(vec![1.0, 0.0], 0.0).unwrap().into(),
        ])
        .into();
        assert_vec(
            &halves.project(&dvector![1.0, 0.0, -1.0, 0.0]).unwrap(),
            &[0.0, 0.0, 0.0, 0.0],
            0.0,
        );
    }

    #[test]
    fn product_ranges_must_partition() {
        let ball: ConvexSet = Ball::new(vec![0.0], 1.0).unwrap().into();
        let gap = ProductSet::with_ranges(vec![(ball.clone(), 0..1)], 2);
        assert!(matches!(gap, Err(Error::Config(_))));
        let overlap = ProductSet::with_ranges(vec![(ball.clone(), 0..1), (ConvexSet::Whole(2), 0..2)], 2);
        assert!(matches!(overlap, Err(Error::Config(_))));
        let ok = ProductSet::with_ranges(vec![(ball.clone(), 1..2), (ConvexSet::Whole(1), 0..1)], 2).unwrap();
        let z: ConvexSet = ok.into();
        assert_vec(&z.project(&dvector![5.0, 5.0]).unwrap(), &[5.0, 1.0], 0.0);
    }

    #[test]
    fn distances() {
        let unit: ConvexSet = Ball::new(vec![0.0, 0.0], 1.0).unwrap().into();
        assert_abs_diff_eq!(unit.distance(&[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(unit.distance(&[0.1, 0.2]).unwrap(), 0.0);
        assert!(unit.contains(&[0.6, 0.8]).unwrap());
        let b: ConvexSet = BoxSet::uniform(2, 0.0, 1.0).unwrap().into();
        assert_abs_diff_eq!(b.distance(&[2.0, 2.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    }
}
