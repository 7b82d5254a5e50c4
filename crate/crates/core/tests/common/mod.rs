//! Oracles and random instances shared by the property and acceptance tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use superiorization::convex_sets::{
    AffineGraphProjector, Ball, BoxSet, ConvexSet, HalfSpace, LabeledIntervalSet, ProductSet,
};
use superiorization::engines::{run_basic, run_superiorized_restarts, AlgorithmicOperator, RunConfig};
use superiorization::targets::{BlockTargets, Target};

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn project(set: &ConvexSet, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    set.project_in_place(&mut p).expect("dimension matches");
    p
}

/// Idempotence at `x`, nonexpansiveness on `(x, y)` and the variational
/// inequality `<x - Px, c - Px> <= 0` for the set point `c = P w`.
pub fn check_projection(set: &ConvexSet, x: &[f64], y: &[f64], w: &[f64]) -> Check {
    let px = project(set, x);
    let tol = |v: &[f64]| 1e-10 * (1.0 + norm(v));

    let ppx = project(set, &px);
    let drift = dist(&ppx, &px);
    if drift > tol(x) {
        return Err(format!("not idempotent: |P(Px) - Px| = {drift:e} at {x:?}"));
    }

    let py = project(set, y);
    let (lhs, rhs) = (dist(&px, &py), dist(x, y));
    if lhs > rhs + tol(x) + tol(y) {
        return Err(format!("expansive: |Px - Py| = {lhs} > |x - y| = {rhs}"));
    }

    let c = project(set, w);
    let r: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
    let s: Vec<f64> = c.iter().zip(&px).map(|(a, b)| a - b).collect();
    let ip = dot(&r, &s);
    if ip > 1e-9 * (1.0 + norm(x)) * (1.0 + norm(w)) {
        return Err(format!("not the nearest point: <x - Px, c - Px> = {ip:e}"));
    }
    Ok(())
}

/// `P_V z` from an orthonormal basis of `V = {(x, Ax)}`, i.e. of the range
/// of `[I; A]`, computed by QR.
pub fn graph_projection_oracle(a: &DMatrix<f64>, z: &[f64]) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut basis = DMatrix::zeros(n + m, n);
    basis.view_mut((0, 0), (n, n)).fill_with_identity();
    basis.view_mut((n, 0), (m, n)).copy_from(a);
    let q = basis.qr().q();
    let z = DVector::from_column_slice(z);
    (&q * (q.transpose() * z)).as_slice().to_vec()
}

/// Unit norm (or zero) and no increase over a short step.
pub fn check_direction(target: &Target, x: &[f64]) -> Check {
    let v = target.nonascending(x).map_err(|e| e.to_string())?;
    let len = v.norm();
    if len != 0.0 && (len - 1.0).abs() > 1e-12 {
        return Err(format!("direction norm {len}"));
    }
    let f0 = target.evaluate(x).map_err(|e| e.to_string())?;
    let scale = 1.0 + norm(x);
    for lambda in [1e-6 * scale, 1e-8 * scale] {
        let moved: Vec<f64> = x.iter().zip(v.iter()).map(|(a, b)| a + lambda * b).collect();
        let f1 = target.evaluate(&moved).map_err(|e| e.to_string())?;
        if f1 > f0 + 1e-13 * (1.0 + f0.abs()) {
            return Err(format!("ascends: phi {f0} -> {f1} with step {lambda:e}"));
        }
    }
    Ok(())
}

/// Smallest TV term on a full `side x side` grid stored row-major; the TV
/// function is differentiable at `z` when this is positive.
pub fn min_tv_term(side: usize, z: &[f64]) -> f64 {
    let mut least = f64::INFINITY;
    for s in 0..side {
        for t in 0..side {
            if s + 1 == side && t + 1 == side {
                continue;
            }
            let here = z[s * side + t];
            let d = if s + 1 < side {
                here - z[(s + 1) * side + t]
            } else {
                0.0
            };
            let r = if t + 1 < side { here - z[s * side + t + 1] } else { 0.0 };
            least = least.min((d * d + r * r).sqrt());
        }
    }
    least
}

/// `|u - u_fd| / |u|` with central differences of step `h`.
pub fn gradient_relative_error(target: &Target, z: &[f64], h: f64) -> f64 {
    let u = target.partials(z).expect("dimension matches");
    let mut err = 0.0;
    let mut p = z.to_vec();
    for i in 0..z.len() {
        p[i] = z[i] + h;
        let up = target.evaluate(&p).unwrap();
        p[i] = z[i] - h;
        let down = target.evaluate(&p).unwrap();
        p[i] = z[i];
        err += ((up - down) / (2.0 * h) - u[i]).powi(2);
    }
    err.sqrt() / u.norm()
}

/// A superiorized run with only zero targets must retrace the basic run
/// bit for bit.
pub fn check_zero_target_bisimulation(op: &AlgorithmicOperator, x0: &[f64], cfg: &RunConfig) -> Check {
    let targets = BlockTargets::whole(Target::Zero, op.dim()).map_err(|e| e.to_string())?;
    let basic = run_basic(op, &targets, x0, cfg).map_err(|e| e.to_string())?;
    let sup = run_superiorized_restarts(op, &targets, x0, cfg).map_err(|e| e.to_string())?;
    let iterates =
        |t: &superiorization::engines::IterationTrace| t.records.iter().map(|r| r.iterate.clone()).collect::<Vec<_>>();
    if basic.final_iterate != sup.final_iterate
        || basic.iterations != sup.iterations
        || iterates(&basic) != iterates(&sup)
    {
        return Err(format!(
            "diverged: {:?} vs {:?} after {} / {} iterations",
            basic.final_iterate, sup.final_iterate, basic.iterations, sup.iterations
        ));
    }
    Ok(())
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn nonzero_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = uniform_vec(rng, dim, 1.0);
        if norm(&v) > 1e-3 {
            return v;
        }
    }
}

pub fn random_halfspace(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    HalfSpace::new(nonzero_vec(rng, dim), rng.gen_range(-2.0..2.0))
        .unwrap()
        .into()
}

pub fn random_box(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|_| {
            let a: f64 = rng.gen_range(-3.0..3.0);
            let b: f64 = rng.gen_range(-3.0..3.0);
            (a.min(b), a.max(b))
        })
        .unzip();
    BoxSet::new(lo, hi).unwrap().into()
}

pub fn random_ball(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    Ball::new(uniform_vec(rng, dim, 3.0), rng.gen_range(0.0..3.0))
        .unwrap()
        .into()
}

pub fn random_labeled(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    let labels = rng.gen_range(1..4);
    let intervals = (0..labels)
        .map(|_| {
            let a: f64 = rng.gen_range(-3.0..3.0);
            (a, a + rng.gen_range(0.0..2.0))
        })
        .collect();
    let assign = (0..dim).map(|_| rng.gen_range(0..labels)).collect();
    LabeledIntervalSet::new(assign, intervals).unwrap().into()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0))
}

/// Graph of a random `m x n` matrix with `n + m = dim`.
pub fn random_graph(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    let n = rng.gen_range(1..dim);
    AffineGraphProjector::new(random_matrix(rng, dim - n, n))
        .unwrap()
        .into()
}

/// A half-space, box or ball on each of up to three coordinate blocks.
pub fn random_product(rng: &mut ChaCha8Rng, dim: usize) -> ConvexSet {
    let parts = rng.gen_range(1..=dim.min(3));
    let mut sizes = Vec::new();
    let mut left = dim;
    for p in (1..parts).rev() {
        let take = rng.gen_range(1..=left - p);
        sizes.push(take);
        left -= take;
    }
    sizes.push(left);
    let factors = sizes
        .into_iter()
        .map(|d| match rng.gen_range(0..3) {
            0 => random_halfspace(rng, d),
            1 => random_box(rng, d),
            _ => random_ball(rng, d),
        })
        .collect();
    ProductSet::new(factors).into()
}

pub type SetMaker = fn(&mut ChaCha8Rng, usize) -> ConvexSet;

pub const SET_KINDS: [(&str, SetMaker); 6] = [
    ("half_space", random_halfspace),
    ("box", random_box),
    ("ball", random_ball),
    ("labeled_intervals", random_labeled),
    ("affine_graph", random_graph),
    ("product", random_product),
];
