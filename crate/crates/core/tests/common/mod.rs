#![allow(dead_code)]

use gtvsr_core::normals::{EdgeBlock, NormalDifferenceOperator};
use gtvsr_core::solver::SamplingConstraint;
use gtvsr_core::Point3;
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;

pub fn random_matrix(rng: &mut impl Rng) -> Matrix3<f64> {
    Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_point(rng: &mut impl Rng, range: f64) -> Point3 {
    Point3::new(
        rng.gen_range(-range..range),
        rng.gen_range(-range..range),
        rng.gen_range(-range..range),
    )
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random operator over `n` nodes where every node touches at least one edge.
pub fn random_operator(
    rng: &mut impl Rng,
    n: usize,
    extra_edges: usize,
) -> NormalDifferenceOperator {
    let mut pairs = Vec::new();
    for i in 0..n {
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        pairs.push((i.min(j), i.max(j)));
    }
    for _ in 0..extra_edges {
        let i = rng.gen_range(0..n);
        let j = (i + rng.gen_range(1..n)) % n;
        pairs.push((i.min(j), i.max(j)));
    }
    pairs.sort_unstable();
    pairs.dedup();
    let blocks = pairs
        .into_iter()
        .map(|(i, j)| EdgeBlock {
            i,
            j,
            left: random_matrix(rng),
            right: random_matrix(rng),
            offset: random_point(rng, 1.0),
            weight: rng.gen_range(0.05..1.0),
        })
        .collect();
    NormalDifferenceOperator::from_blocks(n, blocks).unwrap()
}

pub fn random_constraint(rng: &mut impl Rng, n: usize, anchors: usize) -> SamplingConstraint {
    let mut cols: Vec<usize> = (0..n).collect();
    for i in 0..anchors {
        let j = rng.gen_range(i..n);
        cols.swap(i, j);
    }
    let mut chosen: Vec<usize> = cols[..anchors].to_vec();
    chosen.sort_unstable();
    let pairs: Vec<(usize, Point3)> = chosen
        .into_iter()
        .map(|c| (c, random_point(rng, 1.0)))
        .collect();
    SamplingConstraint::new(n, &pairs).unwrap()
}

/// Dense `B` (3|E| x 3N).
pub fn dense_b(op: &NormalDifferenceOperator) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(3 * op.num_edges(), 3 * op.num_nodes());
    for (e, block) in op.blocks().iter().enumerate() {
        b.view_mut((3 * e, 3 * block.i), (3, 3))
            .copy_from(&block.left);
        b.view_mut((3 * e, 3 * block.j), (3, 3))
            .copy_from(&block.right);
    }
    b
}

/// Dense `C` (3M x 3N).
pub fn dense_c(constraint: &SamplingConstraint, n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(3 * constraint.len(), 3 * n);
    for (r, &col) in constraint.cols().iter().enumerate() {
        for d in 0..3 {
            c[(3 * r + d, 3 * col + d)] = 1.0;
        }
    }
    c
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let size: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / size.max(1e-300)
}
