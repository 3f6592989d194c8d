//! Surface normal estimation and the affine normal model used by the solver.
//!
//! With two fixed reference points `p_j`, `p_k` the (unnormalized) normal of
//! node `i` at position `x` is `(p_j - x) x (p_k - x)`, which expands to
//! `-skew(p_j - p_k) x + p_j x p_k` and is therefore affine in `x`. Freezing
//! the magnitude `s_i` and an orientation sign `sigma_i` at the current iterate
//! gives `n_i = A_i x + b_i`.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use nalgebra::Matrix3;

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::kdtree::{KdTree, Neighbor};
use crate::linalg::{self, skew};

/// Relative eigenvalue floor below which a neighborhood counts as rank
/// deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Sine of the angle below which two reference chords are treated as
/// collinear.
const COLLINEAR_TOLERANCE: f64 = 1e-8;

/// Plane-fit normal of `center`'s neighborhood: the eigenvector of the smallest
/// covariance eigenvalue. Errors when the covariance has rank below 2.
pub(crate) fn plane_normal(
    points: &[Point3],
    node: usize,
    neighborhood: &[usize],
) -> Result<Point3> {
    let count = (neighborhood.len() + 1) as f64;
    let mut mean = points[node];
    for &j in neighborhood {
        mean += points[j];
    }
    mean /= count;
    let mut cov = Matrix3::zeros();
    for p in core::iter::once(&points[node]).chain(neighborhood.iter().map(|&j| &points[j])) {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= count;
    let eigen = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let largest = eigen.eigenvalues[order[2]];
    let middle = eigen.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= RANK_TOLERANCE * largest {
        return Err(Error::DegenerateNeighborhood { node });
    }
    let n: Point3 = eigen.eigenvectors.column(order[0]).into_owned();
    Ok(canonical_sign(n.normalize()))
}

/// Flips `n` so its largest-magnitude component is positive.
fn canonical_sign(n: Point3) -> Point3 {
    let i = n.iamax();
    if n[i] < 0.0 {
        -n
    } else {
        n
    }
}

/// Unit normals from local plane fits over each point and its `k` nearest
/// neighbors, oriented consistently along a minimum spanning tree of the k-NN
/// graph.
pub fn estimate_normals(points: &[Point3], k: usize) -> Result<Vec<Point3>> {
    if k < 2 || k >= points.len() {
        return Err(Error::InvalidK { k, n: points.len() });
    }
    let tree = KdTree::new(points);
    let neighborhoods: Vec<Vec<usize>> = (0..points.len())
        .map(|i| {
            tree.knn(&points[i], k, Some(i))
                .into_iter()
                .map(|n| n.index)
                .collect()
        })
        .collect();
    let mut normals = Vec::with_capacity(points.len());
    for (i, hood) in neighborhoods.iter().enumerate() {
        normals.push(plane_normal(points, i, hood)?);
    }
    orient_along_spanning_tree(points, &neighborhoods, &mut normals);
    Ok(normals)
}

/// Flips each of `normals` that points away from the corresponding entry of
/// `reference`.
pub fn align_with(normals: &mut [Point3], reference: &[Point3]) {
    for (n, r) in normals.iter_mut().zip(reference) {
        if n.dot(r) < 0.0 {
            *n = -*n;
        }
    }
}

/// Prim's algorithm over the symmetric k-NN graph with cost
/// `1 - |n_i . n_j|`. Each component is rooted at its point farthest from the
/// cloud centroid, whose normal is turned outward.
fn orient_along_spanning_tree(
    points: &[Point3],
    neighborhoods: &[Vec<usize>],
    normals: &mut [Point3],
) {
    let n = points.len();
    let mut adjacency: Vec<Vec<usize>> = neighborhoods.to_vec();
    for (i, hood) in neighborhoods.iter().enumerate() {
        for &j in hood {
            adjacency[j].push(i);
        }
    }
    let centroid = points.iter().fold(Point3::zeros(), |acc, p| acc + p) / n as f64;
    let mut by_distance: Vec<usize> = (0..n).collect();
    by_distance.sort_by(|&a, &b| {
        let da = (points[a] - centroid).norm_squared();
        let db = (points[b] - centroid).norm_squared();
        db.total_cmp(&da).then(a.cmp(&b))
    });

    let mut visited = vec![false; n];
    for &root in &by_distance {
        if visited[root] {
            continue;
        }
        if normals[root].dot(&(points[root] - centroid)) < 0.0 {
            normals[root] = -normals[root];
        }
        visited[root] = true;
        let mut heap = BinaryHeap::new();
        let push = |heap: &mut BinaryHeap<Reverse<Neighbor>>,
                    normals: &[Point3],
                    from: usize,
                    to: usize| {
            let cost = 1.0 - normals[from].dot(&normals[to]).abs();
            // `index` packs (parent, child) so equal costs pop deterministically
            heap.push(Reverse(Neighbor {
                index: to * n + from,
                dist2: cost,
            }));
        };
        for &j in &adjacency[root] {
            push(&mut heap, normals, root, j);
        }
        while let Some(Reverse(item)) = heap.pop() {
            let (child, parent) = (item.index / n, item.index % n);
            if visited[child] {
                continue;
            }
            visited[child] = true;
            if normals[child].dot(&normals[parent]) < 0.0 {
                normals[child] = -normals[child];
            }
            for &j in &adjacency[child] {
                if !visited[j] {
                    push(&mut heap, normals, child, j);
                }
            }
        }
    }
}

/// Affine model `n_i(x) = A_i x + b_i` of one node's normal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedNormal {
    pub node: usize,
    pub a: Matrix3<f64>,
    pub b: Point3,
    /// Reference nodes `(j, k)`.
    pub refs: (usize, usize),
    /// Magnitude of the unnormalized normal at the linearization point.
    pub scale: f64,
    /// Orientation sign, +1 or -1.
    pub sign: f64,
}

impl LinearizedNormal {
    pub fn eval(&self, x: &Point3) -> Point3 {
        self.a * x + self.b
    }
}

/// Linearizes node `i`'s normal around its current position using the fixed
/// references `j` and `k`.
pub fn linearize_with_refs(
    points: &[Point3],
    node: usize,
    j: usize,
    k: usize,
    prev_normal: &Point3,
) -> Result<LinearizedNormal> {
    let (pi, pj, pk) = (points[node], points[j], points[k]);
    let (dj, dk) = (pj - pi, pk - pi);
    let raw = dj.cross(&dk);
    let scale = raw.norm();
    let lengths = dj.norm() * dk.norm();
    if j == k || !(lengths > 0.0) || scale <= COLLINEAR_TOLERANCE * lengths {
        return Err(Error::CollinearReferences { node });
    }
    let sign = if (raw / scale).dot(prev_normal) < 0.0 {
        -1.0
    } else {
        1.0
    };
    let factor = sign / scale;
    Ok(LinearizedNormal {
        node,
        a: -skew(&(pj - pk)) * factor,
        b: pj.cross(&pk) * factor,
        refs: (j, k),
        scale,
        sign,
    })
}

/// Linearizes using the nearest usable pair from `candidates` (opposite-color
/// neighbors, nearest first). Pairs are tried in order of the farther
/// member's rank, so `(0,1)` comes first, then `(0,2)`, `(1,2)`, `(0,3)`...
pub fn linearize_normal(
    points: &[Point3],
    node: usize,
    candidates: &[usize],
    prev_normal: &Point3,
) -> Result<LinearizedNormal> {
    if candidates.len() < 2 {
        return Err(Error::InsufficientReferences {
            node,
            available: candidates.len(),
        });
    }
    for second in 1..candidates.len() {
        for first in 0..second {
            match linearize_with_refs(
                points,
                node,
                candidates[first],
                candidates[second],
                prev_normal,
            ) {
                Err(Error::CollinearReferences { .. }) => continue,
                other => return other,
            }
        }
    }
    Err(Error::CollinearReferences { node })
}

/// Linearizations of the nodes being optimized, in column-block order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalLinearization {
    entries: Vec<LinearizedNormal>,
}

impl NormalLinearization {
    pub fn new(entries: Vec<LinearizedNormal>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[LinearizedNormal] {
        &self.entries
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.node).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One row block of the difference operator: `left * p_i + right * p_j + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBlock {
    /// Column blocks of the two endpoints.
    pub i: usize,
    pub j: usize,
    pub left: Matrix3<f64>,
    pub right: Matrix3<f64>,
    pub offset: Point3,
    pub weight: f64,
}

/// Sparse block operator `m = B p + v` mapping node coordinates to stacked
/// per-edge normal differences.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalDifferenceOperator {
    num_cols: usize,
    blocks: Vec<EdgeBlock>,
}

impl NormalDifferenceOperator {
    pub fn from_blocks(num_cols: usize, blocks: Vec<EdgeBlock>) -> Result<Self> {
        for b in &blocks {
            for index in [b.i, b.j] {
                if index >= num_cols {
                    return Err(Error::IndexOutOfRange {
                        index,
                        len: num_cols,
                    });
                }
            }
        }
        Ok(Self { num_cols, blocks })
    }

    /// Number of column blocks (optimized nodes).
    pub fn num_nodes(&self) -> usize {
        self.num_cols
    }

    pub fn num_edges(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[EdgeBlock] {
        &self.blocks
    }

    pub fn weights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.weight).collect()
    }

    /// `(i, j)` column pairs in row order.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.i, b.j)).collect()
    }

    /// Stacked `v`.
    pub fn offset(&self) -> Vec<f64> {
        let mut v = vec![0.0; 3 * self.blocks.len()];
        for (e, b) in self.blocks.iter().enumerate() {
            linalg::set_block(&mut v, e, &b.offset);
        }
        v
    }

    /// `B p`
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), 3 * self.num_cols);
        let mut out = vec![0.0; 3 * self.blocks.len()];
        for (e, b) in self.blocks.iter().enumerate() {
            let row = b.left * linalg::block(p, b.i) + b.right * linalg::block(p, b.j);
            linalg::set_block(&mut out, e, &row);
        }
        out
    }

    /// `B p + v`
    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        let mut out = self.apply(p);
        for (e, b) in self.blocks.iter().enumerate() {
            linalg::add_block(&mut out, e, &b.offset);
        }
        out
    }

    /// `B^T r`
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        debug_assert_eq!(r.len(), 3 * self.blocks.len());
        let mut out = vec![0.0; 3 * self.num_cols];
        for (e, b) in self.blocks.iter().enumerate() {
            let re = linalg::block(r, e);
            linalg::add_block(&mut out, b.i, &(b.left.transpose() * re));
            linalg::add_block(&mut out, b.j, &(b.right.transpose() * re));
        }
        out
    }

    /// Diagonal of `B^T B`.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; 3 * self.num_cols];
        for b in &self.blocks {
            for (col, m) in [(b.i, &b.left), (b.j, &b.right)] {
                for c in 0..3 {
                    diag[3 * col + c] += m.column(c).norm_squared();
                }
            }
        }
        diag
    }
}

/// Builds `B` and `v` over the edges of a same-color graph: the row block of
/// edge `(i, j)` holds `A_i` at `i`'s column block and `-A_j` at `j`'s, with
/// offset `b_i - b_j`.
pub fn assemble_difference_operator(
    graph: &KnnGraph,
    linearization: &NormalLinearization,
) -> Result<NormalDifferenceOperator> {
    let mut column = vec![usize::MAX; graph.num_nodes()];
    for (c, entry) in linearization.entries().iter().enumerate() {
        if entry.node >= column.len() {
            return Err(Error::IndexOutOfRange {
                index: entry.node,
                len: column.len(),
            });
        }
        column[entry.node] = c;
    }
    let entries = linearization.entries();
    let mut blocks = Vec::with_capacity(graph.edges().len());
    for e in graph.edges() {
        let (ci, cj) = (column[e.i], column[e.j]);
        if ci == usize::MAX {
            return Err(Error::MissingLinearization { node: e.i });
        }
        if cj == usize::MAX {
            return Err(Error::MissingLinearization { node: e.j });
        }
        let (li, lj) = (&entries[ci], &entries[cj]);
        blocks.push(EdgeBlock {
            i: ci,
            j: cj,
            left: li.a,
            right: -lj.a,
            offset: li.b - lj.b,
            weight: e.weight,
        });
    }
    NormalDifferenceOperator::from_blocks(entries.len(), blocks)
}

/// Weighted sum of per-edge l1 norms of stacked 3-vectors.
pub fn gtv(m: &[f64], weights: &[f64]) -> Result<f64> {
    if m.len() != 3 * weights.len() {
        return Err(Error::ShapeMismatch {
            what: "edge differences",
            expected: 3 * weights.len(),
            found: m.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(m.chunks_exact(3))
        .map(|(w, d)| w * (d[0].abs() + d[1].abs() + d[2].abs()))
        .sum())
}
