//! Exact k-nearest-neighbor search.
//!
//! Results are ordered by `(squared distance, index)`, so equidistant
//! neighbors always resolve to the smaller index.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::cloud::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<usize>,
}

/// A neighbor returned by a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
        };
        let n = tree.order.len();
        tree.build(0, n, 0);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let axis = depth % 3;
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        self.build(lo, mid, depth + 1);
        self.build(mid + 1, hi, depth + 1);
    }

    /// The `k` nearest points to `query`, nearest first. `exclude` drops one
    /// index from consideration (typically the query point itself).
    pub fn knn(&self, query: &Point3, k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        self.knn_filtered(query, k, |i| Some(i) != exclude)
    }

    /// Like [`KdTree::knn`] but only considers indices accepted by `keep`.
    pub fn knn_filtered<F: Fn(usize) -> bool>(
        &self,
        query: &Point3,
        k: usize,
        keep: F,
    ) -> Vec<Neighbor> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, self.order.len(), 0, query, k, &keep, &mut heap);
        heap.into_sorted_vec()
    }

    pub fn nearest(&self, query: &Point3) -> Option<Neighbor> {
        self.knn(query, 1, None).into_iter().next()
    }

    fn offer(&self, index: usize, query: &Point3, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        let candidate = Neighbor {
            index,
            dist2: (self.points[index] - query).norm_squared(),
        };
        if heap.len() < k {
            heap.push(candidate);
        } else if let Some(worst) = heap.peek() {
            if candidate < *worst {
                heap.pop();
                heap.push(candidate);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn search<F: Fn(usize) -> bool>(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        query: &Point3,
        k: usize,
        keep: &F,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        if hi - lo <= LEAF_SIZE {
            for &index in &self.order[lo..hi] {
                if keep(index) {
                    self.offer(index, query, k, heap);
                }
            }
            return;
        }
        let axis = depth % 3;
        let mid = (lo + hi) / 2;
        let pivot = self.order[mid];
        if keep(pivot) {
            self.offer(pivot, query, k, heap);
        }
        let diff = query[axis] - self.points[pivot][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, query, k, keep, heap);
        let must_visit = heap.len() < k || heap.peek().is_some_and(|w| diff * diff <= w.dist2);
        if must_visit {
            self.search(far.0, far.1, depth + 1, query, k, keep, heap);
        }
    }
}
