//! Envelope Cholesky factorization of a symmetric block-sparse matrix with
//! 3x3 blocks, ordered by reverse Cuthill-McKee to keep the profile narrow.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Matrix3;

/// Entry cap for the stored envelope; larger systems are left to the caller.
const MAX_ENVELOPE: usize = 40_000_000;

/// Reverse Cuthill-McKee order of the nodes of `adjacency`; `order[new] = old`.
pub(crate) fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree = |v: usize| adjacency[v].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree(v), v));

    let bfs = |root: usize, visited: &mut [bool], order: &mut Vec<usize>| -> usize {
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&u| !visited[u])
                .collect();
            next.sort_by_key(|&u| (degree(u), u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
        // the last node reached lies on the deepest level
        order[order.len() - 1]
    };

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // one extra sweep from the far end gives a pseudo-peripheral root
        let begin = order.len();
        let far = bfs(seed, &mut visited, &mut order);
        for &v in &order[begin..] {
            visited[v] = false;
        }
        order.truncate(begin);
        bfs(far, &mut visited, &mut order);
    }
    order.reverse();
    order
}

/// Lower-triangular envelope factor `L` with `L L^T = P A P^T`.
#[derive(Debug, Clone)]
pub(crate) struct SkylineCholesky {
    /// `perm[new_dof] = old_dof`.
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors `sum of blocks + shift * I`. `blocks` lists `(a, b, M)` with
    /// `a <= b`, meaning `M` at block `(a, b)` and `M^T` at `(b, a)`;
    /// repeated positions accumulate. Returns `None` when the matrix is not
    /// numerically positive definite or the envelope is too large.
    pub(crate) fn factor(
        num_nodes: usize,
        blocks: &[(usize, usize, Matrix3<f64>)],
        shift: f64,
    ) -> Option<Self> {
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b, _) in blocks {
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let order = reverse_cuthill_mckee(&adjacency);
        let mut rank = vec![0; num_nodes];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }

        let n = 3 * num_nodes;
        let mut first_node: Vec<usize> = (0..num_nodes).collect();
        for (old, list) in adjacency.iter().enumerate() {
            let r = rank[old];
            for &u in list {
                first_node[r] = first_node[r].min(rank[u]);
            }
        }
        let mut first = vec![0; n];
        let mut start = vec![0; n + 1];
        for row in 0..n {
            first[row] = 3 * first_node[row / 3];
            start[row + 1] = start[row] + (row + 1 - first[row]);
        }
        if start[n] > MAX_ENVELOPE {
            return None;
        }
        let mut data = vec![0.0; start[n]];
        let mut add = |row: usize, col: usize, value: f64| {
            let (row, col) = if row >= col { (row, col) } else { (col, row) };
            data[start[row] + col - first[row]] += value;
        };
        for &(a, b, m) in blocks {
            let (ra, rb) = (rank[a], rank[b]);
            for r in 0..3 {
                for c in 0..3 {
                    if a == b {
                        if r >= c {
                            add(3 * ra + r, 3 * ra + c, m[(r, c)]);
                        }
                    } else {
                        add(3 * ra + r, 3 * rb + c, m[(r, c)]);
                    }
                }
            }
        }
        for row in 0..n {
            data[start[row] + row - first[row]] += shift;
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut sum = data[start[i] + j - fi];
                let ri = start[i] - fi;
                let rj = start[j] - fj;
                for k in lo..j {
                    sum -= data[ri + k] * data[rj + k];
                }
                if j == i {
                    if !(sum > 0.0) {
                        return None;
                    }
                    data[ri + i] = libm::sqrt(sum);
                } else {
                    data[ri + j] = sum / data[rj + j];
                }
            }
        }

        let perm = order
            .iter()
            .flat_map(|&old| [3 * old, 3 * old + 1, 3 * old + 2])
            .collect();
        Some(Self {
            perm,
            first,
            start,
            data,
        })
    }

    /// Off-diagonal entries of row `i` inside the envelope, and its diagonal.
    fn row(&self, i: usize) -> (&[f64], f64) {
        let start = self.start[i];
        let len = i - self.first[i];
        (&self.data[start..start + len], self.data[start + len])
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let (row, diag) = self.row(i);
            let dot: f64 = row
                .iter()
                .zip(&y[self.first[i]..i])
                .map(|(l, v)| l * v)
                .sum();
            y[i] = (y[i] - dot) / diag;
        }
        for i in (0..n).rev() {
            let (row, diag) = self.row(i);
            y[i] /= diag;
            let xi = y[i];
            for (v, l) in y[self.first[i]..i].iter_mut().zip(row) {
                *v -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
