//! k-NN graphs with bilateral edge weights and the red/blue node partition.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::{is_finite, Point3};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;

/// Bandwidth of the distance term in the edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SigmaP {
    /// Mean edge length of the graph being built.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected weighted k-NN graph.
///
/// An edge `(i, j)` (stored with `i < j`) exists when either endpoint has the
/// other among its `k` nearest neighbors. Edges are sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    num_nodes: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    sigma_p: f64,
}

impl KnnGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// The k nearest neighbors of `node`, nearest first. Empty for nodes
    /// outside the subset a same-color graph was built over.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut degree = vec![0; self.num_nodes];
        for e in &self.edges {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        degree
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }
}

/// `exp(-|pi - pj|^2 / sigma^2) * cos^2(theta)` with `theta` the angle between
/// the two normals.
pub fn edge_weight(pi: &Point3, pj: &Point3, ni: &Point3, nj: &Point3, sigma_p: f64) -> f64 {
    let d2 = (pi - pj).norm_squared();
    let spatial = if d2 == 0.0 {
        1.0
    } else {
        libm::exp(-d2 / (sigma_p * sigma_p))
    };
    let denom = ni.norm_squared() * nj.norm_squared();
    let cos2 = if denom > 0.0 {
        let c = ni.dot(nj);
        (c * c / denom).min(1.0)
    } else {
        0.0
    };
    spatial * cos2
}

pub fn knn_graph(
    points: &[Point3],
    k: usize,
    sigma_p: SigmaP,
    normals: &[Point3],
) -> Result<KnnGraph> {
    let all: Vec<usize> = (0..points.len()).collect();
    subgraph_same_color(points, &all, k, sigma_p, normals)
}

/// k-NN graph restricted to `nodes`; edges and neighbor lists use indices of
/// the full cloud.
pub fn subgraph_same_color(
    points: &[Point3],
    nodes: &[usize],
    k: usize,
    sigma_p: SigmaP,
    normals: &[Point3],
) -> Result<KnnGraph> {
    if normals.len() != points.len() {
        return Err(Error::ShapeMismatch {
            what: "normals",
            expected: points.len(),
            found: normals.len(),
        });
    }
    if k == 0 || k >= nodes.len() {
        return Err(Error::InvalidK { k, n: nodes.len() });
    }
    if let Some(&index) = nodes.iter().find(|&&i| i >= points.len()) {
        return Err(Error::IndexOutOfRange {
            index,
            len: points.len(),
        });
    }
    if let Some(&index) = nodes.iter().find(|&&i| !is_finite(&normals[i])) {
        return Err(Error::NonFiniteNormal { index });
    }
    if let SigmaP::Fixed(s) = sigma_p {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter("sigma_p must be positive"));
        }
    }

    let local: Vec<Point3> = nodes.iter().map(|&i| points[i]).collect();
    let tree = KdTree::new(&local);
    let mut neighbors = vec![Vec::new(); points.len()];
    let mut pairs = BTreeSet::new();
    for (li, &gi) in nodes.iter().enumerate() {
        let found = tree.knn(&local[li], k, Some(li));
        neighbors[gi] = found.iter().map(|n| nodes[n.index]).collect();
        for n in found {
            let gj = nodes[n.index];
            pairs.insert((gi.min(gj), gi.max(gj)));
        }
    }

    let sigma = match sigma_p {
        SigmaP::Fixed(s) => s,
        SigmaP::Auto => {
            let total: f64 = pairs
                .iter()
                .map(|&(i, j)| (points[i] - points[j]).norm())
                .sum();
            let mean = total / pairs.len() as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        }
    };

    let edges = pairs
        .into_iter()
        .map(|(i, j)| Edge {
            i,
            j,
            weight: edge_weight(&points[i], &points[j], &normals[i], &normals[j], sigma),
        })
        .collect();

    Ok(KnnGraph {
        num_nodes: points.len(),
        edges,
        neighbors,
        sigma_p: sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Color {
    Red,
    Blue,
}

impl Color {
    pub fn opposite(self) -> Self {
        match self {
            Color::Red => Color::Blue,
            Color::Blue => Color::Red,
        }
    }
}

/// Disjoint red/blue cover of the graph nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartitePartition {
    colors: Vec<Color>,
}

impl BipartitePartition {
    pub fn from_colors(colors: Vec<Color>) -> Self {
        Self { colors }
    }

    pub fn color(&self, node: usize) -> Color {
        self.colors[node]
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn nodes(&self, color: Color) -> Vec<usize> {
        (0..self.colors.len())
            .filter(|&i| self.colors[i] == color)
            .collect()
    }

    pub fn red(&self) -> Vec<usize> {
        self.nodes(Color::Red)
    }

    pub fn blue(&self) -> Vec<usize> {
        self.nodes(Color::Blue)
    }

    pub fn swapped(&self) -> Self {
        Self {
            colors: self.colors.iter().map(|c| c.opposite()).collect(),
        }
    }

    /// Total weight of edges whose endpoints differ in color.
    pub fn cut_weight(&self, graph: &KnnGraph) -> f64 {
        graph
            .edges()
            .iter()
            .filter(|e| self.colors[e.i] != self.colors[e.j])
            .map(|e| e.weight)
            .sum()
    }

    /// Opposite-color nodes among the k nearest neighbors of `node`.
    pub fn opposite_neighbors(&self, graph: &KnnGraph, node: usize) -> usize {
        let c = self.colors[node];
        graph
            .neighbors(node)
            .iter()
            .filter(|&&j| self.colors[j] != c)
            .count()
    }
}

/// Minimum number of opposite-color k-NN neighbors each node needs so its
/// normal can be linearized.
pub const MIN_OPPOSITE_NEIGHBORS: usize = 2;

/// Greedy weighted max-cut coloring followed by a repair pass.
///
/// Nodes are visited in descending weighted degree and each takes the color
/// that cuts more weight (then more edges) to already colored neighbors. The
/// repair pass then flips single nodes, or pairs when no single flip helps,
/// while doing so strictly lowers the total shortfall of opposite-color k-NN
/// neighbors.
pub fn build_bipartite_partition(graph: &KnnGraph) -> Result<BipartitePartition> {
    let degree = graph.degrees();
    if let Some(node) = (0..graph.num_nodes()).find(|&i| degree[i] < 2) {
        return Err(Error::LowDegree {
            node,
            degree: degree[node],
        });
    }
    let mut partition = greedy_max_cut(graph);
    repair_opposite_neighbors(graph, &mut partition.colors);
    Ok(partition)
}

/// The greedy coloring alone, without the degree check or the repair pass.
pub fn greedy_max_cut(graph: &KnnGraph) -> BipartitePartition {
    let n = graph.num_nodes();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut weighted_degree = vec![0.0; n];
    for e in graph.edges() {
        adjacency[e.i].push((e.j, e.weight));
        adjacency[e.j].push((e.i, e.weight));
        weighted_degree[e.i] += e.weight;
        weighted_degree[e.j] += e.weight;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        weighted_degree[b]
            .total_cmp(&weighted_degree[a])
            .then(a.cmp(&b))
    });

    let mut colors: Vec<Option<Color>> = vec![None; n];
    for &v in &order {
        // (weight, count) cut by choosing red, then by choosing blue
        let mut red_cut = (0.0, 0usize);
        let mut blue_cut = (0.0, 0usize);
        for &(u, w) in &adjacency[v] {
            match colors[u] {
                Some(Color::Blue) => {
                    red_cut.0 += w;
                    red_cut.1 += 1;
                }
                Some(Color::Red) => {
                    blue_cut.0 += w;
                    blue_cut.1 += 1;
                }
                None => {}
            }
        }
        let pick_blue =
            blue_cut.0 > red_cut.0 || (blue_cut.0 == red_cut.0 && blue_cut.1 > red_cut.1);
        colors[v] = Some(if pick_blue { Color::Blue } else { Color::Red });
    }
    BipartitePartition {
        colors: colors
            .into_iter()
            .map(|c| c.unwrap_or(Color::Red))
            .collect(),
    }
}

fn shortfall(graph: &KnnGraph, colors: &[Color], node: usize) -> usize {
    let c = colors[node];
    let opposite = graph
        .neighbors(node)
        .iter()
        .filter(|&&j| colors[j] != c)
        .count();
    MIN_OPPOSITE_NEIGHBORS.saturating_sub(opposite)
}

fn repair_opposite_neighbors(graph: &KnnGraph, colors: &mut [Color]) {
    let n = colors.len();
    // nodes whose k-NN list contains a given node
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        for &u in graph.neighbors(v) {
            reverse[u].push(v);
        }
    }
    let affected = |x: usize| -> BTreeSet<usize> {
        let mut set: BTreeSet<usize> = reverse[x].iter().copied().collect();
        set.insert(x);
        set
    };

    let total = |colors: &[Color], nodes: &BTreeSet<usize>| -> usize {
        nodes.iter().map(|&u| shortfall(graph, colors, u)).sum()
    };
    loop {
        let mut improved = false;
        for v in 0..n {
            if shortfall(graph, colors, v) == 0 {
                continue;
            }
            let mut candidates = vec![v];
            candidates.extend(
                graph
                    .neighbors(v)
                    .iter()
                    .copied()
                    .filter(|&u| colors[u] == colors[v]),
            );
            let mut best: Option<(usize, usize)> = None;
            for &x in &candidates {
                let touched = affected(x);
                let before = total(colors, &touched);
                colors[x] = colors[x].opposite();
                let after = total(colors, &touched);
                colors[x] = colors[x].opposite();
                if after < before && best.is_none_or(|(gain, _)| before - after > gain) {
                    best = Some((before - after, x));
                }
            }
            if let Some((_, x)) = best {
                colors[x] = colors[x].opposite();
                improved = true;
            }
        }
        if improved {
            continue;
        }
        // no single flip helps: try flipping a candidate together with one of
        // the nodes around it
        for v in 0..n {
            if shortfall(graph, colors, v) == 0 {
                continue;
            }
            let mut candidates = vec![v];
            candidates.extend(
                graph
                    .neighbors(v)
                    .iter()
                    .copied()
                    .filter(|&u| colors[u] == colors[v]),
            );
            'search: for &x in &candidates {
                let mut partners: BTreeSet<usize> = reverse[x].iter().copied().collect();
                partners.extend(graph.neighbors(x).iter().copied());
                partners.extend(graph.neighbors(v).iter().copied());
                partners.remove(&x);
                for &y in &partners {
                    let mut touched = affected(x);
                    touched.extend(affected(y));
                    let before = total(colors, &touched);
                    colors[x] = colors[x].opposite();
                    colors[y] = colors[y].opposite();
                    if total(colors, &touched) < before {
                        improved = true;
                        break 'search;
                    }
                    colors[x] = colors[x].opposite();
                    colors[y] = colors[y].opposite();
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Groups the k-NN lists of `graph` by color: for every node, its
/// opposite-color neighbors in nearest-first order.
pub fn opposite_color_neighbors(
    graph: &KnnGraph,
    partition: &BipartitePartition,
) -> BTreeMap<usize, Vec<usize>> {
    (0..graph.num_nodes())
        .map(|v| {
            let c = partition.color(v);
            let list = graph
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&u| partition.color(u) != c)
                .collect();
            (v, list)
        })
        .collect()
}
