//! Interpolate, partition, then alternate ADMM solves over the red and blue
//! nodes.

use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};
use crate::graph::{
    build_bipartite_partition, knn_graph, subgraph_same_color, BipartitePartition, Color, KnnGraph,
    SigmaP,
};
use crate::interpolate::{interpolate, InterpolationResult};
use crate::kdtree::KdTree;
use crate::linalg;
use crate::normals::{
    align_with, assemble_difference_operator, estimate_normals, linearize_normal,
    NormalLinearization,
};

use super::admm::{admm_solve, AdmmDiagnostics, SamplingConstraint, WarmStart};
use super::SolverConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    AdmmNotConverged {
        outer: usize,
        color: Color,
        relative_residual: f64,
    },
    OuterNotConverged {
        relative_change: f64,
    },
    SkippedNeighborhoods(usize),
    /// A half-step failed; the result is the last completed iterate.
    Aborted(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorSolve {
    pub outer: usize,
    pub color: Color,
    pub nodes: usize,
    pub edges: usize,
    /// Largest distance between an original point and its observed position
    /// when ADMM stopped, before snapping.
    pub presnap_deviation: f64,
    pub diagnostics: AdmmDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefinementReport {
    pub solves: Vec<ColorSolve>,
    pub outer_iterations: usize,
    pub final_relative_change: f64,
    pub warnings: Vec<Warning>,
}

impl RefinementReport {
    /// True when no ADMM solve or the alternation stopped on its iteration cap.
    pub fn converged(&self) -> bool {
        !self.warnings.iter().any(|w| {
            matches!(
                w,
                Warning::AdmmNotConverged { .. }
                    | Warning::OuterNotConverged { .. }
                    | Warning::Aborted(_)
            )
        })
    }

    pub fn admm_iterations(&self) -> usize {
        self.solves.iter().map(|s| s.diagnostics.iterations()).sum()
    }

    pub fn max_presnap_deviation(&self) -> f64 {
        self.solves
            .iter()
            .map(|s| s.presnap_deviation)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superresolution {
    /// Refined cloud with the input points first, at their exact input
    /// coordinates, and per-point normals.
    pub cloud: PointCloud,
    /// Centroid interpolation before refinement.
    pub initial: InterpolationResult,
    pub partition: Option<BipartitePartition>,
    pub report: RefinementReport,
}

/// Upsamples `low_res` to `target_count` points.
pub fn superresolve(
    low_res: &PointCloud,
    target_count: usize,
    config: &SolverConfig,
) -> Result<Superresolution> {
    config.validate()?;
    if target_count < low_res.len() {
        return Err(Error::TargetBelowInput {
            target: target_count,
            input: low_res.len(),
        });
    }
    let initial = interpolate(low_res, Some(target_count), &config.interpolation)?;
    if target_count == low_res.len() {
        return Ok(Superresolution {
            cloud: low_res.clone(),
            initial,
            partition: None,
            report: RefinementReport::default(),
        });
    }
    refine(initial, config)
}

/// Opposite-color reference candidates of `node`, nearest first: its k-NN
/// opposite-color neighbors, or a wider search when `widen` is set.
fn reference_candidates(
    graph: &KnnGraph,
    partition: &BipartitePartition,
    tree: &KdTree,
    points: &[Point3],
    node: usize,
    widen: Option<usize>,
) -> Vec<usize> {
    let color = partition.color(node);
    match widen {
        None => graph
            .neighbors(node)
            .iter()
            .copied()
            .filter(|&j| partition.color(j) != color)
            .collect(),
        Some(count) => tree
            .knn_filtered(&points[node], count, |j| {
                j != node && partition.color(j) != color
            })
            .into_iter()
            .map(|n| n.index)
            .collect(),
    }
}

struct HalfStep<'a> {
    config: &'a SolverConfig,
    graph: &'a KnnGraph,
    partition: &'a BipartitePartition,
    /// Observed position of each full-resolution point, if it is an original.
    anchors: &'a [Option<Point3>],
}

impl HalfStep<'_> {
    /// Optimizes the nodes of `color` with the other color fixed. Returns the
    /// ADMM diagnostics and leaves every original point snapped to its
    /// observed position.
    fn run(
        &self,
        color: Color,
        outer: usize,
        points: &mut [Point3],
        normals: &[Point3],
        warm: &mut Option<WarmStart>,
    ) -> Result<ColorSolve> {
        let k = self.config.k;
        let nodes = self.partition.nodes(color);
        if nodes.len() < 2 {
            return Err(Error::InvalidK { k, n: nodes.len() });
        }
        let tree = KdTree::new(points);
        let mut entries = Vec::with_capacity(nodes.len());
        for &i in &nodes {
            let near = reference_candidates(self.graph, self.partition, &tree, points, i, None);
            let lin = match linearize_normal(points, i, &near, &normals[i]) {
                Ok(lin) => lin,
                Err(Error::CollinearReferences { .. } | Error::InsufficientReferences { .. }) => {
                    let wide = reference_candidates(
                        self.graph,
                        self.partition,
                        &tree,
                        points,
                        i,
                        Some(3 * k),
                    );
                    linearize_normal(points, i, &wide, &normals[i])?
                }
                Err(e) => return Err(e),
            };
            entries.push(lin);
        }
        let linearization = NormalLinearization::new(entries);
        let same = subgraph_same_color(
            points,
            &nodes,
            k.min(nodes.len() - 1),
            self.config.sigma_p,
            normals,
        )?;
        let op = assemble_difference_operator(&same, &linearization)?;

        let anchors: Vec<(usize, Point3)> = nodes
            .iter()
            .enumerate()
            .filter_map(|(c, &g)| self.anchors[g].map(|q| (c, q)))
            .collect();
        let constraint = SamplingConstraint::new(nodes.len(), &anchors)?;

        let mut p0 = vec![0.0; 3 * nodes.len()];
        for (c, &g) in nodes.iter().enumerate() {
            linalg::set_block(&mut p0, c, &points[g]);
        }
        let outcome = admm_solve(&op, &constraint, &p0, self.config, warm.as_ref())?;
        let presnap_deviation = constraint.max_deviation(&outcome.p);
        for (c, &g) in nodes.iter().enumerate() {
            points[g] = match self.anchors[g] {
                Some(q) => q,
                None => {
                    let step = linalg::block(&outcome.p, c) - points[g];
                    let len = step.norm();
                    match self.config.max_step {
                        Some(cap) if len > cap => points[g] + step * (cap / len),
                        _ => points[g] + step,
                    }
                }
            };
        }
        *warm = Some(outcome.warm_start(&op));
        Ok(ColorSolve {
            outer,
            color,
            nodes: nodes.len(),
            edges: op.num_edges(),
            presnap_deviation,
            diagnostics: outcome.diagnostics,
        })
    }
}

/// Coordinates centred on the centroid with the mean k-NN spacing as unit
/// length. Solving in these units keeps the normal-difference and anchor
/// constraints on comparable scales for any input size.
struct WorkingFrame {
    center: Point3,
    unit: f64,
}

impl WorkingFrame {
    fn new(points: &[Point3], k: usize, spacing_units: f64) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::InvalidK { k, n });
        }
        let center = points.iter().fold(Point3::zeros(), |acc, p| acc + p) / n as f64;
        let tree = KdTree::new(points);
        let k = k.min(n - 1);
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            total += tree
                .knn(p, k, Some(i))
                .iter()
                .map(|nb| libm::sqrt(nb.dist2))
                .sum::<f64>();
        }
        let unit = total / (n * k) as f64 / spacing_units;
        if !(unit > 0.0) {
            return Err(Error::ZeroExtent);
        }
        Ok(Self { center, unit })
    }

    fn working(&self, p: &Point3) -> Point3 {
        (p - self.center) / self.unit
    }

    fn original(&self, p: &Point3) -> Point3 {
        p * self.unit + self.center
    }
}

fn relative_change(before: &[Point3], after: &[Point3]) -> f64 {
    let mut diff = 0.0;
    let mut size = 0.0;
    for (a, b) in before.iter().zip(after) {
        diff += (b - a).norm_squared();
        size += a.norm_squared();
    }
    if size > 0.0 {
        libm::sqrt(diff / size)
    } else {
        libm::sqrt(diff)
    }
}

/// Refines the inserted points of an interpolation result.
///
/// Each outer round solves red (blue fixed), re-estimates normals, then solves
/// blue (red fixed) and re-estimates again, until the relative coordinate
/// change of a round falls below `rel_change_tol` or `outer_max_iters` rounds
/// have run. Failures after setup stop the alternation and return the last
/// completed iterate with an [`Warning::Aborted`] entry.
pub fn refine(initial: InterpolationResult, config: &SolverConfig) -> Result<Superresolution> {
    config.validate()?;
    let frame = WorkingFrame::new(initial.cloud.points(), config.k, config.spacing_units)?;
    let mut config = *config;
    if let SigmaP::Fixed(s) = config.sigma_p {
        config.sigma_p = SigmaP::Fixed(s / frame.unit);
    }
    let config = &config;
    let mut points: Vec<Point3> = initial
        .cloud
        .points()
        .iter()
        .map(|p| frame.working(p))
        .collect();
    let mut anchors: Vec<Option<Point3>> = vec![None; points.len()];
    for &g in initial.sampling_map.indices() {
        anchors[g] = Some(points[g]);
    }
    let mut report = RefinementReport::default();
    if initial.skipped_neighborhoods > 0 {
        report
            .warnings
            .push(Warning::SkippedNeighborhoods(initial.skipped_neighborhoods));
    }

    let mut normals = estimate_normals(&points, config.k)?;
    let graph = knn_graph(&points, config.k, config.sigma_p, &normals)?;
    let partition = build_bipartite_partition(&graph)?;
    let step = HalfStep {
        config,
        graph: &graph,
        partition: &partition,
        anchors: &anchors,
    };

    let mut warm_red = None;
    let mut warm_blue = None;
    let mut change = f64::INFINITY;
    'outer: for outer in 0..config.outer_max_iters {
        let before = points.clone();
        for color in [Color::Red, Color::Blue] {
            let warm = if color == Color::Red {
                &mut warm_red
            } else {
                &mut warm_blue
            };
            let mut trial = points.clone();
            let solve = match step.run(color, outer, &mut trial, &normals, warm) {
                Ok(solve) => solve,
                Err(e) => {
                    report.warnings.push(Warning::Aborted(e));
                    break 'outer;
                }
            };
            let mut next_normals = match estimate_normals(&trial, config.k) {
                Ok(n) => n,
                Err(e) => {
                    report.warnings.push(Warning::Aborted(e));
                    break 'outer;
                }
            };
            align_with(&mut next_normals, &normals);
            if !solve.diagnostics.converged {
                report.warnings.push(Warning::AdmmNotConverged {
                    outer,
                    color,
                    relative_residual: solve.diagnostics.final_residual(),
                });
            }
            report.solves.push(solve);
            points = trial;
            normals = next_normals;
        }
        report.outer_iterations = outer + 1;
        change = relative_change(&before, &points);
        if change < config.rel_change_tol {
            break;
        }
    }
    report.final_relative_change = change;
    if report.outer_iterations == config.outer_max_iters && !(change < config.rel_change_tol) {
        report.warnings.push(Warning::OuterNotConverged {
            relative_change: change,
        });
    }

    for solve in &mut report.solves {
        solve.presnap_deviation *= frame.unit;
    }
    let mut points: Vec<Point3> = points.iter().map(|p| frame.original(p)).collect();
    for &g in initial.sampling_map.indices() {
        points[g] = initial.cloud.points()[g];
    }
    let cloud = PointCloud::with_normals(points, normals)?;
    Ok(Superresolution {
        cloud,
        initial,
        partition: Some(partition),
        report,
    })
}
