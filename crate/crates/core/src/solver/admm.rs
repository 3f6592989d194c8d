//! ADMM for one color class: minimize `sum_ij w_ij |m_ij|_1` subject to
//! `m = B p + v` and `C p = q`.
//!
//! Each iteration solves the coordinate update in closed form, runs proximal
//! gradient on the normal differences, then takes a dual ascent step on both
//! constraint blocks.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Matrix3;

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::linalg::{self, norm};
use crate::normals::{gtv, NormalDifferenceOperator};

use super::cg::{solve_refined, Jacobi, LinearSolution, LinearSolveOptions, Preconditioner};
use super::skyline::SkylineCholesky;
use super::SolverConfig;

/// The rows of `C` that touch the optimized nodes: column block `cols[r]` must
/// equal `targets[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConstraint {
    cols: Vec<usize>,
    targets: Vec<f64>,
}

impl SamplingConstraint {
    pub fn new(num_cols: usize, anchors: &[(usize, Point3)]) -> Result<Self> {
        let mut seen = vec![false; num_cols];
        let mut cols = Vec::with_capacity(anchors.len());
        let mut targets = Vec::with_capacity(3 * anchors.len());
        for &(c, q) in anchors {
            if c >= num_cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: num_cols,
                });
            }
            if seen[c] {
                return Err(Error::DuplicateIndex { index: c });
            }
            seen[c] = true;
            cols.push(c);
            targets.extend_from_slice(q.as_slice());
        }
        Ok(Self { cols, targets })
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Stacked `q`.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// `C p`
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.targets.len()];
        for (r, &c) in self.cols.iter().enumerate() {
            out[3 * r..3 * r + 3].copy_from_slice(&p[3 * c..3 * c + 3]);
        }
        out
    }

    /// `C^T r` added into `out`.
    pub fn add_transpose(&self, r: &[f64], out: &mut [f64]) {
        for (row, &c) in self.cols.iter().enumerate() {
            for d in 0..3 {
                out[3 * c + d] += r[3 * row + d];
            }
        }
    }

    /// Largest per-anchor Euclidean distance between `p` and its target.
    pub fn max_deviation(&self, p: &[f64]) -> f64 {
        self.cols
            .iter()
            .enumerate()
            .map(|(r, &c)| (linalg::block(p, c) - linalg::block(&self.targets, r)).norm())
            .fold(0.0, f64::max)
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Applies `B^T B + C^T C`.
fn normal_matrix_apply(
    op: &NormalDifferenceOperator,
    constraint: &SamplingConstraint,
    x: &[f64],
) -> Vec<f64> {
    let mut out = op.apply_transpose(&op.apply(x));
    constraint.add_transpose(&constraint.apply(x), &mut out);
    out
}

enum CoordinatePreconditioner {
    Cholesky(SkylineCholesky),
    Jacobi(Jacobi),
}

impl Preconditioner for CoordinatePreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            CoordinatePreconditioner::Cholesky(f) => f.solve(r),
            CoordinatePreconditioner::Jacobi(j) => j.apply(r),
        }
    }
}

/// The coordinate-update system `(B^T B + C^T C) p = rhs` for a fixed
/// operator and constraint. CG runs on the ridge-regularized matrix,
/// preconditioned by its sparse Cholesky factor (Jacobi when the factor is
/// unavailable), so the factorization is paid once per ADMM solve.
pub struct CoordinateSystem<'a> {
    op: &'a NormalDifferenceOperator,
    constraint: &'a SamplingConstraint,
    options: LinearSolveOptions,
    precond: CoordinatePreconditioner,
}

impl<'a> CoordinateSystem<'a> {
    pub fn new(
        op: &'a NormalDifferenceOperator,
        constraint: &'a SamplingConstraint,
        options: &LinearSolveOptions,
    ) -> Self {
        let mut blocks = Vec::with_capacity(3 * op.num_edges() + constraint.cols().len());
        for b in op.blocks() {
            blocks.push((b.i, b.i, b.left.transpose() * b.left));
            blocks.push((b.j, b.j, b.right.transpose() * b.right));
            if b.i < b.j {
                blocks.push((b.i, b.j, b.left.transpose() * b.right));
            } else {
                blocks.push((b.j, b.i, b.right.transpose() * b.left));
            }
        }
        for &c in constraint.cols() {
            blocks.push((c, c, Matrix3::identity()));
        }
        let precond = match SkylineCholesky::factor(op.num_nodes(), &blocks, options.ridge) {
            Some(factor) => CoordinatePreconditioner::Cholesky(factor),
            None => {
                let mut diag = op.gram_diagonal();
                for &c in constraint.cols() {
                    for d in 0..3 {
                        diag[3 * c + d] += 1.0;
                    }
                }
                CoordinatePreconditioner::Jacobi(Jacobi::new(&diag, options.ridge))
            }
        };
        Self {
            op,
            constraint,
            options: *options,
            precond,
        }
    }

    /// Solves for the coordinates given the current `m` and duals, starting
    /// from `p_start`, whose null-space component is kept.
    pub fn solve(
        &self,
        m: &[f64],
        y1: &[f64],
        y2: &[f64],
        rho: f64,
        p_start: &[f64],
    ) -> Result<LinearSolution> {
        let (op, constraint) = (self.op, self.constraint);
        check_len("p", 3 * op.num_nodes(), p_start.len())?;
        check_len("m", 3 * op.num_edges(), m.len())?;
        check_len("y1", 3 * op.num_edges(), y1.len())?;
        check_len("y2", constraint.targets().len(), y2.len())?;

        let v = op.offset();
        let edge_term: Vec<f64> = (0..m.len()).map(|r| m[r] - v[r] - y1[r] / rho).collect();
        let mut rhs = op.apply_transpose(&edge_term);
        let anchor_term: Vec<f64> = constraint
            .targets()
            .iter()
            .zip(y2)
            .map(|(q, y)| q - y / rho)
            .collect();
        constraint.add_transpose(&anchor_term, &mut rhs);
        solve_refined(
            |x| normal_matrix_apply(op, constraint, x),
            &self.precond,
            &rhs,
            p_start,
            &self.options,
        )
    }
}

/// Coordinate update: solves
/// `rho (B^T B + C^T C) p = C^T (rho q - y2) + B^T (rho m - rho v - y1)`
/// starting from `p_start`, whose null-space component is kept.
#[allow(clippy::too_many_arguments)]
pub fn p_step(
    op: &NormalDifferenceOperator,
    constraint: &SamplingConstraint,
    m: &[f64],
    y1: &[f64],
    y2: &[f64],
    rho: f64,
    p_start: &[f64],
    options: &LinearSolveOptions,
) -> Result<LinearSolution> {
    CoordinateSystem::new(op, constraint, options).solve(m, y1, y2, rho, p_start)
}

/// Gradient in `m` of the smooth part of the m-subproblem:
/// `-rho (B p + v - m) - y1`.
pub fn m_gradient(
    op: &NormalDifferenceOperator,
    p: &[f64],
    m: &[f64],
    y1: &[f64],
    rho: f64,
) -> Vec<f64> {
    gradient_at(&op.eval(p), m, y1, rho)
}

fn gradient_at(bp_v: &[f64], m: &[f64], y1: &[f64], rho: f64) -> Vec<f64> {
    bp_v.iter()
        .zip(m)
        .zip(y1)
        .map(|((a, m), y)| -rho * (a - m) - y)
        .collect()
}

/// Proximal map of `threshold * |x|`.
pub fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

/// m-subproblem objective:
/// `y1^T (a - m) + rho/2 |a - m|^2 + sum_ij w_ij |m_ij|_1` with `a = B p + v`.
pub fn m_objective(bp_v: &[f64], m: &[f64], y1: &[f64], weights: &[f64], rho: f64) -> f64 {
    let mut smooth = 0.0;
    for r in 0..m.len() {
        let gap = bp_v[r] - m[r];
        smooth += y1[r] * gap + 0.5 * rho * gap * gap;
    }
    let l1: f64 = weights
        .iter()
        .zip(m.chunks_exact(3))
        .map(|(w, e)| w * (e[0].abs() + e[1].abs() + e[2].abs()))
        .sum();
    smooth + l1
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub m: Vec<f64>,
    pub iterations: usize,
}

/// Consecutive objective increases tolerated before the proximal gradient loop
/// is declared divergent.
const DIVERGENCE_STREAK: usize = 10;

/// Proximal gradient on the m-subproblem: repeats
/// `m <- prox(m - t grad)` with per-component threshold `t w_ij` until the
/// relative change drops below `rel_change_tol` or `max_iters` is reached.
#[allow(clippy::too_many_arguments)]
pub fn m_step(
    op: &NormalDifferenceOperator,
    p: &[f64],
    m0: &[f64],
    y1: &[f64],
    rho: f64,
    step_t: f64,
    max_iters: usize,
    rel_change_tol: f64,
) -> Result<MStep> {
    if !(step_t > 0.0) {
        return Err(Error::InvalidParameter("step_t must be positive"));
    }
    check_len("m", 3 * op.num_edges(), m0.len())?;
    check_len("y1", 3 * op.num_edges(), y1.len())?;
    let bp_v = op.eval(p);
    let weights = op.weights();
    let mut m = m0.to_vec();
    let mut objective = m_objective(&bp_v, &m, y1, &weights, rho);
    let mut streak = 0;
    for iteration in 1..=max_iters {
        let grad = gradient_at(&bp_v, &m, y1, rho);
        let mut next = vec![0.0; m.len()];
        let mut change = 0.0;
        for (e, w) in weights.iter().enumerate() {
            for r in 3 * e..3 * e + 3 {
                next[r] = soft_threshold(m[r] - step_t * grad[r], step_t * w);
                change += (next[r] - m[r]) * (next[r] - m[r]);
            }
        }
        let change = libm::sqrt(change);
        let size = norm(&m).max(norm(&next));
        m = next;
        let next_objective = m_objective(&bp_v, &m, y1, &weights, rho);
        streak = if next_objective > objective {
            streak + 1
        } else {
            0
        };
        if streak >= DIVERGENCE_STREAK {
            return Err(Error::ProxDiverged { iteration });
        }
        objective = next_objective;
        if change <= rel_change_tol * size {
            return Ok(MStep {
                m,
                iterations: iteration,
            });
        }
    }
    Ok(MStep {
        m,
        iterations: max_iters,
    })
}

/// Constraint violation `(B p + v - m, C p - q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalResidual {
    pub edge: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl PrimalResidual {
    pub fn new(
        op: &NormalDifferenceOperator,
        constraint: &SamplingConstraint,
        p: &[f64],
        m: &[f64],
    ) -> Self {
        let edge = op.eval(p).iter().zip(m).map(|(a, m)| a - m).collect();
        let anchor = constraint
            .apply(p)
            .iter()
            .zip(constraint.targets())
            .map(|(c, q)| c - q)
            .collect();
        Self { edge, anchor }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(linalg::dot(&self.edge, &self.edge) + linalg::dot(&self.anchor, &self.anchor))
    }
}

/// `y1 += rho (B p + v - m)`, `y2 += rho (C p - q)`.
pub fn dual_update(y1: &mut [f64], y2: &mut [f64], residual: &PrimalResidual, rho: f64) {
    linalg::axpy(rho, &residual.edge, y1);
    linalg::axpy(rho, &residual.anchor, y2);
}

/// State carried between solves of the same color.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub edges: Vec<(usize, usize)>,
    pub m: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// `|H s - d| / max(1, |d|)`.
    pub primal_residual: f64,
    /// `rho |B^T (m_new - m_old)| / max(1, |B^T y1 + C^T y2|)`.
    pub dual_residual: f64,
    /// GTV of `B p + v` after the iteration.
    pub gtv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmDiagnostics {
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub initial_gtv: f64,
    pub final_gtv: f64,
    /// `max(1, |d|)`, the scale applied to residuals in `history`.
    pub residual_scale: f64,
    /// Conjugate-gradient iterations summed over all p-steps.
    pub cg_iterations: usize,
    /// Proximal-gradient iterations summed over all m-steps.
    pub prox_iterations: usize,
}

impl AdmmDiagnostics {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.primal_residual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    pub p: Vec<f64>,
    pub m: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub diagnostics: AdmmDiagnostics,
}

impl AdmmOutcome {
    pub fn warm_start(&self, op: &NormalDifferenceOperator) -> WarmStart {
        WarmStart {
            edges: op.edge_pairs(),
            m: self.m.clone(),
            y1: self.y1.clone(),
            y2: self.y2.clone(),
        }
    }
}

/// Runs ADMM from the feasible start `p0` (`C p0 = q`) until the primal
/// residual falls to `primal_tol * max(1, |d|)` or `admm_max_iters` is spent.
/// A matching `warm` start (same edge list and shapes) seeds `m` and the duals.
pub fn admm_solve(
    op: &NormalDifferenceOperator,
    constraint: &SamplingConstraint,
    p0: &[f64],
    config: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<AdmmOutcome> {
    check_len("p0", 3 * op.num_nodes(), p0.len())?;
    let v = op.offset();
    let q = constraint.targets();
    let d_norm = libm::sqrt(linalg::dot(&v, &v) + linalg::dot(q, q));
    let residual_scale = d_norm.max(1.0);
    let start_deviation = constraint.max_deviation(p0);
    if start_deviation > 1e-9 * residual_scale {
        return Err(Error::InfeasibleStart {
            deviation: start_deviation,
        });
    }

    let edges = 3 * op.num_edges();
    let anchors = q.len();
    let reusable = warm.filter(|w| {
        w.edges == op.edge_pairs()
            && w.m.len() == edges
            && w.y1.len() == edges
            && w.y2.len() == anchors
    });
    let (mut m, mut y1, mut y2) = match reusable {
        Some(w) => (w.m.clone(), w.y1.clone(), w.y2.clone()),
        None => (op.eval(p0), vec![0.0; edges], vec![0.0; anchors]),
    };

    let weights = op.weights();
    let initial_gtv = gtv(&op.eval(p0), &weights)?;
    let options = LinearSolveOptions {
        ridge: config.ridge_delta,
        ..LinearSolveOptions::default()
    };
    let system = CoordinateSystem::new(op, constraint, &options);
    let threshold = config.primal_tol * residual_scale;
    let mut p = p0.to_vec();
    let mut history = Vec::new();
    let mut converged = false;
    let mut cg_iterations = 0;
    let mut prox_iterations = 0;
    for _ in 0..config.admm_max_iters {
        let solution = system.solve(&m, &y1, &y2, config.rho, &p)?;
        cg_iterations += solution.cg_iterations;
        p = solution.x;
        let step = m_step(
            op,
            &p,
            &m,
            &y1,
            config.rho,
            config.step_t,
            config.prox_max_iters,
            config.rel_change_tol,
        )?;
        prox_iterations += step.iterations;
        let m_change: Vec<f64> = step.m.iter().zip(&m).map(|(a, b)| a - b).collect();
        let dual = config.rho * norm(&op.apply_transpose(&m_change));
        m = step.m;
        let residual = PrimalResidual::new(op, constraint, &p, &m);
        dual_update(&mut y1, &mut y2, &residual, config.rho);
        let r = residual.norm();
        let mut dual_force = op.apply_transpose(&y1);
        constraint.add_transpose(&y2, &mut dual_force);
        let dual_scale = norm(&dual_force).max(1.0);
        history.push(IterationRecord {
            primal_residual: r / residual_scale,
            dual_residual: dual / dual_scale,
            gtv: gtv(&op.eval(&p), &weights)?,
        });
        if r <= threshold && config.dual_tol.is_none_or(|tol| dual <= tol * dual_scale) {
            converged = true;
            break;
        }
    }
    let final_gtv = history.last().map_or(initial_gtv, |h| h.gtv);
    Ok(AdmmOutcome {
        p,
        m,
        y1,
        y2,
        diagnostics: AdmmDiagnostics {
            history,
            converged,
            initial_gtv,
            final_gtv,
            residual_scale,
            cg_iterations,
            prox_iterations,
        },
    })
}
