//! Graph-total-variation refinement of an interpolated cloud.

pub mod admm;
pub mod cg;
mod pipeline;
mod skyline;

pub use admm::{
    admm_solve, dual_update, m_gradient, m_objective, m_step, p_step, soft_threshold,
    AdmmDiagnostics, AdmmOutcome, CoordinateSystem, IterationRecord, MStep, PrimalResidual,
    SamplingConstraint, WarmStart,
};
pub use cg::{solve_refined, Jacobi, LinearSolution, LinearSolveOptions, Preconditioner};
pub use pipeline::{refine, superresolve, ColorSolve, RefinementReport, Superresolution, Warning};

use crate::graph::SigmaP;
use crate::interpolate::InterpolationConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Augmented Lagrangian penalty.
    pub rho: f64,
    /// Proximal gradient step size.
    pub step_t: f64,
    /// Neighbors per node in the k-NN graphs and normal estimation.
    pub k: usize,
    pub admm_max_iters: usize,
    pub prox_max_iters: usize,
    /// Red/blue alternation rounds.
    pub outer_max_iters: usize,
    /// ADMM stops when `|H s - d| <= primal_tol * max(1, |d|)`.
    pub primal_tol: f64,
    /// When set, ADMM additionally requires
    /// `rho |B^T (m_new - m_old)| <= dual_tol * max(1, |B^T y1 + C^T y2|)`.
    pub dual_tol: Option<f64>,
    /// Relative change that ends both the proximal gradient loop and the
    /// red/blue alternation.
    pub rel_change_tol: f64,
    pub ridge_delta: f64,
    /// Length of the mean k-NN spacing in the solver's working coordinates.
    pub spacing_units: f64,
    /// Largest distance, in working units, an inserted point may move in one
    /// color solve. The linearized normals are only accurate near the point
    /// they were built at.
    pub max_step: Option<f64>,
    pub sigma_p: SigmaP,
    pub interpolation: InterpolationConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 5.0,
            step_t: 0.1,
            k: 8,
            admm_max_iters: 200,
            prox_max_iters: 100,
            outer_max_iters: 10,
            primal_tol: 1e-4,
            dual_tol: None,
            rel_change_tol: 1e-5,
            ridge_delta: 1e-8,
            spacing_units: 1.0,
            max_step: Some(1.0),
            sigma_p: SigmaP::Auto,
            interpolation: InterpolationConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::InvalidParameter;
        if !(self.rho > 0.0) {
            return Err(InvalidParameter("rho must be positive"));
        }
        if !(self.step_t > 0.0) {
            return Err(InvalidParameter("step_t must be positive"));
        }
        if self.k < 3 {
            return Err(InvalidParameter("k must be at least 3"));
        }
        if !(self.primal_tol > 0.0)
            || self.dual_tol.is_some_and(|d| !(d > 0.0))
            || !(self.rel_change_tol > 0.0)
        {
            return Err(InvalidParameter("tolerances must be positive"));
        }
        if self.max_step.is_some_and(|s| !(s > 0.0)) {
            return Err(InvalidParameter("max_step must be positive"));
        }
        if !(self.spacing_units > 0.0) {
            return Err(InvalidParameter("spacing_units must be positive"));
        }
        if !(self.ridge_delta >= 0.0) {
            return Err(InvalidParameter("ridge_delta must be nonnegative"));
        }
        Ok(())
    }
}
