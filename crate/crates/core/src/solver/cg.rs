//! Preconditioned conjugate gradient and iterative refinement for the
//! coordinate update system.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveOptions {
    /// Ridge added to the system inside each CG solve.
    pub ridge: f64,
    /// Relative residual required of the unregularized system.
    pub tolerance: f64,
    pub max_refinements: usize,
    /// Relative residual at which each inner CG solve stops.
    pub cg_tolerance: f64,
    /// CG iteration cap; 0 means `max(100, 2 n)`.
    pub cg_max_iters: usize,
}

impl Default for LinearSolveOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-8,
            tolerance: 1e-8,
            max_refinements: 50,
            cg_tolerance: 1e-10,
            cg_max_iters: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    /// `|rhs - K x| / |rhs|` for the unregularized `K`.
    pub relative_residual: f64,
    pub refinements: usize,
    pub cg_iterations: usize,
}

/// Approximate inverse of the regularized operator used to precondition CG.
pub trait Preconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

/// Inverse diagonal of `K + ridge I`; zero entries map to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobi {
    inverse: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64], ridge: f64) -> Self {
        let inverse = diag
            .iter()
            .map(|&d| {
                if d + ridge > 0.0 {
                    1.0 / (d + ridge)
                } else {
                    1.0
                }
            })
            .collect();
        Self { inverse }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.inverse).map(|(r, m)| r * m).collect()
    }
}

/// Preconditioned CG for `(K + ridge I) x = b` from `x = 0`.
fn pcg<F: Fn(&[f64]) -> Vec<f64>, P: Preconditioner + ?Sized>(
    apply: &F,
    precond: &P,
    ridge: f64,
    b: &[f64],
    tolerance: f64,
    max_iters: usize,
) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (x, 0);
    }
    let mut r = b.to_vec();
    let mut z = precond.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for iter in 0..max_iters {
        let mut ap = apply(&p);
        axpy(ridge, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return (x, iter);
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm(&r) <= tolerance * b_norm {
            return (x, iter + 1);
        }
        z = precond.apply(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, max_iters)
}

/// Solves the symmetric positive semidefinite system `K x = rhs` starting
/// from `x0`: each pass solves the ridge-regularized correction system by CG
/// and adds the correction. Passes continue while each at least halves the
/// unregularized residual, and the result must meet `tolerance`. Components
/// of `x0` in the null space of `K` are preserved.
pub fn solve_refined<F: Fn(&[f64]) -> Vec<f64>, P: Preconditioner + ?Sized>(
    apply: F,
    precond: &P,
    rhs: &[f64],
    x0: &[f64],
    options: &LinearSolveOptions,
) -> Result<LinearSolution> {
    let n = rhs.len();
    let max_iters = if options.cg_max_iters == 0 {
        (2 * n).max(100)
    } else {
        options.cg_max_iters
    };
    let rhs_norm = norm(rhs);
    let scale = if rhs_norm > 0.0 { rhs_norm } else { 1.0 };
    let relative = |x: &[f64]| -> (Vec<f64>, f64) {
        let kx = apply(x);
        let residual: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
        let r = norm(&residual) / scale;
        (residual, r)
    };
    let mut x = x0.to_vec();
    let (mut residual, mut relative_residual) = relative(&x);
    let mut cg_iterations = 0;
    let mut refinements = 0;
    while relative_residual > 0.0
        && refinements < options.max_refinements
        && relative_residual.is_finite()
    {
        let (dx, iters) = pcg(
            &apply,
            precond,
            options.ridge,
            &residual,
            options.cg_tolerance,
            max_iters,
        );
        cg_iterations += iters;
        refinements += 1;
        let mut candidate = x.clone();
        axpy(1.0, &dx, &mut candidate);
        let (next_residual, next_relative) = relative(&candidate);
        if !(next_relative < relative_residual) {
            break;
        }
        // keep refining past the tolerance while passes still pay off
        let stalled = next_relative > 0.5 * relative_residual;
        x = candidate;
        residual = next_residual;
        relative_residual = next_relative;
        if stalled && relative_residual <= options.tolerance {
            break;
        }
    }
    if relative_residual <= options.tolerance {
        Ok(LinearSolution {
            x,
            relative_residual,
            refinements,
            cg_iterations,
        })
    } else {
        Err(Error::LinearSolveFailed {
            residual: relative_residual,
        })
    }
}
