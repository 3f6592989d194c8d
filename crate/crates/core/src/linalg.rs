//! Flat-vector helpers shared by the solver and the operator code.

use nalgebra::Matrix3;

use crate::cloud::Point3;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn block(v: &[f64], i: usize) -> Point3 {
    Point3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2])
}

pub(crate) fn set_block(v: &mut [f64], i: usize, p: &Point3) {
    v[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
}

pub(crate) fn add_block(v: &mut [f64], i: usize, p: &Point3) {
    v[3 * i] += p.x;
    v[3 * i + 1] += p.y;
    v[3 * i + 2] += p.z;
}

/// Cross-product matrix: `skew(v) * x == v.cross(x)`.
pub(crate) fn skew(v: &Point3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
