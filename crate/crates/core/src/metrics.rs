//! Point-to-point (C2C) and point-to-plane (C2P) errors between a result
//! cloud and its ground truth. Both are means of squared distances, taken in
//! each direction; the reported value is the larger direction.

use alloc::vec::Vec;

use crate::cloud::{Point3, PointCloud};
use crate::error::Result;
use crate::kdtree::KdTree;
use crate::normals::estimate_normals;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedError {
    pub truth_to_result: f64,
    pub result_to_truth: f64,
}

impl DirectedError {
    pub fn value(&self) -> f64 {
        self.truth_to_result.max(self.result_to_truth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub c2c: f64,
    pub c2p: f64,
    pub c2c_directed: DirectedError,
    pub c2p_directed: DirectedError,
}

/// Mean over `source` of the squared distance to the closest `target` point.
pub fn directed_point_to_point(source: &[Point3], target: &[Point3]) -> f64 {
    let tree = KdTree::new(target);
    let total: f64 = source
        .iter()
        .map(|p| tree.nearest(p).map_or(0.0, |n| n.dist2))
        .sum();
    total / source.len() as f64
}

/// Mean over `source` of the squared distance to the tangent plane at the
/// closest `target` point.
pub fn directed_point_to_plane(
    source: &[Point3],
    target: &[Point3],
    target_normals: &[Point3],
) -> f64 {
    let tree = KdTree::new(target);
    let total: f64 = source
        .iter()
        .map(|p| match tree.nearest(p) {
            Some(n) => {
                let d = (p - target[n.index]).dot(&target_normals[n.index]);
                d * d
            }
            None => 0.0,
        })
        .sum();
    total / source.len() as f64
}

pub fn c2c(result: &PointCloud, truth: &PointCloud) -> DirectedError {
    DirectedError {
        truth_to_result: directed_point_to_point(truth.points(), result.points()),
        result_to_truth: directed_point_to_point(result.points(), truth.points()),
    }
}

fn normals_of(cloud: &PointCloud, k: usize) -> Result<Vec<Point3>> {
    match cloud.normals() {
        Some(n) => Ok(n.to_vec()),
        None => estimate_normals(cloud.points(), k),
    }
}

/// Uses the clouds' own normals when present, otherwise estimates them with
/// `k_normals` neighbors.
pub fn c2p(result: &PointCloud, truth: &PointCloud, k_normals: usize) -> Result<DirectedError> {
    let result_normals = normals_of(result, k_normals)?;
    let truth_normals = normals_of(truth, k_normals)?;
    Ok(DirectedError {
        truth_to_result: directed_point_to_plane(truth.points(), result.points(), &result_normals),
        result_to_truth: directed_point_to_plane(result.points(), truth.points(), &truth_normals),
    })
}

pub fn evaluate(result: &PointCloud, truth: &PointCloud, k_normals: usize) -> Result<ErrorReport> {
    let c2c_directed = c2c(result, truth);
    let c2p_directed = c2p(result, truth, k_normals)?;
    Ok(ErrorReport {
        c2c: c2c_directed.value(),
        c2p: c2p_directed.value(),
        c2c_directed,
        c2p_directed,
    })
}
