//! Densification by inserting centroids of local surface triangles.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::{Point3, PointCloud, SamplingMap};
use crate::delaunay::{self, P2};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::normals::plane_normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationConfig {
    /// Neighborhood size of each local triangulation.
    pub k: usize,
    /// Triangles with circumradius above this multiple of the local mean
    /// neighbor distance are dropped.
    pub circumradius_factor: f64,
    /// Triangulate-and-insert rounds allowed to reach a target count.
    pub max_rounds: usize,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        Self {
            k: 10,
            circumradius_factor: 3.0,
            max_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    /// Sorted vertex triples, sorted lexicographically.
    pub triangles: Vec<[usize; 3]>,
    /// Neighborhoods skipped because their plane fit was degenerate.
    pub skipped: usize,
}

/// Surface triangles from per-point tangent-plane Delaunay triangulations.
///
/// Each point's k-NN neighborhood is projected onto its fitted plane and the
/// Delaunay triangles incident to the point are kept, minus those whose
/// circumradius exceeds `circumradius_factor` times the mean neighbor
/// distance. Triangles are deduplicated across neighborhoods.
pub fn triangulate_surface(
    points: &[Point3],
    k: usize,
    circumradius_factor: f64,
) -> Result<Triangulation> {
    if points.len() < 3 || is_collinear(points) {
        return Err(Error::CollinearCloud);
    }
    if k < 2 {
        return Err(Error::InvalidK { k, n: points.len() });
    }
    let k = k.min(points.len() - 1);
    let tree = KdTree::new(points);
    let mut triangles = BTreeSet::new();
    let mut skipped = 0;
    for (c, center) in points.iter().enumerate() {
        let hood: Vec<usize> = tree
            .knn(center, k, Some(c))
            .into_iter()
            .map(|n| n.index)
            .collect();
        let normal = match plane_normal(points, c, &hood) {
            Ok(n) => n,
            Err(Error::DegenerateNeighborhood { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (u, w) = tangent_basis(&normal);
        let mut local: Vec<P2> = Vec::with_capacity(hood.len() + 1);
        let mut ids = Vec::with_capacity(hood.len() + 1);
        local.push([0.0, 0.0]);
        ids.push(c);
        let mut spacing = 0.0;
        for &j in &hood {
            let d = points[j] - center;
            local.push([u.dot(&d), w.dot(&d)]);
            ids.push(j);
            spacing += d.norm();
        }
        spacing /= hood.len() as f64;
        if !(spacing > 0.0) {
            skipped += 1;
            continue;
        }
        for (a, b) in delaunay::incident_triangles(&local, &ids, spacing) {
            let (ga, gb) = (ids[a], ids[b]);
            if circumradius(center, &points[ga], &points[gb]) > circumradius_factor * spacing {
                continue;
            }
            let mut tri = [c, ga, gb];
            tri.sort_unstable();
            triangles.insert(tri);
        }
    }
    Ok(Triangulation {
        triangles: triangles.into_iter().collect(),
        skipped,
    })
}

fn is_collinear(points: &[Point3]) -> bool {
    let origin = points[0];
    let Some(dir) = points
        .iter()
        .map(|p| p - origin)
        .find(|d| d.norm_squared() > 0.0)
    else {
        return true;
    };
    let scale = points
        .iter()
        .map(|p| (p - origin).norm())
        .fold(0.0, f64::max);
    points
        .iter()
        .all(|p| dir.normalize().cross(&(p - origin)).norm() <= 1e-12 * scale)
}

fn tangent_basis(n: &Point3) -> (Point3, Point3) {
    let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Point3::x()
    } else if n.y.abs() <= n.z.abs() {
        Point3::y()
    } else {
        Point3::z()
    };
    let u = n.cross(&helper).normalize();
    (u, n.cross(&u))
}

pub(crate) fn circumradius(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let (ab, ac) = (b - a, c - a);
    let area2 = ab.cross(&ac).norm();
    if area2 == 0.0 {
        return f64::INFINITY;
    }
    ab.norm() * ac.norm() * (b - c).norm() / (2.0 * area2)
}

/// The densified cloud. The first `sampling_map.len()` points are the input
/// points; inserted point `M + t` is the centroid of `triangles[t]`, whose
/// indices refer to earlier points of `cloud`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationResult {
    pub cloud: PointCloud,
    pub sampling_map: SamplingMap,
    pub triangles: Vec<[usize; 3]>,
    pub rounds: usize,
    pub skipped_neighborhoods: usize,
}

impl InterpolationResult {
    pub fn original_count(&self) -> usize {
        self.sampling_map.len()
    }

    pub fn inserted_count(&self) -> usize {
        self.triangles.len()
    }
}

pub(crate) fn centroid(points: &[Point3], tri: &[usize; 3]) -> Point3 {
    (points[tri[0]] + points[tri[1]] + points[tri[2]]) / 3.0
}

/// Inserts one centroid per triangle.
///
/// Without a target a single round is inserted. With a target, rounds of
/// re-triangulation and insertion continue until the target is reached or
/// `max_rounds` is spent; the round that overshoots is thinned by
/// farthest-point sampling seeded with every existing point, so earlier points
/// (and the input) are never removed.
pub fn insert_centroids(
    cloud: &PointCloud,
    triangles: &[[usize; 3]],
    target_count: Option<usize>,
    config: &InterpolationConfig,
) -> Result<InterpolationResult> {
    let original = cloud.len();
    if let Some(target) = target_count {
        if target < original {
            return Err(Error::TargetBelowInput {
                target,
                input: original,
            });
        }
    }
    let mut points = cloud.points().to_vec();
    let mut used: Vec<[usize; 3]> = Vec::new();
    let mut seen: BTreeSet<[usize; 3]> = BTreeSet::new();
    let mut round_triangles = triangles.to_vec();
    let mut skipped = 0;
    let mut rounds = 0;

    while target_count.is_none_or(|t| points.len() < t) {
        rounds += 1;
        let mut fresh: Vec<[usize; 3]> = Vec::new();
        for tri in &round_triangles {
            let mut key = *tri;
            key.sort_unstable();
            if let Some(&index) = key.iter().find(|&&i| i >= points.len()) {
                return Err(Error::IndexOutOfRange {
                    index,
                    len: points.len(),
                });
            }
            if seen.insert(key) {
                fresh.push(key);
            }
        }
        let centroids: Vec<Point3> = fresh.iter().map(|t| centroid(&points, t)).collect();
        let keep: Vec<usize> = match target_count {
            Some(target) if centroids.len() >= target - points.len() => {
                farthest_point_subset(&points, &centroids, target - points.len())
            }
            _ => (0..centroids.len()).collect(),
        };
        for &c in &keep {
            used.push(fresh[c]);
            points.push(centroids[c]);
        }
        let Some(target) = target_count else { break };
        if points.len() >= target {
            break;
        }
        if keep.is_empty() || rounds >= config.max_rounds {
            return Err(Error::TargetUnreachable {
                reached: points.len(),
                target,
            });
        }
        let next = triangulate_surface(&points, config.k, config.circumradius_factor)?;
        skipped += next.skipped;
        round_triangles = next.triangles;
    }

    Ok(InterpolationResult {
        cloud: PointCloud::new(points)?,
        sampling_map: SamplingMap::prefix(original),
        triangles: used,
        rounds,
        skipped_neighborhoods: skipped,
    })
}

/// Triangulates `cloud` and inserts centroids up to `target_count`.
pub fn interpolate(
    cloud: &PointCloud,
    target_count: Option<usize>,
    config: &InterpolationConfig,
) -> Result<InterpolationResult> {
    if target_count == Some(cloud.len()) {
        return insert_centroids(cloud, &[], target_count, config);
    }
    let tri = triangulate_surface(cloud.points(), config.k, config.circumradius_factor)?;
    let mut result = insert_centroids(cloud, &tri.triangles, target_count, config)?;
    result.skipped_neighborhoods += tri.skipped;
    Ok(result)
}

/// Picks `count` of `candidates` greedily by largest distance to everything
/// chosen so far (starting from `seeds`). Returns candidate indices in
/// ascending order; distance ties go to the smaller index.
fn farthest_point_subset(seeds: &[Point3], candidates: &[Point3], count: usize) -> Vec<usize> {
    if count >= candidates.len() {
        return (0..candidates.len()).collect();
    }
    let tree = KdTree::new(seeds);
    let mut dist: Vec<f64> = candidates
        .iter()
        .map(|c| tree.nearest(c).map_or(f64::INFINITY, |n| n.dist2))
        .collect();
    let mut taken = vec![false; candidates.len()];
    for _ in 0..count {
        let mut best = usize::MAX;
        for i in 0..candidates.len() {
            if !taken[i] && (best == usize::MAX || dist[i] > dist[best]) {
                best = i;
            }
        }
        taken[best] = true;
        let chosen = candidates[best];
        for i in 0..candidates.len() {
            if !taken[i] {
                dist[i] = dist[i].min((candidates[i] - chosen).norm_squared());
            }
        }
    }
    (0..candidates.len()).filter(|&i| taken[i]).collect()
}
