//! Point cloud container, the low-res/full-res index map and bounding-box
//! normalization.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Vector3<f64>;

/// Tolerance on the norm of stored unit normals.
pub const UNIT_NORMAL_TOLERANCE: f64 = 1e-6;

/// An ordered, nonempty list of finite 3D points with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Point3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        Self::with_optional_normals(points, None)
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Point3>) -> Result<Self> {
        Self::with_optional_normals(points, Some(normals))
    }

    pub fn with_optional_normals(
        points: Vec<Point3>,
        normals: Option<Vec<Point3>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::NonFinitePoint { index });
        }
        if let Some(normals) = &normals {
            if normals.len() != points.len() {
                return Err(Error::ShapeMismatch {
                    what: "normals",
                    expected: points.len(),
                    found: normals.len(),
                });
            }
            for (index, n) in normals.iter().enumerate() {
                if !is_finite(n) {
                    return Err(Error::NonFiniteNormal { index });
                }
                let norm = n.norm();
                if (norm - 1.0).abs() > UNIT_NORMAL_TOLERANCE {
                    return Err(Error::NormalNotUnit { index, norm });
                }
            }
        }
        Ok(Self { points, normals })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Point3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point3, Point3) {
        bounding_box(&self.points)
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }
}

pub(crate) fn is_finite(p: &Point3) -> bool {
    p.iter().all(|c| c.is_finite())
}

pub(crate) fn bounding_box(points: &[Point3]) -> (Point3, Point3) {
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Selection of the low-resolution points inside a full-resolution cloud.
///
/// Stands in for the 0/1 sampling matrix: entry `r` says that low-res point
/// `r` is full-res point `indices[r]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMap {
    indices: Vec<usize>,
}

impl SamplingMap {
    pub fn new(indices: Vec<usize>, full_len: usize) -> Result<Self> {
        let mut seen = alloc::vec![false; full_len];
        for &index in &indices {
            if index >= full_len {
                return Err(Error::IndexOutOfRange {
                    index,
                    len: full_len,
                });
            }
            if seen[index] {
                return Err(Error::DuplicateIndex { index });
            }
            seen[index] = true;
        }
        Ok(Self { indices })
    }

    /// The map `0..count`, used when the low-res points lead the full cloud.
    pub fn prefix(count: usize) -> Self {
        Self {
            indices: (0..count).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Gathers `Cp`.
    pub fn apply(&self, full: &[Point3]) -> Vec<Point3> {
        self.indices.iter().map(|&i| full[i]).collect()
    }

    pub fn select(&self, full: &PointCloud) -> Result<PointCloud> {
        if let Some(&index) = self.indices.iter().find(|&&i| i >= full.len()) {
            return Err(Error::IndexOutOfRange {
                index,
                len: full.len(),
            });
        }
        let normals = full
            .normals()
            .map(|n| self.indices.iter().map(|&i| n[i]).collect());
        PointCloud::with_optional_normals(self.apply(full.points()), normals)
    }
}

/// Parameters of `output = (input - offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescale {
    pub scale: f64,
    pub offset: Point3,
}

impl Rescale {
    pub fn apply(&self, p: &Point3) -> Point3 {
        (p - self.offset) * self.scale
    }

    pub fn invert(&self, p: &Point3) -> Point3 {
        p / self.scale + self.offset
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud.points().iter().map(|p| self.apply(p)).collect();
        PointCloud {
            points,
            normals: cloud.normals.clone(),
        }
    }

    pub fn invert_cloud(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud.points().iter().map(|p| self.invert(p)).collect();
        PointCloud {
            points,
            normals: cloud.normals.clone(),
        }
    }
}

/// Translates the bounding-box minimum to the origin and scales so the
/// bounding-box diagonal has length 1.
pub fn rescale_to_unit_diagonal(cloud: &PointCloud) -> Result<(PointCloud, Rescale)> {
    let (lo, hi) = cloud.bounding_box();
    let diagonal = (hi - lo).norm();
    if !(diagonal > 0.0) {
        return Err(Error::ZeroExtent);
    }
    let rescale = Rescale {
        scale: 1.0 / diagonal,
        offset: lo,
    };
    Ok((rescale.apply_cloud(cloud), rescale))
}
