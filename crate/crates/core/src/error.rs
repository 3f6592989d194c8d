use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point cloud has no points")]
    EmptyCloud,
    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },
    #[error("normal {index} is not unit length (norm {norm})")]
    NormalNotUnit { index: usize, norm: f64 },
    #[error("normal {index} is not finite")]
    NonFiniteNormal { index: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("all points coincide; bounding box diagonal is zero")]
    ZeroExtent,
    #[error("invalid neighbor count k = {k} for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("node {node} has degree {degree}; at least 2 is required")]
    LowDegree { node: usize, degree: usize },
    #[error("degenerate neighborhood around node {node} (covariance rank < 2)")]
    DegenerateNeighborhood { node: usize },
    #[error("reference points of node {node} are collinear with it")]
    CollinearReferences { node: usize },
    #[error("node {node} has {available} opposite-color neighbors; at least 2 are required")]
    InsufficientReferences { node: usize, available: usize },
    #[error("node {node} has no normal linearization")]
    MissingLinearization { node: usize },
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sampling map contains index {index} twice")]
    DuplicateIndex { index: usize },
    #[error("point cloud is collinear; no surface triangles exist")]
    CollinearCloud,
    #[error("target count {target} is below the input count {input}")]
    TargetBelowInput { target: usize, input: usize },
    #[error("centroid insertion reached {reached} points, short of target {target}")]
    TargetUnreachable { reached: usize, target: usize },
    #[error("initial coordinates violate the sampling constraint (max deviation {deviation})")]
    InfeasibleStart { deviation: f64 },
    #[error("conjugate gradient did not converge (relative residual {residual})")]
    LinearSolveFailed { residual: f64 },
    #[error("proximal gradient diverged at inner iteration {iteration}; step size too large")]
    ProxDiverged { iteration: usize },
}
