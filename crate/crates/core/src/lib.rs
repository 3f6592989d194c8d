//! Point cloud super-resolution by minimizing the graph total variation of
//! surface normals.
//!
//! A low-resolution cloud is densified by inserting centroids of local
//! Delaunay triangles, after which the inserted coordinates are refined by an
//! ADMM solver that alternates between two node classes (red and blue). While
//! one class is optimized, the other is held fixed and supplies the reference
//! points that make every normal an affine function of its own coordinate.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the benchmark
//! harness and the command-line front end live in the companion `gtvsr` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cloud;
pub mod error;
pub mod graph;
pub mod interpolate;
pub mod kdtree;
pub mod metrics;
pub mod normals;
pub mod solver;

mod delaunay;
mod linalg;

pub use cloud::{rescale_to_unit_diagonal, Point3, PointCloud, Rescale, SamplingMap};
pub use error::{Error, Result};
pub use graph::{
    build_bipartite_partition, edge_weight, greedy_max_cut, knn_graph, opposite_color_neighbors,
    subgraph_same_color, BipartitePartition, Color, Edge, KnnGraph, SigmaP,
};
pub use interpolate::{insert_centroids, interpolate, triangulate_surface, InterpolationResult};
pub use kdtree::KdTree;
pub use metrics::{c2c, c2p, evaluate, DirectedError, ErrorReport};
pub use normals::{
    assemble_difference_operator, estimate_normals, gtv, linearize_normal, LinearizedNormal,
    NormalDifferenceOperator, NormalLinearization,
};
pub use solver::{superresolve, SolverConfig, Superresolution};
