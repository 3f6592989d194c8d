//! Downsample, upsample and score: the benchmark protocol.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use gtvsr_core::solver::{refine, Superresolution};
use gtvsr_core::{
    evaluate, interpolate, rescale_to_unit_diagonal, ErrorReport, Point3, PointCloud, SamplingMap,
    SolverConfig,
};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_RATIO: f64 = 0.3;
pub const DEFAULT_SEED: u64 = 0x5eed;
const BISECTION_ITERS: usize = 40;
const COUNT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("downsample ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("ratio {ratio} keeps fewer than 4 of {n} points")]
    TooFewPoints { ratio: f64, n: usize },
    #[error("downsampling did not reach the target after {iterations} bisection steps (achieved ratio {achieved})")]
    BisectionFailed { iterations: usize, achieved: f64 },
    #[error("no method selected")]
    NoMethods,
    #[error(transparent)]
    Core(#[from] gtvsr_core::Error),
}

/// Greedy dart throwing at radius `r`: starting from the points in `seed`,
/// visits `order` and accepts each point with no accepted point closer than
/// `r`, stopping once `limit` points are accepted.
fn dart_throw(
    points: &[Point3],
    order: &[usize],
    r: f64,
    seed: &[usize],
    limit: usize,
) -> Vec<usize> {
    let mut accepted = seed.to_vec();
    if r <= 0.0 {
        let mut taken = vec![false; points.len()];
        seed.iter().for_each(|&i| taken[i] = true);
        accepted.extend(order.iter().copied().filter(|&i| !taken[i]));
        accepted.truncate(limit.max(seed.len()));
        return accepted;
    }
    let cell = |p: &Point3| {
        (
            (p.x / r).floor() as i64,
            (p.y / r).floor() as i64,
            (p.z / r).floor() as i64,
        )
    };
    let r2 = r * r;
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for &i in seed {
        grid.entry(cell(&points[i])).or_default().push(i);
    }
    for &i in order {
        if accepted.len() >= limit {
            break;
        }
        let p = &points[i];
        let (cx, cy, cz) = cell(p);
        let blocked = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                (-1..=1).any(|dz| {
                    grid.get(&(cx + dx, cy + dy, cz + dz))
                        .is_some_and(|bucket| {
                            bucket.iter().any(|&j| (points[j] - p).norm_squared() < r2)
                        })
                })
            })
        });
        if !blocked {
            grid.entry((cx, cy, cz)).or_default().push(i);
            accepted.push(i);
        }
    }
    accepted
}

/// Poisson-disk subsampling by greedy dart throwing.
///
/// Points are visited in a seeded random order and accepted when no accepted
/// point lies closer than `r`. The radius is bisected until the accepted count
/// is within 2% of `ratio * n`. When the count jumps across that window at one
/// radius, the sparser set is topped up at the smaller radius instead. The
/// result keeps the input order.
pub fn poisson_disk_downsample(
    cloud: &PointCloud,
    ratio: f64,
    seed: u64,
) -> Result<(PointCloud, SamplingMap), HarnessError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(HarnessError::InvalidRatio(ratio));
    }
    let points = cloud.points();
    let n = points.len();
    let target = ratio * n as f64;
    if target < 4.0 {
        return Err(HarnessError::TooFewPoints { ratio, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let within = |count: usize| (count as f64 - target).abs() <= COUNT_TOLERANCE * target;
    let throw = |r: f64| dart_throw(points, &order, r, &[], n);
    let mut lo = 0.0;
    let mut hi = cloud.bounding_box_diagonal();
    let mut accepted = throw(lo);
    let mut iterations = 0;
    while !within(accepted.len()) && iterations < BISECTION_ITERS {
        iterations += 1;
        let r = 0.5 * (lo + hi);
        accepted = throw(r);
        if accepted.len() as f64 > target {
            lo = r;
        } else {
            hi = r;
        }
    }
    if !within(accepted.len()) {
        // The count can jump over the target at a single radius (regular
        // grids do). Keep the sparse set from above the jump and fill it at
        // the radius below, which still separates every pair by `lo`.
        let sparse = throw(hi);
        if (sparse.len() as f64) < target {
            accepted = dart_throw(points, &order, lo, &sparse, target.round() as usize);
        }
        if !within(accepted.len()) {
            return Err(HarnessError::BisectionFailed {
                iterations,
                achieved: accepted.len() as f64 / n as f64,
            });
        }
    }
    accepted.sort_unstable();
    let map = SamplingMap::new(accepted, n)?;
    Ok((map.select(cloud)?, map))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Low,
    Initial,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Low, Method::Initial, Method::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Method::Low => "low",
            Method::Initial => "initial",
            Method::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected low, initial or proposed)"))
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub model: String,
    pub ground_truth: PointCloud,
    pub ratio: f64,
    pub seed: u64,
    pub config: SolverConfig,
    pub methods: Vec<Method>,
    /// Neighbourhood size for normals estimated by the point-to-plane metric.
    pub k_normals: usize,
    /// Record wall-clock times; when off the column is zero so that output
    /// stays byte-for-byte reproducible.
    pub wall_time: bool,
}

impl BenchmarkSpec {
    pub fn new(model: impl Into<String>, ground_truth: PointCloud) -> Self {
        Self {
            model: model.into(),
            ground_truth,
            ratio: DEFAULT_RATIO,
            seed: DEFAULT_SEED,
            config: SolverConfig::default(),
            methods: Method::ALL.to_vec(),
            k_normals: 8,
            wall_time: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub model: String,
    pub method: Method,
    pub n_points: usize,
    pub report: ErrorReport,
    pub wall_time_s: f64,
    pub admm_iters: usize,
    /// Full solver output for the proposed row.
    pub solve: Option<Superresolution>,
}

/// Runs the protocol: rescale to unit diagonal, downsample, then score each
/// requested method against the rescaled ground truth. Rows come back in
/// `Method` order regardless of the order requested.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<BenchmarkRow>, HarnessError> {
    let mut methods = spec.methods.clone();
    methods.sort_unstable();
    methods.dedup();
    if methods.is_empty() {
        return Err(HarnessError::NoMethods);
    }
    spec.config.validate()?;
    let (truth, _) = rescale_to_unit_diagonal(&spec.ground_truth)?;
    let (low, _) = poisson_disk_downsample(&truth, spec.ratio, spec.seed)?;
    let low = low.without_normals();
    let target = truth.len();

    let needs_initial = methods.iter().any(|m| *m != Method::Low);
    let start = Instant::now();
    let initial = needs_initial
        .then(|| interpolate(&low, Some(target), &spec.config.interpolation))
        .transpose()?;
    let interpolation_time = start.elapsed().as_secs_f64();

    let rows = methods
        .par_iter()
        .map(|&method| -> Result<BenchmarkRow, HarnessError> {
            let start = Instant::now();
            let (cloud, admm_iters, solve, extra) = match method {
                Method::Low => (low.clone(), 0, None, 0.0),
                Method::Initial => {
                    let init = initial.as_ref().expect("interpolated above");
                    (init.cloud.clone(), 0, None, interpolation_time)
                }
                Method::Proposed => {
                    let init = initial.clone().expect("interpolated above");
                    let solved = refine(init, &spec.config)?;
                    let iters = solved.report.admm_iterations();
                    (
                        solved.cloud.clone().without_normals(),
                        iters,
                        Some(solved),
                        interpolation_time,
                    )
                }
            };
            let elapsed = start.elapsed().as_secs_f64() + extra;
            let report = evaluate(&cloud, &truth, spec.k_normals)?;
            Ok(BenchmarkRow {
                model: spec.model.clone(),
                method,
                n_points: cloud.len(),
                report,
                wall_time_s: if spec.wall_time { elapsed } else { 0.0 },
                admm_iters,
                solve,
            })
        })
        .collect::<Vec<_>>();
    rows.into_iter().collect()
}
