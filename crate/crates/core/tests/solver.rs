mod common;

use common::*;
use gtvsr_core::normals::{EdgeBlock, NormalDifferenceOperator};
use gtvsr_core::solver::{
    admm_solve, dual_update, m_gradient, m_objective, m_step, p_step, soft_threshold,
    LinearSolveOptions, PrimalResidual, SamplingConstraint,
};
use gtvsr_core::{gtv, Point3, SolverConfig};
use nalgebra::{DMatrix, Matrix3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_p_step(
    op: &NormalDifferenceOperator,
    constraint: &SamplingConstraint,
    m: &[f64],
    y1: &[f64],
    y2: &[f64],
    rho: f64,
) -> Vec<f64> {
    let n = op.num_nodes();
    let b = dense_b(op);
    let c = dense_c(constraint, n);
    let lhs = (b.transpose() * &b + c.transpose() * &c) * rho;
    let q = dvec(constraint.targets());
    let v = dvec(&op.offset());
    let rhs = c.transpose() * (&q * rho - dvec(y2))
        + b.transpose() * (dvec(m) * rho - &v * rho - dvec(y1));
    let x = lhs
        .cholesky()
        .expect("generic instance is positive definite")
        .solve(&rhs);
    x.as_slice().to_vec()
}

#[test]
fn p_step_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = 30;
        let op = random_operator(&mut rng, n, 30);
        let constraint = random_constraint(&mut rng, n, 8);
        let e = 3 * op.num_edges();
        let (m, y1, y2) = (
            random_vec(&mut rng, e),
            random_vec(&mut rng, e),
            random_vec(&mut rng, 24),
        );
        let expected = dense_p_step(&op, &constraint, &m, &y1, &y2, 5.0);
        let got = p_step(
            &op,
            &constraint,
            &m,
            &y1,
            &y2,
            5.0,
            &vec![0.0; 3 * n],
            &LinearSolveOptions::default(),
        )
        .unwrap();
        assert!(
            rel_diff(&got.x, &expected) < 1e-6,
            "{}",
            rel_diff(&got.x, &expected)
        );
        assert!(got.relative_residual <= 1e-8);
    }
}

#[test]
fn p_step_without_edges_shifts_targets_by_dual() {
    let targets = [Point3::new(1.0, 2.0, 3.0), Point3::new(-1.0, 0.5, 0.0)];
    let constraint = SamplingConstraint::new(2, &[(0, targets[0]), (1, targets[1])]).unwrap();
    let op = NormalDifferenceOperator::from_blocks(2, Vec::new()).unwrap();
    let y2 = [0.5, -1.0, 2.0, 0.0, 1.0, -0.5];
    let rho = 2.0;
    let got = p_step(
        &op,
        &constraint,
        &[],
        &[],
        &y2,
        rho,
        &[0.0; 6],
        &LinearSolveOptions::default(),
    )
    .unwrap();
    let q = constraint.targets();
    for r in 0..6 {
        assert!((got.x[r] - (q[r] - y2[r] / rho)).abs() < 1e-12);
    }
}

#[test]
fn p_step_recovers_an_exact_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 20;
    let op = random_operator(&mut rng, n, 20);
    let truth = random_vec(&mut rng, 3 * n);
    let anchors: Vec<(usize, Point3)> = (0..5)
        .map(|c| {
            (
                c,
                Point3::new(truth[3 * c], truth[3 * c + 1], truth[3 * c + 2]),
            )
        })
        .collect();
    let constraint = SamplingConstraint::new(n, &anchors).unwrap();
    let m = op.eval(&truth);
    let e = m.len();
    let got = p_step(
        &op,
        &constraint,
        &m,
        &vec![0.0; e],
        &[0.0; 15],
        5.0,
        &vec![0.0; 3 * n],
        &LinearSolveOptions::default(),
    )
    .unwrap();
    assert!(rel_diff(&got.x, &truth) < 1e-8);
}

#[test]
fn coordinate_matrix_is_positive_definite_when_every_node_is_covered() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let n = 8;
        let op = random_operator(&mut rng, n, 4);
        let constraint = random_constraint(&mut rng, n, 2);
        let b = dense_b(&op);
        let c = dense_c(&constraint, n);
        let k = b.transpose() * &b + c.transpose() * &c;
        let smallest = k.symmetric_eigen().eigenvalues.min();
        assert!(smallest > 0.0, "{smallest}");
    }
}

#[test]
fn m_gradient_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let op = random_operator(&mut rng, 6, 3);
    let p = random_vec(&mut rng, 18);
    let e = 3 * op.num_edges();
    let at_consistency = m_gradient(&op, &p, &op.eval(&p), &vec![0.0; e], 5.0);
    assert!(at_consistency.iter().all(|g| g.abs() < 1e-12));

    // rho = 1 and B p + v - m = (1, 0, ...)
    let mut m = op.eval(&p);
    m[0] -= 1.0;
    let g = m_gradient(&op, &p, &m, &vec![0.0; e], 1.0);
    assert!((g[0] + 1.0).abs() < 1e-12);
    assert!(g[1..].iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn m_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let op = random_operator(&mut rng, 6, 4);
    let p = random_vec(&mut rng, 18);
    let e = 3 * op.num_edges();
    let m = random_vec(&mut rng, e);
    let y1 = random_vec(&mut rng, e);
    let rho = 3.0;
    let bp_v = op.eval(&p);
    let zero_weights = vec![0.0; op.num_edges()];
    let g = m_gradient(&op, &p, &m, &y1, rho);
    let h = 1e-5;
    for r in 0..e {
        let mut plus = m.clone();
        let mut minus = m.clone();
        plus[r] += h;
        minus[r] -= h;
        let fd = (m_objective(&bp_v, &plus, &y1, &zero_weights, rho)
            - m_objective(&bp_v, &minus, &y1, &zero_weights, rho))
            / (2.0 * h);
        assert!((fd - g[r]).abs() < 1e-6, "{r}: {fd} vs {}", g[r]);
    }
}

#[test]
fn soft_threshold_branches() {
    assert!((soft_threshold(0.5, 0.2) - 0.3).abs() < 1e-15);
    assert_eq!(soft_threshold(0.1, 0.2), 0.0);
    assert!((soft_threshold(-0.5, 0.2) + 0.3).abs() < 1e-15);
    assert_eq!(soft_threshold(0.2, 0.2), 0.0);
}

fn grid_argmin(f: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for step in 0..=40_000 {
        let theta = -2.0 + step as f64 * 1e-4;
        let value = f(theta);
        if value < best.0 {
            best = (value, theta);
        }
    }
    best.1
}

#[test]
fn soft_threshold_is_the_weighted_l1_prox() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..200 {
        let m: f64 = rng.gen_range(-1.5..1.5);
        let t: f64 = rng.gen_range(0.01..1.0);
        let w: f64 = rng.gen_range(0.0..1.0);
        let half_scaled = grid_argmin(|th| w * th.abs() + (th - m) * (th - m) / (2.0 * t));
        assert!((soft_threshold(m, t * w) - half_scaled).abs() <= 1e-4);
        let unscaled = grid_argmin(|th| w * th.abs() + (th - m) * (th - m) / t);
        assert!((soft_threshold(m, t * w / 2.0) - unscaled).abs() <= 1e-4);
    }
}

proptest! {
    #[test]
    fn soft_threshold_is_monotone_and_nonexpansive(a in -10.0f64..10.0, b in -10.0f64..10.0, th in 0.0f64..5.0) {
        let (pa, pb) = (soft_threshold(a, th), soft_threshold(b, th));
        prop_assert!((pa - pb).abs() <= (a - b).abs() + 1e-15);
        if a <= b {
            prop_assert!(pa <= pb);
        }
    }
}

#[test]
fn m_step_without_weights_reaches_the_quadratic_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let base = random_operator(&mut rng, 5, 3);
    let blocks: Vec<EdgeBlock> = base
        .blocks()
        .iter()
        .map(|b| EdgeBlock {
            weight: 0.0,
            ..b.clone()
        })
        .collect();
    let op = NormalDifferenceOperator::from_blocks(5, blocks).unwrap();
    let p = random_vec(&mut rng, 15);
    let e = 3 * op.num_edges();
    let y1 = random_vec(&mut rng, e);
    let rho = 5.0;
    let out = m_step(&op, &p, &vec![0.0; e], &y1, rho, 0.1, 10_000, 1e-12).unwrap();
    let expected: Vec<f64> = op
        .eval(&p)
        .iter()
        .zip(&y1)
        .map(|(a, y)| a + y / rho)
        .collect();
    assert!(rel_diff(&out.m, &expected) < 1e-9);
}

#[test]
fn m_step_single_edge_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..20 {
        let weight = rng.gen_range(0.1..1.0);
        let block = EdgeBlock {
            i: 0,
            j: 1,
            left: Matrix3::identity(),
            right: -Matrix3::identity(),
            offset: random_point(&mut rng, 0.5),
            weight,
        };
        let op = NormalDifferenceOperator::from_blocks(2, vec![block]).unwrap();
        let p = random_vec(&mut rng, 6);
        let y1 = random_vec(&mut rng, 3);
        let rho = 5.0;
        let out = m_step(&op, &p, &[0.0; 3], &y1, rho, 0.1, 1000, 1e-12).unwrap();
        let a = op.eval(&p);
        for r in 0..3 {
            let best = grid_argmin(|th| {
                weight * th.abs() + y1[r] * (a[r] - th) + 0.5 * rho * (a[r] - th).powi(2)
            });
            assert!((out.m[r] - best).abs() <= 1e-4, "{} vs {best}", out.m[r]);
        }
    }
}

#[test]
fn m_step_keeps_an_optimal_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let op = random_operator(&mut rng, 5, 3);
    let p = random_vec(&mut rng, 15);
    let e = 3 * op.num_edges();
    let y1 = random_vec(&mut rng, e);
    let rho = 5.0;
    let weights = op.weights();
    let a = op.eval(&p);
    let optimum: Vec<f64> = (0..e)
        .map(|r| soft_threshold(a[r] + y1[r] / rho, weights[r / 3] / rho))
        .collect();
    let out = m_step(&op, &p, &optimum, &y1, rho, 0.1, 100, 1e-5).unwrap();
    assert_eq!(out.iterations, 1);
    assert!(rel_diff(&out.m, &optimum) < 1e-12);
    assert!(
        m_objective(&a, &out.m, &y1, &weights, rho)
            <= m_objective(&a, &optimum, &y1, &weights, rho) + 1e-12
    );
}

#[test]
fn dual_update_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let op = random_operator(&mut rng, 6, 3);
    let constraint = random_constraint(&mut rng, 6, 2);
    let mut p = random_vec(&mut rng, 18);
    for (r, &c) in constraint.cols().iter().enumerate() {
        p[3 * c..3 * c + 3].copy_from_slice(&constraint.targets()[3 * r..3 * r + 3]);
    }
    let e = 3 * op.num_edges();
    let y1_0 = random_vec(&mut rng, e);
    let y2_0 = random_vec(&mut rng, 6);

    let feasible = PrimalResidual::new(&op, &constraint, &p, &op.eval(&p));
    let (mut y1, mut y2) = (y1_0.clone(), y2_0.clone());
    dual_update(&mut y1, &mut y2, &feasible, 5.0);
    assert_eq!((&y1, &y2), (&y1_0, &y2_0));

    let m = random_vec(&mut rng, e);
    let q = random_vec(&mut rng, 18);
    let residual = PrimalResidual::new(&op, &constraint, &q, &m);
    let (mut y1, mut y2) = (y1_0.clone(), y2_0.clone());
    dual_update(&mut y1, &mut y2, &residual, 0.0);
    assert_eq!((&y1, &y2), (&y1_0, &y2_0));

    let rho = 2.5;
    let (mut y1, mut y2) = (y1_0.clone(), y2_0.clone());
    dual_update(&mut y1, &mut y2, &residual, rho);
    let bq_v = op.eval(&q);
    for r in 0..e {
        assert!((y1[r] - (y1_0[r] + rho * (bq_v[r] - m[r]))).abs() < 1e-12);
    }
    for (row, &c) in constraint.cols().iter().enumerate() {
        for d in 0..3 {
            let expected =
                y2_0[3 * row + d] + rho * (q[3 * c + d] - constraint.targets()[3 * row + d]);
            assert!((y2[3 * row + d] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn admm_without_edges_stops_after_one_iteration() {
    let targets = [Point3::new(0.0, 1.0, 2.0), Point3::new(3.0, 4.0, 5.0)];
    let constraint = SamplingConstraint::new(2, &[(0, targets[0]), (1, targets[1])]).unwrap();
    let op = NormalDifferenceOperator::from_blocks(2, Vec::new()).unwrap();
    let out = admm_solve(
        &op,
        &constraint,
        constraint.targets(),
        &SolverConfig::default(),
        None,
    )
    .unwrap();
    assert!(out.diagnostics.converged);
    assert_eq!(out.diagnostics.iterations(), 1);
    assert_eq!(constraint.max_deviation(&out.p), 0.0);
}

#[test]
fn admm_rejects_an_infeasible_start() {
    let constraint = SamplingConstraint::new(1, &[(0, Point3::new(1.0, 0.0, 0.0))]).unwrap();
    let op = NormalDifferenceOperator::from_blocks(1, Vec::new()).unwrap();
    assert!(admm_solve(&op, &constraint, &[0.0; 3], &SolverConfig::default(), None).is_err());
}

fn tight_config() -> SolverConfig {
    SolverConfig {
        primal_tol: 1e-10,
        dual_tol: Some(1e-10),
        admm_max_iters: 20_000,
        prox_max_iters: 500,
        rel_change_tol: 1e-12,
        ..SolverConfig::default()
    }
}

/// Free node between two anchors with identity normals: minimizes
/// `w01 |x0 - x1|_1 + w12 |x1 - x2|_1` over `x1`.
#[test]
fn admm_free_node_between_anchors_matches_exhaustive_search() {
    let anchors = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, -1.0)];
    let (w01, w12) = (1.0, 0.4);
    let block = |i, j, weight| EdgeBlock {
        i,
        j,
        left: Matrix3::identity(),
        right: -Matrix3::identity(),
        offset: Point3::zeros(),
        weight,
    };
    let op =
        NormalDifferenceOperator::from_blocks(3, vec![block(0, 1, w01), block(1, 2, w12)]).unwrap();
    let constraint = SamplingConstraint::new(3, &[(0, anchors[0]), (2, anchors[1])]).unwrap();
    let mid = (anchors[0] + anchors[1]) / 2.0;
    let p0 = [anchors[0].as_slice(), mid.as_slice(), anchors[1].as_slice()].concat();
    let out = admm_solve(&op, &constraint, &p0, &tight_config(), None).unwrap();

    for (d, (&a, &b)) in anchors[0].iter().zip(anchors[1].iter()).enumerate() {
        let lo = a.min(b) - 1.0;
        let best = (0..=40_000)
            .map(|s| lo + s as f64 * (a - b).abs().max(1.0) * 3.0 / 40_000.0)
            .min_by(|x, y| {
                let f = |x: f64| w01 * (a - x).abs() + w12 * (x - b).abs();
                f(*x).total_cmp(&f(*y))
            })
            .unwrap();
        assert!(
            (out.p[3 + d] - best).abs() < 1e-3,
            "axis {d}: {} vs {best}",
            out.p[3 + d]
        );
    }
}

#[test]
fn admm_reaches_the_same_objective_from_different_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let n = 10;
        let op = random_operator(&mut rng, n, 8);
        let constraint = random_constraint(&mut rng, n, 3);
        let start = |rng: &mut ChaCha8Rng| {
            let mut p = random_vec(rng, 3 * n);
            for (r, &c) in constraint.cols().iter().enumerate() {
                p[3 * c..3 * c + 3].copy_from_slice(&constraint.targets()[3 * r..3 * r + 3]);
            }
            p
        };
        let (pa, pb) = (start(&mut rng), start(&mut rng));
        let a = admm_solve(&op, &constraint, &pa, &tight_config(), None).unwrap();
        let b = admm_solve(&op, &constraint, &pb, &tight_config(), None).unwrap();
        let (fa, fb) = (a.diagnostics.final_gtv, b.diagnostics.final_gtv);
        assert!(
            (fa - fb).abs() <= 1e-3 * fa.abs().max(fb.abs()),
            "{fa} vs {fb}"
        );
        for out in [&a, &b] {
            assert!(out.diagnostics.converged);
            assert!(out.diagnostics.final_residual() <= tight_config().primal_tol);
            assert!(out.diagnostics.final_gtv <= out.diagnostics.initial_gtv);
        }
    }
}

#[test]
fn residual_history_has_one_entry_per_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let op = random_operator(&mut rng, 8, 6);
    let constraint = random_constraint(&mut rng, 8, 3);
    let mut p = random_vec(&mut rng, 24);
    for (r, &c) in constraint.cols().iter().enumerate() {
        p[3 * c..3 * c + 3].copy_from_slice(&constraint.targets()[3 * r..3 * r + 3]);
    }
    let config = SolverConfig {
        admm_max_iters: 7,
        primal_tol: 1e-300,
        dual_tol: Some(1e-300),
        ..SolverConfig::default()
    };
    let out = admm_solve(&op, &constraint, &p, &config, None).unwrap();
    assert_eq!(out.diagnostics.iterations(), 7);
    assert!(!out.diagnostics.converged);
    let weights = op.weights();
    let last = out.diagnostics.history.last().unwrap();
    assert!((last.gtv - gtv(&op.eval(&out.p), &weights).unwrap()).abs() < 1e-9);
    let _ = DMatrix::<f64>::zeros(1, 1);
}
