use approx::assert_relative_eq;
use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jgw::align::{align_clusters, weighted_procrustes, RigidTransform};
use jgw::io::{read_point_cloud, write_point_cloud};
use jgw::kernel::{compute_lambda, compute_lambda_naive, objective};
use jgw::metrics::{cluster_mass_matrix, correct_mass_fraction};
use jgw::solver::{sinkhorn_projection, solve, SolverConfig};
use jgw::space::{build_clustered_space, embed, ClusteredSpace, Coupling, PointCluster};
use jgw::synth::sample_empirical;

fn random_space(rng: &mut ChaCha8Rng, k: usize, max_size: usize, dim: usize) -> ClusteredSpace {
    let clusters = (0..k)
        .map(|c| {
            let n = rng.random_range(1..=max_size);
            let pts = Array2::from_shape_fn((n, dim), |_| rng.random_range(-2.0..2.0));
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            PointCluster::new(format!("c{c}"), pts).with_weights(w)
        })
        .collect();
    let masses: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = masses.iter().sum();
    build_clustered_space(clusters, Some(masses.iter().map(|m| m / total).collect())).unwrap()
}

fn random_coupling(rng: &mut ChaCha8Rng, a: &[f64], b: &[f64]) -> Coupling {
    let kernel = Array2::from_shape_fn((a.len(), b.len()), |_| rng.random_range(0.01..1.0));
    sinkhorn_projection(&kernel, a, b, 1e-13, 100_000).unwrap().coupling
}

fn shuffles(rng: &mut ChaCha8Rng, space: &ClusteredSpace) -> Vec<Vec<usize>> {
    space
        .clusters()
        .iter()
        .map(|c| {
            let mut p: Vec<usize> = (0..c.len()).collect();
            for i in (1..p.len()).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        })
        .collect()
}

// global index permutation implied by per-cluster permutations
fn flatten(space: &ClusteredSpace, perms: &[Vec<usize>]) -> Vec<usize> {
    let offsets = space.offsets();
    perms
        .iter()
        .enumerate()
        .flat_map(|(c, p)| p.iter().map(|&j| offsets[c] + j).collect::<Vec<_>>())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_keeps_mass_and_blocks(seed in any::<u64>(), k in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = random_space(&mut rng, k, 10, 2);
        let e = embed(&space);
        let total: f64 = e.marginal().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12 * e.len() as f64);
        let offsets = e.offsets();
        for a in 0..e.len() {
            for b in 0..e.len() {
                let same = offsets.windows(2).any(|w| (w[0]..w[1]).contains(&a) && (w[0]..w[1]).contains(&b));
                prop_assert_eq!(e.same_cluster(a, b), same);
            }
        }
    }

    #[test]
    fn embedding_is_permutation_equivariant(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = random_space(&mut rng, k, 8, 2);
        let perms = shuffles(&mut rng, &space);
        let moved = embed(&space.permuted(&perms).unwrap());
        let e = embed(&space);
        let flat = flatten(&space, &perms);
        for (new, &old) in flat.iter().enumerate() {
            prop_assert_eq!(moved.marginal()[new], e.marginal()[old]);
            for (new2, &old2) in flat.iter().enumerate() {
                if e.same_cluster(old, old2) {
                    prop_assert_eq!(moved.distance(new, new2), e.distance(old, old2));
                }
            }
        }
    }

    #[test]
    fn blockwise_cost_matches_oracle(seed in any::<u64>(), kx in 1usize..=3, ky in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_space(&mut rng, kx, 7, 2);
        let y = random_space(&mut rng, ky, 7, 3);
        let (ex, ey) = (embed(&x), embed(&y));
        let mu = random_coupling(&mut rng, ex.marginal(), ey.marginal());
        let fast = compute_lambda(&mu, &ex, &ey).unwrap();
        let naive = compute_lambda_naive(&mu, &ex, &ey).unwrap();
        let tol = 1e-9 * naive.max_abs().max(1.0);
        for (f, n) in fast.values().iter().zip(naive.values()) {
            prop_assert!((f - n).abs() <= tol);
        }
        prop_assert!(objective(&mu, &ex, &ey).unwrap() >= 0.0);
    }

    #[test]
    fn single_cluster_cost_is_the_dense_contraction(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_space(&mut rng, 1, 9, 2);
        let y = random_space(&mut rng, 1, 9, 2);
        let (ex, ey) = (embed(&x), embed(&y));
        let mu = random_coupling(&mut rng, ex.marginal(), ey.marginal());
        let (dx, dy) = (ex.block(0), ey.block(0));
        let m = mu.plan();
        let ones_x = Array2::<f64>::ones((dx.nrows(), dx.nrows()));
        let ones_y = Array2::<f64>::ones((dy.nrows(), dy.nrows()));
        let dense = dx.mapv(|v| v * v).dot(m).dot(&ones_y) - 2.0 * dx.dot(m).dot(dy) + ones_x.dot(m).dot(&dy.mapv(|v| v * v));
        let fast = compute_lambda(&mu, &ex, &ey).unwrap();
        for (f, d) in fast.values().iter().zip(&dense) {
            prop_assert!((f - d).abs() <= 1e-10 * dense.iter().fold(1.0f64, |a, v| a.max(v.abs())));
        }
    }

    #[test]
    fn objective_ignores_point_order(seed in any::<u64>(), kx in 1usize..=3, ky in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_space(&mut rng, kx, 7, 2);
        let y = random_space(&mut rng, ky, 7, 2);
        let (ex, ey) = (embed(&x), embed(&y));
        let mu = random_coupling(&mut rng, ex.marginal(), ey.marginal());
        let (px, py) = (shuffles(&mut rng, &x), shuffles(&mut rng, &y));
        let moved = mu.permuted(&flatten(&x, &px), &flatten(&y, &py));
        let before = objective(&mu, &ex, &ey).unwrap();
        let after = objective(&moved, &embed(&x.permuted(&px).unwrap()), &embed(&y.permuted(&py).unwrap())).unwrap();
        prop_assert!((before - after).abs() <= 1e-10 * before.max(1e-300));
    }

    #[test]
    fn scaling_meets_marginals(seed in any::<u64>(), n in 1usize..30, m in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel = Array2::from_shape_fn((n, m), |_| rng.random_range(-4.0..4.0f64).exp());
        let norm = |v: Vec<f64>| { let t: f64 = v.iter().sum(); v.into_iter().map(|x| x / t).collect::<Vec<_>>() };
        let a = norm((0..n).map(|_| rng.random_range(0.1..1.0)).collect());
        let b = norm((0..m).map(|_| rng.random_range(0.1..1.0)).collect());
        let out = sinkhorn_projection(&kernel, &a, &b, 1e-10, 100_000).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.coupling.marginal_violation() <= 1e-10);
        prop_assert!((out.coupling.plan().sum() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn procrustes_returns_proper_rotations(seed in any::<u64>(), dim in 2usize..=3, n in 3usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
        let tgt = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
        let fit = weighted_procrustes(src.view(), tgt.view(), w.view()).unwrap();
        let r = &fit.transform.rotation;
        prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((r * r.transpose() - DMatrix::identity(dim, dim)).abs().max() < 1e-9);
    }

    #[test]
    fn procrustes_is_equivariant(seed in any::<u64>(), angle in -180.0f64..180.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let src = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let tgt = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.05 });
        let q = RigidTransform::planar(angle, [0.0, 0.0]);
        let base = weighted_procrustes(src.view(), tgt.view(), w.view()).unwrap();
        let turned = weighted_procrustes(q.apply(src.view()).view(), tgt.view(), w.view()).unwrap();
        prop_assume!(!base.degenerate);
        let expected = &base.transform.rotation * q.rotation.transpose();
        prop_assert!((&turned.transform.rotation - expected).abs().max() < 1e-9);
    }

    #[test]
    fn mass_summaries_are_reaggregations(seed in any::<u64>(), kx in 1usize..=3, ky in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_space(&mut rng, kx, 6, 2);
        let y = random_space(&mut rng, ky, 6, 2);
        let (ex, ey) = (embed(&x), embed(&y));
        let mu = random_coupling(&mut rng, ex.marginal(), ey.marginal());
        let cm = cluster_mass_matrix(&mu, &x, &y).unwrap();
        prop_assert!((cm.total() - mu.plan().sum()).abs() <= 1e-12);
        let expected: Vec<usize> = (0..ex.len()).map(|_| rng.random_range(0..2)).collect();
        let labels: Vec<usize> = (0..ey.len()).map(|_| rng.random_range(0..2)).collect();
        let right = correct_mass_fraction(&mu, &expected, &labels).unwrap();
        let mut wrong = 0.0;
        for ((i, j), &m) in mu.plan().indexed_iter() {
            if expected[i] != labels[j] {
                wrong += m;
            }
        }
        prop_assert!((right + wrong - mu.plan().sum()).abs() <= 1e-12);
    }

    #[test]
    fn empirical_samples_keep_cluster_masses(seed in any::<u64>(), k in 1usize..=3, n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = random_space(&mut rng, k, 8, 2);
        let sample = sample_empirical(&space, n.max(k), seed).unwrap();
        prop_assert_eq!(sample.masses(), space.masses());
        for c in sample.clusters() {
            let w = c.measure();
            prop_assert!(w.iter().all(|&v| v == w[0]));
        }
        let again = sample_empirical(&space, n.max(k), seed).unwrap();
        prop_assert_eq!(embed(&again).marginal().to_vec(), embed(&sample).marginal().to_vec());
    }

    #[test]
    fn point_clouds_round_trip(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = random_space(&mut rng, k, 6, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        write_point_cloud(&path, &space).unwrap();
        let back = read_point_cloud(&path).unwrap();
        let (a, b) = (embed(&space), embed(&back));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.marginal().iter().zip(b.marginal()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        for c in 0..a.num_clusters() {
            for (x, y) in a.block(c).iter().zip(b.block(c)) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solve_is_equivariant(seed in any::<u64>(), kx in 1usize..=2, ky in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_space(&mut rng, kx, 6, 2);
        let y = random_space(&mut rng, ky, 6, 2);
        let (px, py) = (shuffles(&mut rng, &x), shuffles(&mut rng, &y));
        let config = SolverConfig::default();
        let (mu, report) = solve(&x, &y, &config).unwrap();
        let (nu, moved) = solve(&x.permuted(&px).unwrap(), &y.permuted(&py).unwrap(), &config).unwrap();
        prop_assert!((report.objective - moved.objective).abs() <= 1e-8 * report.objective.max(1e-300));
        let expected = mu.permuted(&flatten(&x, &px), &flatten(&y, &py));
        for (p, q) in nu.plan().iter().zip(expected.plan()) {
            prop_assert!((p - q).abs() <= 1e-8);
        }
        prop_assert!(nu.marginal_violation() <= config.sinkhorn_tol * 10.0);
    }

    #[test]
    fn permutation_coupling_recovers_transforms(seed in any::<u64>(), angle in -180.0f64..180.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = Array2::from_shape_fn((7, 3), |_| rng.random_range(-1.0..1.0));
        let truth = RigidTransform::from_axis_angle([0.3, -1.0, 0.5], angle, [1.0, 2.0, -0.5]);
        let moved = truth.apply(pts.view());
        let source = build_clustered_space(vec![PointCluster::new("a", pts)], None).unwrap();
        let target = build_clustered_space(vec![PointCluster::new("a", moved)], None).unwrap();
        let n = source.num_points();
        let mu = Coupling::new(Array2::eye(n) / n as f64, vec![1.0 / n as f64; n], vec![1.0 / n as f64; n]).unwrap();
        let fit = &align_clusters(&mu, &source, &target, true).unwrap()[0];
        assert_relative_eq!(
            (&fit.transform.rotation - &truth.rotation).abs().max(), 0.0, epsilon = 1e-9
        );
        prop_assert!((&fit.transform.translation - &truth.translation).abs().max() < 1e-9);
        prop_assert_eq!(mu.plan().len_of(Axis(0)), n);
    }
}
