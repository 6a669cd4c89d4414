//! Seeded synthetic instances: noisy spirals, split shapes, letters,
//! rigid fragments, and empirical resampling of a space.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::RigidTransform;
use crate::error::{JgwError, Result};
use crate::metrics::{correct_mass_fraction, noise_mass_fraction};
use crate::solver::{solve, SolverConfig};
use crate::space::{build_clustered_space, Cluster, ClusteredSpace, Coupling, PointCluster};

/// Bound on rejected draws in [`sample_empirical`].
pub const MAX_SAMPLING_ATTEMPTS: u64 = 1000;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// How positions along the spiral are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpiralSampling {
    /// Uniform in arc length.
    #[default]
    ArcLength,
    /// Uniform in the angle θ; crowds points near the center.
    Angle,
}

/// Archimedean spiral `r = growth·θ` plus isotropic Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiralSpec {
    pub n_spiral: usize,
    pub n_noise: usize,
    pub noise_sigma: f64,
    pub spiral_turns: f64,
    pub jitter_sigma: f64,
    pub growth: f64,
    pub sampling: SpiralSampling,
    pub seed: u64,
}

impl Default for SpiralSpec {
    fn default() -> Self {
        SpiralSpec {
            n_spiral: 100,
            n_noise: 50,
            noise_sigma: 1.0,
            spiral_turns: 2.0,
            jitter_sigma: 0.05,
            growth: 0.5,
            sampling: SpiralSampling::ArcLength,
            seed: 0,
        }
    }
}

impl SpiralSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(JgwError::InvalidConfig {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.n_spiral == 0 {
            return bad("n_spiral", "must be at least 1");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", "must be positive");
        }
        if !(self.spiral_turns > 0.0 && self.spiral_turns.is_finite()) {
            return bad("spiral_turns", "must be positive");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter_sigma", "must be nonnegative");
        }
        if !(self.growth > 0.0 && self.growth.is_finite()) {
            return bad("growth", "must be positive");
        }
        Ok(())
    }
}

/// A spiral source against a fresh spiral sample plus noise.
#[derive(Debug, Clone)]
pub struct SpiralPair {
    pub source: ClusteredSpace,
    pub target: ClusteredSpace,
    /// Over target points; spiral points come first.
    pub noise_mask: Vec<bool>,
}

// Arc length of r = θ from 0 to θ; scales linearly with the growth rate.
fn unit_spiral_arc(theta: f64) -> f64 {
    0.5 * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
}

fn angle_at_arc(target: f64, top: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if unit_spiral_arc(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn spiral_points(spec: &SpiralSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let top = 2.0 * PI * spec.spiral_turns;
    let total_arc = unit_spiral_arc(top);
    let jitter = Normal::new(0.0, spec.jitter_sigma).expect("validated sigma");
    let mut pts = Array2::zeros((spec.n_spiral, 2));
    for mut row in pts.rows_mut() {
        let theta = match spec.sampling {
            SpiralSampling::Angle => rng.random_range(0.0..=top),
            SpiralSampling::ArcLength => angle_at_arc(rng.random_range(0.0..=total_arc), top),
        };
        let r = spec.growth * theta;
        row[0] = r * theta.cos() + jitter.sample(rng);
        row[1] = r * theta.sin() + jitter.sample(rng);
    }
    pts
}

pub fn gen_spiral_pair(spec: &SpiralSpec) -> Result<SpiralPair> {
    spec.validate()?;
    let mut rng = rng(spec.seed);
    let source_pts = spiral_points(spec, &mut rng);
    let target_spiral = spiral_points(spec, &mut rng);
    let noise = Array2::from_shape_fn((spec.n_noise, 2), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        spec.noise_sigma * z
    });
    let target_pts = concatenate![Axis(0), target_spiral, noise];
    let mut noise_mask = vec![false; spec.n_spiral];
    noise_mask.resize(spec.n_spiral + spec.n_noise, true);
    Ok(SpiralPair {
        source: ClusteredSpace::single(Cluster::from_points("spiral", source_pts, None)?)?,
        target: ClusteredSpace::single(Cluster::from_points("target", target_pts, None)?)?,
        noise_mask,
    })
}

/// Adds a one-point cluster carrying `1 − retained_mass`, so that only
/// `retained_mass` of the source needs a partner. The dummy sits at the
/// source centroid when coordinates are available.
pub fn gen_dummy_cluster_wrap(source: &ClusteredSpace, retained_mass: f64) -> Result<ClusteredSpace> {
    if !(retained_mass > 0.0 && retained_mass < 1.0) {
        return Err(JgwError::InvalidArgument(format!(
            "retained mass {retained_mass} outside (0, 1)"
        )));
    }
    if source.num_clusters() != 1 {
        return Err(JgwError::InvalidArgument(format!(
            "dummy wrap expects one cluster, found {}",
            source.num_clusters()
        )));
    }
    let base = source.clusters()[0].clone();
    let centroid = base
        .points()
        .map(|p| p.t().dot(base.measure()).to_vec());
    let dummy = Cluster::singleton("dummy", centroid.as_deref());
    ClusteredSpace::new(vec![base, dummy], vec![retained_mass, 1.0 - retained_mass])
}

/// A labeled point set as separate clusters and as one whole.
#[derive(Debug, Clone)]
pub struct SplitShape {
    pub split: ClusteredSpace,
    pub whole: ClusteredSpace,
    /// Position in `whole` of each point of `split`, in embedding order.
    pub split_to_whole: Vec<usize>,
    /// Split cluster index of each point of `whole`.
    pub whole_labels: Vec<usize>,
}

/// Groups `points` by `labels` (clusters ordered by first appearance) with
/// masses proportional to group sizes; `whole` keeps the input order.
pub fn gen_split_shape(points: &Array2<f64>, labels: &[usize]) -> Result<SplitShape> {
    if labels.len() != points.nrows() {
        return Err(JgwError::DimensionMismatch {
            context: "point labels".into(),
            expected: points.nrows(),
            found: labels.len(),
        });
    }
    if points.nrows() == 0 {
        return Err(JgwError::EmptyCluster { cluster: 0 });
    }
    let mut order: Vec<usize> = Vec::new();
    for &l in labels {
        if !order.contains(&l) {
            order.push(l);
        }
    }
    let mut split_to_whole = Vec::with_capacity(labels.len());
    let mut whole_labels = vec![0; labels.len()];
    let mut clusters = Vec::with_capacity(order.len());
    for (c, &l) in order.iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == l).collect();
        for &i in &members {
            whole_labels[i] = c;
        }
        split_to_whole.extend_from_slice(&members);
        clusters.push(PointCluster::new(l.to_string(), points.select(Axis(0), &members)));
    }
    let split = build_clustered_space(clusters, None)?;
    let whole = ClusteredSpace::single(Cluster::from_points("whole", points.clone(), None)?)?;
    Ok(SplitShape {
        split,
        whole,
        split_to_whole,
        whole_labels,
    })
}

fn sample_polyline(strokes: &[&[[f64; 2]]], n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let segments: Vec<([f64; 2], [f64; 2])> = strokes
        .iter()
        .flat_map(|s| s.windows(2).map(|w| (w[0], w[1])))
        .collect();
    let lengths: Vec<f64> = segments
        .iter()
        .map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        .collect();
    let pick = WeightedIndex::new(&lengths).expect("strokes have positive length");
    let mut out = Array2::zeros((n, 2));
    for mut row in out.rows_mut() {
        let (a, b) = segments[pick.sample(rng)];
        let t: f64 = rng.random();
        row[0] = a[0] + t * (b[0] - a[0]);
        row[1] = a[1] + t * (b[1] - a[1]);
    }
    out
}

/// Points sampled uniformly by arc length on stroke outlines of the
/// letters A, B and C, set side by side. Labels are 0, 1, 2.
pub fn letters_abc(n_per_letter: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let a: [&[[f64; 2]]; 2] = [
        &[[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]],
        &[[0.25, 0.5], [0.75, 0.5]],
    ];
    let b: [&[[f64; 2]]; 2] = [
        &[[0.0, 0.0], [0.0, 1.0], [0.55, 1.0], [0.75, 0.9], [0.75, 0.6], [0.55, 0.5], [0.0, 0.5]],
        &[[0.55, 0.5], [0.8, 0.4], [0.8, 0.1], [0.6, 0.0], [0.0, 0.0]],
    ];
    let arc: Vec<[f64; 2]> = (0..=24)
        .map(|i| {
            let t = PI / 4.0 + (3.0 * PI / 2.0) * i as f64 / 24.0;
            [0.5 + 0.5 * t.cos(), 0.5 + 0.5 * t.sin()]
        })
        .collect();
    let c: [&[[f64; 2]]; 1] = [&arc];

    let mut rng = rng(seed);
    let mut parts = Vec::new();
    let mut labels = Vec::new();
    for (label, (strokes, shift)) in [(&a[..], 0.0), (&b[..], 1.5), (&c[..], 3.0)].into_iter().enumerate() {
        let mut pts = sample_polyline(strokes, n_per_letter, &mut rng);
        pts.column_mut(0).mapv_inplace(|x| x + shift);
        parts.push(pts);
        labels.extend(std::iter::repeat_n(label, n_per_letter));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    (concatenate(Axis(0), &views).expect("equal widths"), labels)
}

/// Ground truth of a fragment scenario.
#[derive(Debug, Clone)]
pub struct FragmentTruth {
    /// Maps each source fragment onto its place in the target.
    pub transforms: Vec<RigidTransform>,
    /// Target index of each source point, in embedding order.
    pub correspondence: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FragmentScenario {
    pub source: ClusteredSpace,
    pub target: ClusteredSpace,
    pub truth: FragmentTruth,
}

/// Source: the fragments as given, one cluster each. Target: the union of
/// the transformed fragments with Gaussian jitter of `jitter_sigma`.
pub fn gen_rigid_fragments(
    fragments: &[Array2<f64>],
    transforms: &[RigidTransform],
    jitter_sigma: f64,
    seed: u64,
) -> Result<FragmentScenario> {
    if fragments.len() != transforms.len() {
        return Err(JgwError::DimensionMismatch {
            context: "fragment transforms".into(),
            expected: fragments.len(),
            found: transforms.len(),
        });
    }
    if fragments.is_empty() {
        return Err(JgwError::InvalidSpace(vec![crate::space::Violation::NoClusters]));
    }
    if !(jitter_sigma >= 0.0 && jitter_sigma.is_finite()) {
        return Err(JgwError::InvalidArgument("jitter must be nonnegative".into()));
    }
    let dim = fragments[0].ncols();
    for (f, t) in fragments.iter().zip(transforms) {
        t.validate()?;
        if f.ncols() != dim || t.dim() != dim {
            return Err(JgwError::DimensionMismatch {
                context: "fragment coordinates".into(),
                expected: dim,
                found: if f.ncols() != dim { f.ncols() } else { t.dim() },
            });
        }
    }
    let mut rng = rng(seed);
    let jitter = Normal::new(0.0, jitter_sigma).expect("validated sigma");
    let moved: Vec<Array2<f64>> = fragments
        .iter()
        .zip(transforms)
        .map(|(f, t)| {
            let mut m = t.apply(f.view());
            if jitter_sigma > 0.0 {
                m.mapv_inplace(|x| x + jitter.sample(&mut rng));
            }
            m
        })
        .collect();
    let views: Vec<_> = moved.iter().map(|m| m.view()).collect();
    let target_pts = concatenate(Axis(0), &views).expect("equal widths");
    let n = target_pts.nrows();

    let source = build_clustered_space(
        fragments
            .iter()
            .enumerate()
            .map(|(i, f)| PointCluster::new(format!("fragment{i}"), f.clone()))
            .collect(),
        None,
    )?;
    let target = ClusteredSpace::single(Cluster::from_points("assembly", target_pts, None)?)?;
    Ok(FragmentScenario {
        source,
        target,
        truth: FragmentTruth {
            transforms: transforms.to_vec(),
            correspondence: (0..n).collect(),
        },
    })
}

fn random_rotation(rng: &mut ChaCha8Rng) -> RigidTransform {
    let mut axis = [0.0; 3];
    for a in &mut axis {
        *a = StandardNormal.sample(rng);
    }
    let degrees = rng.random_range(30.0..150.0);
    RigidTransform::from_axis_angle(axis, degrees, [0.0; 3])
}

/// Three compact chains around a triangle of side 6, with point counts
/// 1.3 : 1 : 0.7 times `n_per_chain` and sizes 1.2 : 1 : 0.85. Each chain is
/// a lopsided mix of three anisotropic Gaussian lobes, returned in its own
/// centered, randomly rotated frame; the transforms put every chain back in
/// place.
pub fn synthetic_complex(n_per_chain: usize, seed: u64) -> Result<(Vec<Array2<f64>>, Vec<RigidTransform>)> {
    if n_per_chain < 3 {
        return Err(JgwError::InvalidArgument("chains need at least 3 points".into()));
    }
    const LOBES: usize = 3;
    let sizes = [1.2, 1.0, 0.85];
    let centers = [[0.0, 0.0, 0.0], [6.0, 0.0, 0.0], [3.0, 5.2, 0.0]];
    let mut rng = rng(seed);
    let mut fragments = Vec::with_capacity(3);
    let mut transforms = Vec::with_capacity(3);
    let counts = [(1.3 * n_per_chain as f64).round() as usize, n_per_chain, (0.7 * n_per_chain as f64).round() as usize];
    for ((center, size), count) in centers.into_iter().zip(sizes).zip(counts) {
        let mut lobes = Vec::with_capacity(LOBES);
        let mut weights = Vec::with_capacity(LOBES);
        for _ in 0..LOBES {
            let offset: [f64; 3] = std::array::from_fn(|_| 0.8 * size * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let scales: [f64; 3] = std::array::from_fn(|_| size * rng.random_range(0.2..1.0));
            lobes.push((offset, scales, random_rotation(&mut rng)));
            weights.push(rng.random_range(0.5..1.5));
        }
        let pick = WeightedIndex::new(&weights).expect("positive lobe weights");
        let mut chain = Array2::zeros((count, 3));
        for mut row in chain.rows_mut() {
            let (offset, scales, frame) = &lobes[pick.sample(&mut rng)];
            let z: Vec<f64> = scales.iter().map(|s| s * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
            let local = &frame.rotation * nalgebra::DVector::from_vec(z);
            for k in 0..3 {
                row[k] = center[k] + offset[k] + local[k];
            }
        }
        let centroid = chain.mean_axis(Axis(0)).expect("nonempty");
        let frame = random_rotation(&mut rng);
        // local = Rᵀ (x − c), so x = R·local + c
        let centered = &chain - &centroid;
        let rt = frame.rotation.transpose();
        let local = Array2::from_shape_fn(centered.dim(), |(i, j)| {
            (0..3).map(|k| rt[(j, k)] * centered[[i, k]]).sum()
        });
        let place = RigidTransform::new(frame.rotation.clone(), centroid.to_vec().into())?;
        fragments.push(local);
        transforms.push(place);
    }
    Ok((fragments, transforms))
}

/// Two clusters on smooth curves: an ellipse and a parabolic arc, with
/// `n_per_cluster` evenly spaced points each.
pub fn smooth_two_cluster_shape(n_per_cluster: usize) -> Result<ClusteredSpace> {
    if n_per_cluster == 0 {
        return Err(JgwError::EmptyCluster { cluster: 0 });
    }
    let n = n_per_cluster;
    let ellipse = Array2::from_shape_fn((n, 2), |(i, j)| {
        let t = 2.0 * PI * i as f64 / n as f64;
        if j == 0 {
            1.5 * t.cos()
        } else {
            0.8 * t.sin()
        }
    });
    let arc = Array2::from_shape_fn((n, 2), |(i, j)| {
        let x = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
        if j == 0 {
            x
        } else {
            0.7 * x * x
        }
    });
    build_clustered_space(vec![PointCluster::new("ellipse", ellipse), PointCluster::new("arc", arc)], None)
}

/// Draws `n` i.i.d. points: a cluster from the cluster masses, then a point
/// from that cluster's measure. Each cluster of the result carries the
/// uniform measure on its draws and keeps its original mass. A draw that
/// leaves a cluster empty is rejected and redrawn with the next seed.
pub fn sample_empirical(space: &ClusteredSpace, n: usize, seed: u64) -> Result<ClusteredSpace> {
    let k = space.num_clusters();
    if n == 0 {
        return Err(JgwError::InvalidArgument("sample size must be at least 1".into()));
    }
    if n < k {
        return Err(JgwError::InvalidArgument(format!(
            "sample size {n} is below the cluster count {k}"
        )));
    }
    let cluster_pick = WeightedIndex::new(space.masses())
        .map_err(|e| JgwError::InvalidArgument(format!("cluster masses: {e}")))?;
    let point_picks = space
        .clusters()
        .iter()
        .map(|c| WeightedIndex::new(c.measure().iter().copied()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| JgwError::InvalidArgument(format!("cluster measure: {e}")))?;

    for attempt in 0..MAX_SAMPLING_ATTEMPTS {
        let mut rng = rng(seed.wrapping_add(attempt));
        let mut draws: Vec<Vec<usize>> = vec![Vec::new(); k];
        for _ in 0..n {
            let c = cluster_pick.sample(&mut rng);
            draws[c].push(point_picks[c].sample(&mut rng));
        }
        if draws.iter().any(Vec::is_empty) {
            continue;
        }
        let clusters = space
            .clusters()
            .iter()
            .zip(&draws)
            .map(|(c, idx)| {
                let m = idx.len();
                let d = Array2::from_shape_fn((m, m), |(a, b)| c.distance()[[idx[a], idx[b]]]);
                let pts = c.points().map(|p| p.select(Axis(0), idx));
                Cluster::from_parts_unchecked(c.label(), d, Array1::from_elem(m, 1.0 / m as f64), pts)
            })
            .collect();
        return ClusteredSpace::new(clusters, space.masses().to_vec());
    }
    Err(JgwError::Numerical(format!(
        "every one of {MAX_SAMPLING_ATTEMPTS} draws left a cluster empty"
    )))
}

/// Outcome of [`run_spiral_bench`].
#[derive(Debug, Clone, Serialize)]
pub struct SpiralBench {
    pub noise_mass_fraction: f64,
    pub objective: f64,
    pub converged: bool,
    pub outer_iters_used: usize,
    pub runtime_ms: u64,
    #[serde(skip)]
    pub pair: SpiralPair,
    #[serde(skip)]
    pub coupling: Coupling,
}

/// Spiral partial matching: the source spiral wrapped with a dummy cluster
/// holding the noise share of the target mass, solved against the target.
pub fn run_spiral_bench(spec: &SpiralSpec, config: &SolverConfig) -> Result<SpiralBench> {
    let start = Instant::now();
    let pair = gen_spiral_pair(spec)?;
    let n = spec.n_spiral;
    let (coupling, report) = if spec.n_noise == 0 {
        solve(&pair.source, &pair.target, config)?
    } else {
        let retained = n as f64 / (n + spec.n_noise) as f64;
        let source = gen_dummy_cluster_wrap(&pair.source, retained)?;
        solve(&source, &pair.target, config)?
    };
    let noise_mass_fraction = noise_mass_fraction(&coupling, &pair.noise_mask, 0..n)?;
    Ok(SpiralBench {
        noise_mass_fraction,
        objective: report.objective,
        converged: report.converged,
        outer_iters_used: report.outer_iters_used,
        runtime_ms: start.elapsed().as_millis() as u64,
        pair,
        coupling,
    })
}

/// Outcome of [`run_cluster_bench`].
#[derive(Debug, Clone, Serialize)]
pub struct ClusterBench {
    pub correct_mass_fraction: f64,
    pub objective: f64,
    pub converged: bool,
    pub outer_iters_used: usize,
    pub cluster_mass_matrix: Vec<Vec<f64>>,
    pub runtime_ms: u64,
    #[serde(skip)]
    pub shape: SplitShape,
    #[serde(skip)]
    pub coupling: Coupling,
}

/// Letters A, B, C as three clusters against the word as one cluster.
pub fn run_cluster_bench(n_per_letter: usize, seed: u64, config: &SolverConfig) -> Result<ClusterBench> {
    let start = Instant::now();
    if n_per_letter == 0 {
        return Err(JgwError::InvalidArgument("need at least one point per letter".into()));
    }
    let (points, labels) = letters_abc(n_per_letter, seed);
    let shape = gen_split_shape(&points, &labels)?;
    let (coupling, report) = solve(&shape.split, &shape.whole, config)?;
    let expected = shape.split.point_labels();
    let correct_mass_fraction = correct_mass_fraction(&coupling, &expected, &shape.whole_labels)?;
    // whole has a single cluster; regroup its columns by letter
    let k = shape.split.num_clusters();
    let mut cm = vec![vec![0.0; k]; k];
    for ((i, j), &m) in coupling.plan().indexed_iter() {
        cm[expected[i]][shape.whole_labels[j]] += m;
    }
    Ok(ClusterBench {
        correct_mass_fraction,
        objective: report.objective,
        converged: report.converged,
        outer_iters_used: report.outer_iters_used,
        cluster_mass_matrix: cm,
        runtime_ms: start.elapsed().as_millis() as u64,
        shape,
        coupling,
    })
}

/// One line of [`convergence_table`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub median_objective: f64,
    /// Per seed, in seed order.
    pub objectives: Vec<f64>,
}

/// For each `n`, solves empirical samples `X^n` (seeds `0..seeds`) against
/// `space` and reports the median objective.
pub fn convergence_table(
    space: &ClusteredSpace,
    n_list: &[usize],
    seeds: u64,
    config: &SolverConfig,
) -> Result<Vec<ConvergenceRow>> {
    if seeds == 0 {
        return Err(JgwError::InvalidArgument("need at least one seed".into()));
    }
    n_list
        .iter()
        .map(|&n| {
            let objectives = (0..seeds)
                .into_par_iter()
                .map(|seed| {
                    let sample = sample_empirical(space, n, seed)?;
                    Ok(solve(&sample, space, config)?.1.objective)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(ConvergenceRow {
                n,
                median_objective: median(&objectives),
                objectives,
            })
        })
        .collect()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
