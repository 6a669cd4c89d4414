//! Evaluation measures over couplings.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::Serialize;

use crate::align::argmax;
use crate::error::{JgwError, Result};
use crate::space::{ClusteredSpace, Coupling};

/// Default neighbor count of [`knn_graph`].
pub const DEFAULT_KNN: usize = 8;

/// Entry `(i, j)`: coupling mass between source cluster `i` and target
/// cluster `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMassMatrix(pub Array2<f64>);

impl ClusterMassMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }
}

pub fn cluster_mass_matrix(mu: &Coupling, source: &ClusteredSpace, target: &ClusteredSpace) -> Result<ClusterMassMatrix> {
    let expected = (source.num_points(), target.num_points());
    if mu.dim() != expected {
        return Err(JgwError::ShapeMismatch {
            what: "coupling against spaces",
            expected,
            found: mu.dim(),
        });
    }
    let so = source.offsets();
    let to = target.offsets();
    let plan = mu.plan();
    let out = Array2::from_shape_fn((source.num_clusters(), target.num_clusters()), |(i, j)| {
        plan.slice(ndarray::s![so[i]..so[i + 1], to[j]..to[j + 1]]).sum()
    });
    Ok(ClusterMassMatrix(out))
}

/// Mass on pairs whose target label equals the source point's expected label.
pub fn correct_mass_fraction(mu: &Coupling, source_expected: &[usize], target_labels: &[usize]) -> Result<f64> {
    let (n, m) = mu.dim();
    if source_expected.len() != n {
        return Err(JgwError::DimensionMismatch {
            context: "source labels".into(),
            expected: n,
            found: source_expected.len(),
        });
    }
    if target_labels.len() != m {
        return Err(JgwError::DimensionMismatch {
            context: "target labels".into(),
            expected: m,
            found: target_labels.len(),
        });
    }
    let mut correct = 0.0;
    for (row, &want) in mu.plan().rows().into_iter().zip(source_expected) {
        correct += row
            .iter()
            .zip(target_labels)
            .filter(|(_, &l)| l == want)
            .map(|(x, _)| x)
            .sum::<f64>();
    }
    Ok(correct)
}

/// Fraction of the mass leaving `source_rows` that lands on masked target
/// points. `source_rows` excludes dummy clusters; pass the full range for
/// a plain coupling.
pub fn noise_mass_fraction(mu: &Coupling, noise_mask: &[bool], source_rows: Range<usize>) -> Result<f64> {
    let (n, m) = mu.dim();
    if noise_mask.len() != m {
        return Err(JgwError::DimensionMismatch {
            context: "noise mask".into(),
            expected: m,
            found: noise_mask.len(),
        });
    }
    if source_rows.end > n || source_rows.start > source_rows.end {
        return Err(JgwError::InvalidArgument(format!(
            "source rows {source_rows:?} out of 0..{n}"
        )));
    }
    let rows = mu.plan().slice(ndarray::s![source_rows, ..]);
    let total = rows.sum();
    if !(total > 0.0) {
        return Ok(0.0);
    }
    let noisy: f64 = rows
        .sum_axis(Axis(0))
        .iter()
        .zip(noise_mask)
        .filter(|(_, &masked)| masked)
        .map(|(x, _)| x)
        .sum();
    Ok(noisy / total)
}

/// Per-row variance of the row-normalized coupling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceProfile {
    pub variances: Vec<f64>,
    pub mean: f64,
    /// Rows without mass; their variance is reported as 0.
    pub empty_rows: Vec<usize>,
}

pub fn row_variance_profile(mu: &Coupling) -> VarianceProfile {
    plan_variance_profile(mu.plan().view())
}

pub(crate) fn plan_variance_profile(plan: ArrayView2<'_, f64>) -> VarianceProfile {
    let m = plan.ncols() as f64;
    let mut empty_rows = Vec::new();
    let variances: Vec<f64> = plan
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let s = row.sum();
            if !(s > 0.0) {
                empty_rows.push(i);
                return 0.0;
            }
            let mean = 1.0 / m;
            row.iter().map(|x| (x / s - mean).powi(2)).sum::<f64>() / m
        })
        .collect();
    let mean = if variances.is_empty() {
        0.0
    } else {
        variances.iter().sum::<f64>() / variances.len() as f64
    };
    VarianceProfile {
        variances,
        mean,
        empty_rows,
    }
}

/// Symmetrized k-nearest-neighbor graph with Euclidean edge weights.
pub fn knn_graph(points: ArrayView2<'_, f64>, k: usize) -> UnGraph<(), f64> {
    let n = points.nrows();
    let mut graph = UnGraph::with_capacity(n, n * k);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    let dist = |a: usize, b: usize| {
        points
            .row(a)
            .iter()
            .zip(points.row(b).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut edges = std::collections::BTreeSet::new();
    for a in 0..n {
        let mut near: Vec<(f64, usize)> = (0..n).filter(|&b| b != a).map(|b| (dist(a, b), b)).collect();
        near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(_, b) in near.iter().take(k) {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for (a, b) in edges {
        graph.add_edge(nodes[a], nodes[b], dist(a, b));
    }
    graph
}

/// Square root of the area of the two largest bounding-box extents; a
/// stand-in for the square root of surface area on raw clouds.
pub fn bounding_box_normalizer(points: ArrayView2<'_, f64>) -> f64 {
    let mut extents: Vec<f64> = points
        .columns()
        .into_iter()
        .map(|c| {
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo).max(0.0)
        })
        .collect();
    extents.sort_by(|a, b| b.total_cmp(a));
    match extents.len() {
        0 => 1.0,
        1 => extents[0].sqrt(),
        _ => (extents[0] * extents[1]).sqrt(),
    }
}

/// Empirical CDF of normalized geodesic correspondence errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicCdf {
    /// Finite normalized errors, ascending.
    pub errors: Vec<f64>,
    /// `(threshold, fraction of all points with error ≤ threshold)`.
    pub steps: Vec<(f64, f64)>,
    pub total: usize,
    /// Points whose predicted target is unreachable from the ground truth.
    pub unreachable: usize,
}

impl GeodesicCdf {
    pub fn fraction_at(&self, threshold: f64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let count = self.errors.partition_point(|&e| e <= threshold);
        count as f64 / self.total as f64
    }
}

/// For each source point, the shortest-path distance in `graph` between its
/// argmax target and its ground-truth target, divided by `normalizer`.
pub fn geodesic_error_cdf(
    coupling: &Coupling,
    graph: &UnGraph<(), f64>,
    ground_truth: &[usize],
    normalizer: f64,
) -> Result<GeodesicCdf> {
    let (n, m) = coupling.dim();
    if ground_truth.len() != n {
        return Err(JgwError::DimensionMismatch {
            context: "ground truth".into(),
            expected: n,
            found: ground_truth.len(),
        });
    }
    if graph.node_count() != m {
        return Err(JgwError::DimensionMismatch {
            context: "target graph".into(),
            expected: m,
            found: graph.node_count(),
        });
    }
    if let Some(&bad) = ground_truth.iter().find(|&&g| g >= m) {
        return Err(JgwError::InvalidArgument(format!("ground-truth target {bad} out of range")));
    }
    if !(normalizer > 0.0) {
        return Err(JgwError::InvalidArgument("normalizer must be positive".into()));
    }
    let predicted: Vec<usize> = coupling
        .plan()
        .rows()
        .into_iter()
        .map(|r| argmax(r.iter().copied()).unwrap_or(0))
        .collect();

    let mut sources: Vec<usize> = ground_truth.to_vec();
    sources.sort_unstable();
    sources.dedup();
    let tables: HashMap<usize, _> = sources
        .par_iter()
        .map(|&g| (g, dijkstra(graph, NodeIndex::new(g), None, |e| *e.weight())))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let mut errors = Vec::with_capacity(n);
    let mut unreachable = 0;
    for (&g, &p) in ground_truth.iter().zip(&predicted) {
        match tables[&g].get(&NodeIndex::new(p)) {
            Some(d) => errors.push(d / normalizer),
            None => unreachable += 1,
        }
    }
    errors.sort_by(f64::total_cmp);
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, &e) in errors.iter().enumerate() {
        let frac = (i + 1) as f64 / n as f64;
        match steps.last_mut() {
            Some(last) if last.0 == e => last.1 = frac,
            _ => steps.push((e, frac)),
        }
    }
    Ok(GeodesicCdf {
        errors,
        steps,
        total: n,
        unreachable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_clustered_space, Cluster, PointCluster};
    use ndarray::array;

    fn two_by_two() -> (ClusteredSpace, ClusteredSpace) {
        let s = build_clustered_space(
            vec![
                PointCluster::new("a", array![[0.0], [1.0]]),
                PointCluster::new("b", array![[5.0], [6.0]]),
            ],
            None,
        )
        .unwrap();
        (s.clone(), s)
    }

    #[test]
    fn block_diagonal_plan() {
        let (s, t) = two_by_two();
        let plan = Array2::from_diag(&array![0.25, 0.25, 0.25, 0.25]);
        let mu = Coupling::new(plan, vec![0.25; 4], vec![0.25; 4]).unwrap();
        let cm = cluster_mass_matrix(&mu, &s, &t).unwrap();
        assert_eq!(cm.0, array![[0.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn product_plan_is_outer_product() {
        let (s, t) = two_by_two();
        let mu = Coupling::product(&[0.25; 4], &[0.25; 4]);
        let cm = cluster_mass_matrix(&mu, &s, &t).unwrap();
        for &x in cm.0.iter() {
            assert!((x - 0.25).abs() < 1e-15);
        }
        assert!((cm.total() - mu.total_mass()).abs() < 1e-15);
    }

    #[test]
    fn remark_diag_plan_masses() {
        let x = build_clustered_space(vec![PointCluster::new("x", array![[0.0], [1.0]])], None).unwrap();
        let y = ClusteredSpace::new(
            vec![Cluster::singleton("a", None), Cluster::singleton("b", None)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let mu = Coupling::new(array![[0.5, 0.0], [0.0, 0.5]], vec![0.5; 2], vec![0.5; 2]).unwrap();
        assert_eq!(cluster_mass_matrix(&mu, &x, &y).unwrap().0, array![[0.5, 0.5]]);
    }

    #[test]
    fn correct_mass_examples() {
        let perfect = Coupling::new(Array2::from_diag(&array![0.25, 0.25, 0.25, 0.25]), vec![0.25; 4], vec![0.25; 4]).unwrap();
        let labels = [0, 0, 1, 1];
        assert_eq!(correct_mass_fraction(&perfect, &labels, &labels).unwrap(), 1.0);
        let product = Coupling::product(&[0.25; 4], &[0.25; 4]);
        assert!((correct_mass_fraction(&product, &labels, &labels).unwrap() - 0.5).abs() < 1e-15);
        assert!(correct_mass_fraction(&product, &labels[..3], &labels).is_err());
    }

    #[test]
    fn noise_mass_examples() {
        let mu = Coupling::product(&[0.5, 0.5], &[0.25; 4]);
        assert_eq!(noise_mass_fraction(&mu, &[false; 4], 0..2).unwrap(), 0.0);
        assert!((noise_mass_fraction(&mu, &[true; 4], 0..2).unwrap() - 1.0).abs() < 1e-15);
        assert!((noise_mass_fraction(&mu, &[true, false, false, false], 0..1).unwrap() - 0.25).abs() < 1e-15);
        assert!(noise_mass_fraction(&mu, &[true; 3], 0..2).is_err());
    }

    #[test]
    fn variance_examples() {
        let one_hot = Coupling::new(array![[0.5, 0.0], [0.0, 0.5]], vec![0.5; 2], vec![0.5; 2]).unwrap();
        let p = row_variance_profile(&one_hot);
        assert_eq!(p.variances, vec![0.25, 0.25]);
        assert_eq!(p.mean, 0.25);
        let uniform = Coupling::product(&[0.5, 0.5], &[0.25; 4]);
        assert!(row_variance_profile(&uniform).mean.abs() < 1e-18);
        let empty = plan_variance_profile(array![[0.0, 0.0], [1.0, 0.0]].view());
        assert_eq!(empty.empty_rows, vec![0]);
        assert_eq!(empty.variances[0], 0.0);
    }

    #[test]
    fn geodesic_examples() {
        let line = array![[0.0], [1.0], [2.0]];
        let graph = knn_graph(line.view(), 1);
        assert_eq!(graph.edge_count(), 2);
        let off_by_one = Coupling::new(
            array![[0.0, 1.0 / 3.0, 0.0], [0.0, 1.0 / 3.0, 0.0], [0.0, 0.0, 1.0 / 3.0]],
            vec![1.0 / 3.0; 3],
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        let cdf = geodesic_error_cdf(&off_by_one, &graph, &[0, 1, 2], 2.0).unwrap();
        assert_eq!(cdf.errors, vec![0.0, 0.0, 0.5]);
        assert!((cdf.fraction_at(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cdf.fraction_at(0.5), 1.0);

        let perfect = Coupling::new(Array2::eye(3) / 3.0, vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]).unwrap();
        let cdf = geodesic_error_cdf(&perfect, &graph, &[0, 1, 2], 1.0).unwrap();
        assert_eq!(cdf.steps, vec![(0.0, 1.0)]);
    }

    #[test]
    fn disconnected_targets_are_reported() {
        let pts = array![[0.0], [1.0], [10.0], [11.0]];
        let graph = knn_graph(pts.view(), 1);
        let plan = array![[0.0, 0.0, 0.5, 0.0], [0.0, 0.5, 0.0, 0.0]];
        let mu = Coupling::new(plan, vec![0.5, 0.5], vec![0.25; 4]).unwrap();
        let cdf = geodesic_error_cdf(&mu, &graph, &[0, 1], 1.0).unwrap();
        assert_eq!(cdf.unreachable, 1);
        assert_eq!(cdf.fraction_at(f64::INFINITY), 0.5);
    }

    #[test]
    fn normalizer_from_bounding_box() {
        let pts = array![[0.0, 0.0, 0.0], [4.0, 1.0, 9.0]];
        assert_eq!(bounding_box_normalizer(pts.view()), 6.0);
    }
}
