//! Finite distributions of metric-measure spaces and their concatenated
//! embeddings.
//!
//! A [`ClusteredSpace`] is a categorical mixture of finite mm-spaces
//! ("clusters"), each carrying its own distance matrix and probability
//! measure, weighted by a cluster mass. [`embed`] lays the clusters out
//! one after another in a single index range; the block-diagonal distance
//! matrix and the block indicator of the embedding are never materialized,
//! they are implied by the cluster offsets.

use std::fmt;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{JgwError, Result};

/// Tolerance on `|sum - 1|` for cluster measures and cluster masses.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Default L1 tolerance used by [`Coupling::check_marginals`].
pub const DEFAULT_MARGINAL_TOLERANCE: f64 = 1e-8;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// One finite mm-space: distance matrix, probability measure, label, and
/// optionally the coordinates the distances were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    label: String,
    distance: Array2<f64>,
    measure: Array1<f64>,
    points: Option<Array2<f64>>,
}

impl Cluster {
    /// Builds a cluster from coordinates (one point per row) with Euclidean
    /// distances. Absent weights become uniform; given weights are
    /// normalized to sum to one.
    pub fn from_points(
        label: impl Into<String>,
        points: Array2<f64>,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        Self::from_points_indexed(0, label.into(), points, weights)
    }

    fn from_points_indexed(
        index: usize,
        label: String,
        points: Array2<f64>,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(JgwError::EmptyCluster { cluster: index });
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(JgwError::InvalidArgument(format!(
                "cluster {index} has non-finite coordinates"
            )));
        }
        let measure = normalized_weights(index, n, weights)?;
        let distance = euclidean_distances(points.view());
        Ok(Cluster {
            label,
            distance,
            measure,
            points: Some(points),
        })
    }

    /// Builds a cluster from a precomputed distance matrix and raw positive
    /// weights (normalized here). The matrix is validated.
    pub fn from_distances(
        label: impl Into<String>,
        distance: Array2<f64>,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let n = distance.nrows();
        if n == 0 {
            return Err(JgwError::EmptyCluster { cluster: 0 });
        }
        let measure = normalized_weights(0, n, weights)?;
        let cluster = Cluster {
            label: label.into(),
            distance,
            measure,
            points: None,
        };
        let mut violations = Vec::new();
        cluster.collect_violations(0, &mut violations);
        if violations.is_empty() {
            Ok(cluster)
        } else {
            Err(JgwError::InvalidSpace(violations))
        }
    }

    /// Assembles a cluster without any validation. Use [`ClusteredSpace::validate`]
    /// to inspect the result.
    pub fn from_parts_unchecked(
        label: impl Into<String>,
        distance: Array2<f64>,
        measure: Array1<f64>,
        points: Option<Array2<f64>>,
    ) -> Self {
        Cluster {
            label: label.into(),
            distance,
            measure,
            points,
        }
    }

    /// A single point with zero self-distance and unit measure.
    pub fn singleton(label: impl Into<String>, point: Option<&[f64]>) -> Self {
        Cluster {
            label: label.into(),
            distance: Array2::zeros((1, 1)),
            measure: Array1::ones(1),
            points: point.map(|p| Array2::from_shape_vec((1, p.len()), p.to_vec()).unwrap()),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn distance(&self) -> &Array2<f64> {
        &self.distance
    }

    pub fn measure(&self) -> &Array1<f64> {
        &self.measure
    }

    pub fn points(&self) -> Option<&Array2<f64>> {
        self.points.as_ref()
    }

    pub fn max_distance(&self) -> f64 {
        self.distance.iter().copied().fold(0.0, f64::max)
    }

    fn collect_violations(&self, c: usize, out: &mut Vec<Violation>) {
        let (rows, cols) = self.distance.dim();
        let n = self.measure.len();
        if n == 0 {
            out.push(Violation::EmptyCluster { cluster: c });
            return;
        }
        if rows != cols || rows != n {
            out.push(Violation::DistanceShape {
                cluster: c,
                rows,
                cols,
                measure_len: n,
            });
            return;
        }
        if let Some(p) = &self.points {
            if p.nrows() != n {
                out.push(Violation::PointCount {
                    cluster: c,
                    points: p.nrows(),
                    measure_len: n,
                });
            }
        }
        for a in 0..n {
            let diag = self.distance[[a, a]];
            if diag != 0.0 {
                out.push(Violation::NonZeroDiagonal {
                    cluster: c,
                    index: a,
                    value: diag,
                });
            }
            for b in 0..n {
                let d = self.distance[[a, b]];
                if !d.is_finite() {
                    out.push(Violation::NonFiniteDistance {
                        cluster: c,
                        a,
                        b,
                    });
                } else if d < 0.0 {
                    out.push(Violation::NegativeDistance {
                        cluster: c,
                        a,
                        b,
                        value: d,
                    });
                }
                if b > a {
                    let e = self.distance[[b, a]];
                    if (d - e).abs() > SYMMETRY_TOLERANCE * d.abs().max(e.abs()).max(1.0) {
                        out.push(Violation::Asymmetric { cluster: c, a, b });
                    }
                }
            }
        }
        for (i, &m) in self.measure.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                out.push(Violation::NonPositiveMeasure {
                    cluster: c,
                    index: i,
                    value: m,
                });
            }
        }
        let sum = self.measure.sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            out.push(Violation::MeasureNormalization { cluster: c, sum });
        }
    }
}

/// A categorical distribution of finite mm-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredSpace {
    clusters: Vec<Cluster>,
    masses: Vec<f64>,
}

impl ClusteredSpace {
    /// Validates and assembles a space.
    pub fn new(clusters: Vec<Cluster>, masses: Vec<f64>) -> Result<Self> {
        let space = ClusteredSpace { clusters, masses };
        let violations = space.validate();
        if violations.is_empty() {
            Ok(space)
        } else {
            Err(JgwError::InvalidSpace(violations))
        }
    }

    /// Assembles a space without validation.
    pub fn new_unchecked(clusters: Vec<Cluster>, masses: Vec<f64>) -> Self {
        ClusteredSpace { clusters, masses }
    }

    /// A single-cluster space (an ordinary mm-space).
    pub fn single(cluster: Cluster) -> Result<Self> {
        Self::new(vec![cluster], vec![1.0])
    }

    /// Lists every violated invariant. Empty iff the space is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.clusters.is_empty() {
            out.push(Violation::NoClusters);
        }
        if self.masses.len() != self.clusters.len() {
            out.push(Violation::MassCount {
                clusters: self.clusters.len(),
                masses: self.masses.len(),
            });
        }
        for (i, &s) in self.masses.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                out.push(Violation::NonPositiveMass {
                    cluster: i,
                    value: s,
                });
            }
        }
        let sum: f64 = self.masses.iter().sum();
        if !self.masses.is_empty() && (sum - 1.0).abs() > MASS_TOLERANCE {
            out.push(Violation::MassNormalization { sum });
        }
        let mut dim = None;
        for (c, cluster) in self.clusters.iter().enumerate() {
            cluster.collect_violations(c, &mut out);
            if let Some(p) = &cluster.points {
                match dim {
                    None => dim = Some(p.ncols()),
                    Some(d) if d != p.ncols() => out.push(Violation::CoordinateDimension {
                        cluster: c,
                        expected: d,
                        found: p.ncols(),
                    }),
                    _ => {}
                }
            }
        }
        out
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn num_points(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    /// Cumulative point-index boundaries, length `k + 1`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.clusters.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for c in &self.clusters {
            acc += c.len();
            offsets.push(acc);
        }
        offsets
    }

    /// Cluster index of every point in embedding order.
    pub fn point_labels(&self) -> Vec<usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat_n(i, c.len()))
            .collect()
    }

    pub fn max_distance(&self) -> f64 {
        self.clusters
            .iter()
            .map(Cluster::max_distance)
            .fold(0.0, f64::max)
    }

    /// Coordinate dimension, if every cluster retains coordinates.
    pub fn dim(&self) -> Option<usize> {
        let mut dim = None;
        for c in &self.clusters {
            let d = c.points.as_ref()?.ncols();
            if *dim.get_or_insert(d) != d {
                return None;
            }
        }
        dim
    }

    /// All coordinates stacked in embedding order, if retained.
    pub fn coordinates(&self) -> Option<Array2<f64>> {
        let dim = self.dim()?;
        let mut out = Array2::zeros((self.num_points(), dim));
        let mut row = 0;
        for c in &self.clusters {
            let p = c.points.as_ref()?;
            out.slice_mut(ndarray::s![row..row + p.nrows(), ..]).assign(p);
            row += p.nrows();
        }
        Some(out)
    }

    /// Reorders the points of every cluster. `perms[c][j]` is the old index
    /// of the point placed at position `j` of cluster `c`.
    pub fn permuted(&self, perms: &[Vec<usize>]) -> Result<Self> {
        if perms.len() != self.clusters.len() {
            return Err(JgwError::DimensionMismatch {
                context: "cluster permutations".into(),
                expected: self.clusters.len(),
                found: perms.len(),
            });
        }
        let clusters = self
            .clusters
            .iter()
            .zip(perms)
            .map(|(c, p)| {
                if !is_permutation(p, c.len()) {
                    return Err(JgwError::InvalidArgument(format!(
                        "not a permutation of 0..{}",
                        c.len()
                    )));
                }
                Ok(Cluster {
                    label: c.label.clone(),
                    distance: Array2::from_shape_fn((p.len(), p.len()), |(a, b)| {
                        c.distance[[p[a], p[b]]]
                    }),
                    measure: p.iter().map(|&j| c.measure[j]).collect(),
                    points: c.points.as_ref().map(|pts| pts.select(Axis(0), p)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusteredSpace {
            clusters,
            masses: self.masses.clone(),
        })
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    p.iter().all(|&j| j < n && !std::mem::replace(&mut seen[j], true))
}

/// A violated invariant of a [`ClusteredSpace`], with its location.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoClusters,
    MassCount { clusters: usize, masses: usize },
    NonPositiveMass { cluster: usize, value: f64 },
    MassNormalization { sum: f64 },
    EmptyCluster { cluster: usize },
    DistanceShape { cluster: usize, rows: usize, cols: usize, measure_len: usize },
    PointCount { cluster: usize, points: usize, measure_len: usize },
    CoordinateDimension { cluster: usize, expected: usize, found: usize },
    NonZeroDiagonal { cluster: usize, index: usize, value: f64 },
    NonFiniteDistance { cluster: usize, a: usize, b: usize },
    NegativeDistance { cluster: usize, a: usize, b: usize, value: f64 },
    Asymmetric { cluster: usize, a: usize, b: usize },
    NonPositiveMeasure { cluster: usize, index: usize, value: f64 },
    MeasureNormalization { cluster: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoClusters => write!(f, "cluster count: space has no clusters"),
            MassCount { clusters, masses } => {
                write!(f, "mass count: {clusters} clusters but {masses} masses")
            }
            NonPositiveMass { cluster, value } => {
                write!(f, "mass positivity at cluster {cluster}: {value}")
            }
            MassNormalization { sum } => write!(f, "mass normalization: masses sum to {sum}"),
            EmptyCluster { cluster } => write!(f, "nonempty cluster at {cluster}"),
            DistanceShape {
                cluster,
                rows,
                cols,
                measure_len,
            } => write!(
                f,
                "distance shape at cluster {cluster}: {rows}x{cols} for {measure_len} points"
            ),
            PointCount {
                cluster,
                points,
                measure_len,
            } => write!(
                f,
                "point count at cluster {cluster}: {points} coordinates for {measure_len} points"
            ),
            CoordinateDimension {
                cluster,
                expected,
                found,
            } => write!(
                f,
                "coordinate dimension at cluster {cluster}: expected {expected}, found {found}"
            ),
            NonZeroDiagonal {
                cluster,
                index,
                value,
            } => write!(f, "zero diagonal at ({cluster}, {index}, {index}): {value}"),
            NonFiniteDistance { cluster, a, b } => {
                write!(f, "finiteness at ({cluster}, {a}, {b})")
            }
            NegativeDistance {
                cluster,
                a,
                b,
                value,
            } => write!(f, "nonnegativity at ({cluster}, {a}, {b}): {value}"),
            Asymmetric { cluster, a, b } => write!(f, "symmetry at ({cluster}, {a}, {b})"),
            NonPositiveMeasure {
                cluster,
                index,
                value,
            } => write!(f, "measure positivity at ({cluster}, {index}): {value}"),
            MeasureNormalization { cluster, sum } => {
                write!(f, "measure normalization at cluster {cluster}: sum {sum}")
            }
        }
    }
}

/// Raw input for one cluster of [`build_clustered_space`].
#[derive(Debug, Clone)]
pub struct PointCluster {
    pub label: String,
    /// One point per row.
    pub points: Array2<f64>,
    /// Raw positive weights, normalized per cluster.
    pub weights: Option<Vec<f64>>,
}

impl PointCluster {
    pub fn new(label: impl Into<String>, points: Array2<f64>) -> Self {
        PointCluster {
            label: label.into(),
            points,
            weights: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Rescale given cluster masses to sum to one instead of rejecting them.
    pub renormalize_masses: bool,
}

/// Builds a space from raw point clouds with Euclidean distances.
///
/// Absent masses default to cluster sizes over the total point count.
pub fn build_clustered_space(
    clusters: Vec<PointCluster>,
    masses: Option<Vec<f64>>,
) -> Result<ClusteredSpace> {
    build_clustered_space_with(clusters, masses, BuildOptions::default())
}

pub fn build_clustered_space_with(
    clusters: Vec<PointCluster>,
    masses: Option<Vec<f64>>,
    options: BuildOptions,
) -> Result<ClusteredSpace> {
    if clusters.is_empty() {
        return Err(JgwError::InvalidSpace(vec![Violation::NoClusters]));
    }
    let dim = clusters[0].points.ncols();
    let mut built = Vec::with_capacity(clusters.len());
    for (i, pc) in clusters.into_iter().enumerate() {
        if pc.points.nrows() > 0 && pc.points.ncols() != dim {
            return Err(JgwError::DimensionMismatch {
                context: format!("coordinates of cluster {i}"),
                expected: dim,
                found: pc.points.ncols(),
            });
        }
        built.push(Cluster::from_points_indexed(
            i,
            pc.label,
            pc.points,
            pc.weights.as_deref(),
        )?);
    }
    let masses = match masses {
        Some(m) => prepare_masses(m, options)?,
        None => {
            let total = built.iter().map(Cluster::len).sum::<usize>() as f64;
            built.iter().map(|c| c.len() as f64 / total).collect()
        }
    };
    ClusteredSpace::new(built, masses)
}

pub(crate) fn prepare_masses(masses: Vec<f64>, options: BuildOptions) -> Result<Vec<f64>> {
    let sum: f64 = masses.iter().sum();
    if options.renormalize_masses && sum > 0.0 && sum.is_finite() {
        Ok(masses.into_iter().map(|m| m / sum).collect())
    } else {
        Ok(masses)
    }
}

fn normalized_weights(cluster: usize, n: usize, weights: Option<&[f64]>) -> Result<Array1<f64>> {
    match weights {
        None => Ok(Array1::from_elem(n, 1.0 / n as f64)),
        Some(w) => {
            if w.len() != n {
                return Err(JgwError::DimensionMismatch {
                    context: format!("weights of cluster {cluster}"),
                    expected: n,
                    found: w.len(),
                });
            }
            for (index, &value) in w.iter().enumerate() {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(JgwError::NonPositiveWeight {
                        cluster,
                        index,
                        value,
                    });
                }
            }
            let total: f64 = w.iter().sum();
            Ok(w.iter().map(|x| x / total).collect())
        }
    }
}

/// Pairwise Euclidean distances between the rows of `points`.
pub fn euclidean_distances(points: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for a in 0..n {
        for b in (a + 1)..n {
            let dist = points
                .row(a)
                .iter()
                .zip(points.row(b).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d[[a, b]] = dist;
            d[[b, a]] = dist;
        }
    }
    d
}

/// The concatenated representation of a [`ClusteredSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    marginal: Vec<f64>,
    offsets: Vec<usize>,
    blocks: Vec<Array2<f64>>,
    squared_blocks: Vec<Array2<f64>>,
}

/// Concatenates the clusters of `space`; the marginal of point `j` of
/// cluster `i` is `mass_i * measure_i[j]`.
pub fn embed(space: &ClusteredSpace) -> Embedding {
    let marginal = space
        .clusters
        .iter()
        .zip(&space.masses)
        .flat_map(|(c, &s)| c.measure.iter().map(move |&m| s * m))
        .collect();
    let blocks: Vec<Array2<f64>> = space.clusters.iter().map(|c| c.distance.clone()).collect();
    let squared_blocks = blocks.iter().map(|b| b.mapv(|x| x * x)).collect();
    Embedding {
        marginal,
        offsets: space.offsets(),
        blocks,
        squared_blocks,
    }
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.marginal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginal.is_empty()
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn num_clusters(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.blocks
    }

    pub fn block(&self, cluster: usize) -> &Array2<f64> {
        &self.blocks[cluster]
    }

    pub fn squared_block(&self, cluster: usize) -> &Array2<f64> {
        &self.squared_blocks[cluster]
    }

    pub fn range(&self, cluster: usize) -> Range<usize> {
        self.offsets[cluster]..self.offsets[cluster + 1]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }

    /// Cluster containing embedded point `index`.
    pub fn cluster_of(&self, index: usize) -> usize {
        debug_assert!(index < self.len());
        self.offsets.partition_point(|&o| o <= index) - 1
    }

    /// Entry of the implied block indicator.
    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.cluster_of(a) == self.cluster_of(b)
    }

    /// Entry of the implied block-diagonal distance matrix.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let ca = self.cluster_of(a);
        if ca != self.cluster_of(b) {
            return 0.0;
        }
        let o = self.offsets[ca];
        self.blocks[ca][[a - o, b - o]]
    }

    pub fn max_distance(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter().copied())
            .fold(0.0, f64::max)
    }

    /// The same embedding with every distance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding {
            marginal: self.marginal.clone(),
            offsets: self.offsets.clone(),
            blocks: self.blocks.iter().map(|b| b * factor).collect(),
            squared_blocks: self
                .squared_blocks
                .iter()
                .map(|b| b * (factor * factor))
                .collect(),
        }
    }
}

/// A transport plan between two embeddings together with the marginals it
/// is meant to satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: Array2<f64>,
    source_marginal: Vec<f64>,
    target_marginal: Vec<f64>,
}

impl Coupling {
    /// Checks shape, finiteness and nonnegativity. Marginal feasibility is
    /// checked separately by [`Coupling::check_marginals`].
    pub fn new(plan: Array2<f64>, source_marginal: Vec<f64>, target_marginal: Vec<f64>) -> Result<Self> {
        let expected = (source_marginal.len(), target_marginal.len());
        if plan.dim() != expected {
            return Err(JgwError::ShapeMismatch {
                what: "coupling plan",
                expected,
                found: plan.dim(),
            });
        }
        if let Some(((i, j), v)) = plan
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(JgwError::InvalidArgument(format!(
                "coupling entry ({i}, {j}) is {v}"
            )));
        }
        Ok(Coupling {
            plan,
            source_marginal,
            target_marginal,
        })
    }

    pub(crate) fn from_parts(plan: Array2<f64>, source_marginal: Vec<f64>, target_marginal: Vec<f64>) -> Self {
        Coupling {
            plan,
            source_marginal,
            target_marginal,
        }
    }

    /// The independent coupling `a bᵀ`.
    pub fn product(source_marginal: &[f64], target_marginal: &[f64]) -> Self {
        let plan = Array2::from_shape_fn((source_marginal.len(), target_marginal.len()), |(i, j)| {
            source_marginal[i] * target_marginal[j]
        });
        Coupling {
            plan,
            source_marginal: source_marginal.to_vec(),
            target_marginal: target_marginal.to_vec(),
        }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }

    pub fn source_marginal(&self) -> &[f64] {
        &self.source_marginal
    }

    pub fn target_marginal(&self) -> &[f64] {
        &self.target_marginal
    }

    pub fn dim(&self) -> (usize, usize) {
        self.plan.dim()
    }

    pub fn total_mass(&self) -> f64 {
        self.plan.sum()
    }

    /// L1 distance of the row sums to the source marginal plus that of the
    /// column sums to the target marginal.
    pub fn marginal_violation(&self) -> f64 {
        marginal_violation(self.plan.view(), &self.source_marginal, &self.target_marginal)
    }

    pub fn check_marginals(&self, tol: f64) -> Result<()> {
        let v = self.marginal_violation();
        if v <= tol {
            Ok(())
        } else {
            Err(JgwError::Numerical(format!(
                "marginal violation {v:e} exceeds tolerance {tol:e}"
            )))
        }
    }

    /// Row and column permutation: entry `(i, j)` of the result is entry
    /// `(row_perm[i], col_perm[j])` of `self`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        Coupling {
            plan: self.plan.select(Axis(0), row_perm).select(Axis(1), col_perm),
            source_marginal: row_perm.iter().map(|&i| self.source_marginal[i]).collect(),
            target_marginal: col_perm.iter().map(|&j| self.target_marginal[j]).collect(),
        }
    }
}

pub(crate) fn marginal_violation(plan: ArrayView2<'_, f64>, a: &[f64], b: &[f64]) -> f64 {
    let rows: f64 = plan
        .rows()
        .into_iter()
        .zip(a)
        .map(|(r, &ai)| (r.sum() - ai).abs())
        .sum();
    let cols: f64 = plan
        .sum_axis(Axis(0))
        .iter()
        .zip(b)
        .map(|(s, &bj)| (s - bj).abs())
        .sum();
    rows + cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_cluster() {
        let space =
            build_clustered_space(vec![PointCluster::new("a", array![[0.0, 0.0], [1.0, 0.0]])], None)
                .unwrap();
        let c = &space.clusters()[0];
        assert_eq!(c.distance(), &array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(c.measure(), &array![0.5, 0.5]);
    }

    #[test]
    fn proportional_default_masses() {
        let space = build_clustered_space(
            vec![
                PointCluster::new("a", array![[0.0], [1.0], [2.0]]),
                PointCluster::new("b", array![[5.0]]),
            ],
            None,
        )
        .unwrap();
        assert_eq!(space.masses(), &[0.75, 0.25]);
    }

    #[test]
    fn three_four_five() {
        let space =
            build_clustered_space(vec![PointCluster::new("a", array![[0.0, 0.0], [3.0, 4.0]])], None)
                .unwrap();
        assert_eq!(space.clusters()[0].distance()[[0, 1]], 5.0);
    }

    #[test]
    fn build_errors() {
        let empty = build_clustered_space(vec![PointCluster::new("a", Array2::zeros((0, 2)))], None);
        assert!(matches!(empty, Err(JgwError::EmptyCluster { cluster: 0 })));

        let mixed = build_clustered_space(
            vec![
                PointCluster::new("a", array![[0.0, 0.0]]),
                PointCluster::new("b", array![[0.0, 0.0, 0.0]]),
            ],
            None,
        );
        assert!(matches!(mixed, Err(JgwError::DimensionMismatch { .. })));

        let bad_weight = build_clustered_space(
            vec![PointCluster::new("a", array![[0.0], [1.0]]).with_weights(vec![1.0, 0.0])],
            None,
        );
        assert!(matches!(
            bad_weight,
            Err(JgwError::NonPositiveWeight { index: 1, .. })
        ));
    }

    #[test]
    fn masses_off_by_more_than_tolerance() {
        let clusters = || {
            vec![
                PointCluster::new("a", array![[0.0]]),
                PointCluster::new("b", array![[1.0]]),
            ]
        };
        assert!(build_clustered_space(clusters(), Some(vec![0.5, 0.4])).is_err());
        let ok = build_clustered_space_with(
            clusters(),
            Some(vec![0.5, 0.4]),
            BuildOptions {
                renormalize_masses: true,
            },
        )
        .unwrap();
        assert!((ok.masses()[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn embed_examples() {
        let one = build_clustered_space(
            vec![PointCluster::new("a", array![[0.0], [1.0], [2.0], [3.0]])],
            None,
        )
        .unwrap();
        let e = embed(&one);
        assert_eq!(e.marginal(), &[0.25; 4]);
        assert_eq!(e.offsets(), &[0, 4]);

        let two = build_clustered_space(
            vec![
                PointCluster::new("a", array![[0.0], [1.0]]),
                PointCluster::new("b", array![[0.0], [2.0]]),
            ],
            Some(vec![0.5, 0.5]),
        )
        .unwrap();
        assert_eq!(embed(&two).marginal(), &[0.25; 4]);

        let uneven = build_clustered_space(
            vec![
                PointCluster::new("a", array![[0.0]]),
                PointCluster::new("b", array![[0.0], [2.0]]),
            ],
            Some(vec![0.4, 0.6]),
        )
        .unwrap();
        let e = embed(&uneven);
        let expected = [0.4, 0.3, 0.3];
        for (x, y) in e.marginal().iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(e.offsets(), &[0, 1, 3]);
        assert!(e.same_cluster(1, 2));
        assert!(!e.same_cluster(0, 1));
        assert_eq!(e.distance(1, 2), 2.0);
        assert_eq!(e.distance(0, 2), 0.0);
    }

    #[test]
    fn validate_reports_violations() {
        let good =
            build_clustered_space(vec![PointCluster::new("a", array![[0.0], [1.0]])], None).unwrap();
        assert!(good.validate().is_empty());

        let neg = ClusteredSpace::new_unchecked(
            vec![Cluster::from_parts_unchecked(
                "a",
                array![[0.0, -1.0], [-1.0, 0.0]],
                array![0.5, 0.5],
                None,
            )],
            vec![1.0],
        );
        let v = neg.validate();
        assert!(v.contains(&Violation::NegativeDistance {
            cluster: 0,
            a: 0,
            b: 1,
            value: -1.0
        }));
        assert!(v[0].to_string().starts_with("nonnegativity at (0, 0, 1)"));

        let light = ClusteredSpace::new_unchecked(
            vec![Cluster::singleton("a", None), Cluster::singleton("b", None)],
            vec![0.5, 0.4],
        );
        let v = light.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::MassNormalization { .. }));
        assert!(v[0].to_string().contains("mass normalization"));
    }

    #[test]
    fn asymmetric_and_zero_measure_rejected() {
        let asym = Cluster::from_distances("a", array![[0.0, 1.0], [2.0, 0.0]], None);
        assert!(matches!(asym, Err(JgwError::InvalidSpace(v)) if matches!(v[0], Violation::Asymmetric { .. })));
        let zero = ClusteredSpace::new(
            vec![Cluster::from_parts_unchecked(
                "a",
                array![[0.0, 1.0], [1.0, 0.0]],
                array![1.0, 0.0],
                None,
            )],
            vec![1.0],
        );
        assert!(zero.is_err());
    }

    #[test]
    fn coupling_checks() {
        let c = Coupling::product(&[0.5, 0.5], &[0.25, 0.75]);
        assert!(c.marginal_violation() < 1e-15);
        assert!(c.check_marginals(DEFAULT_MARGINAL_TOLERANCE).is_ok());
        assert!(Coupling::new(array![[0.5, -0.1]], vec![0.4], vec![0.2, 0.2]).is_err());
        assert!(Coupling::new(array![[0.5, 0.5]], vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn permuted_space_reorders_blocks() {
        let space = build_clustered_space(
            vec![PointCluster::new("a", array![[0.0], [1.0], [3.0]])],
            None,
        )
        .unwrap();
        let p = space.permuted(&[vec![2, 0, 1]]).unwrap();
        assert_eq!(p.clusters()[0].distance()[[0, 1]], 3.0);
        assert_eq!(p.clusters()[0].distance()[[1, 2]], 1.0);
        assert!(space.permuted(&[vec![0, 0, 1]]).is_err());
    }
}
