//! Rigid transforms from couplings (weighted Procrustes / Kabsch) and the
//! alignment-quality measures.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{JgwError, Result};
use crate::space::{ClusteredSpace, Coupling};

const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

/// Clusters whose coupling rows carry less mass than this are unmatched.
pub const MIN_CLUSTER_MASS: f64 = 1e-6;

/// `x ↦ R x + t` with `R` a proper rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

impl RigidTransform {
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let t = RigidTransform {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn identity(dim: usize) -> Self {
        RigidTransform {
            rotation: DMatrix::identity(dim, dim),
            translation: DVector::zeros(dim),
        }
    }

    /// Rotation by `degrees` about the unit vector `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: [f64; 3], degrees: f64, translation: [f64; 3]) -> Self {
        let axis = nalgebra::Unit::new_normalize(nalgebra::Vector3::from(axis));
        let r = nalgebra::Rotation3::from_axis_angle(&axis, degrees.to_radians());
        RigidTransform {
            rotation: DMatrix::from_fn(3, 3, |i, j| r[(i, j)]),
            translation: DVector::from_column_slice(&translation),
        }
    }

    /// Planar rotation by `degrees`, followed by `translation`.
    pub fn planar(degrees: f64, translation: [f64; 2]) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        RigidTransform {
            rotation: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            translation: DVector::from_column_slice(&translation),
        }
    }

    pub fn dim(&self) -> usize {
        self.rotation.nrows()
    }

    /// Checks orthogonality and `det R = +1`, both to `1e-9`.
    pub fn validate(&self) -> Result<()> {
        let d = self.rotation.nrows();
        if self.rotation.ncols() != d || self.translation.len() != d {
            return Err(JgwError::InvalidArgument(format!(
                "transform shapes {}x{} and {} do not agree",
                d,
                self.rotation.ncols(),
                self.translation.len()
            )));
        }
        let gram = self.rotation.transpose() * &self.rotation - DMatrix::identity(d, d);
        if gram.amax() > ORTHOGONALITY_TOLERANCE {
            return Err(JgwError::InvalidArgument("rotation is not orthogonal".into()));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHOGONALITY_TOLERANCE {
            return Err(JgwError::InvalidArgument(format!(
                "improper rotation (determinant {det})"
            )));
        }
        Ok(())
    }

    /// Applies the transform to every row of `points`.
    pub fn apply(&self, points: ArrayView2<'_, f64>) -> Array2<f64> {
        let d = self.dim();
        let mut out = Array2::zeros(points.dim());
        for (src, mut dst) in points.rows().into_iter().zip(out.rows_mut()) {
            for i in 0..d {
                let mut acc = self.translation[i];
                for j in 0..d {
                    acc += self.rotation[(i, j)] * src[j];
                }
                dst[i] = acc;
            }
        }
        out
    }
}

/// Result of [`weighted_procrustes`]. `degenerate` marks a cross-covariance
/// of rank below `d − 1`, in which case the rotation is the identity.
#[derive(Debug, Clone)]
pub struct ProcrustesFit {
    pub transform: RigidTransform,
    pub degenerate: bool,
}

/// Minimizes `Σ w_ab ‖R s_a + t − t_b‖²` over proper rotations `R` and
/// translations `t`.
pub fn weighted_procrustes(
    source: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    weights: ArrayView2<'_, f64>,
) -> Result<ProcrustesFit> {
    let d = source.ncols();
    if !(d == 2 || d == 3) {
        return Err(JgwError::InvalidArgument(format!(
            "procrustes needs 2 or 3 dimensions, got {d}"
        )));
    }
    if target.ncols() != d {
        return Err(JgwError::DimensionMismatch {
            context: "procrustes target".into(),
            expected: d,
            found: target.ncols(),
        });
    }
    if weights.dim() != (source.nrows(), target.nrows()) {
        return Err(JgwError::ShapeMismatch {
            what: "procrustes weights",
            expected: (source.nrows(), target.nrows()),
            found: weights.dim(),
        });
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(JgwError::InvalidArgument("weights must be nonnegative".into()));
    }
    let row_w = weights.sum_axis(Axis(1));
    let col_w = weights.sum_axis(Axis(0));
    let total = row_w.sum();
    if !(total > 0.0) {
        return Err(JgwError::InvalidArgument("total weight is zero".into()));
    }

    let cs = source.t().dot(&row_w) / total;
    let ct = target.t().dot(&col_w) / total;
    let sc = &source - &cs;
    let tc = &target - &ct;
    // H = Σ_ab w_ab (s_a − cs)(t_b − ct)ᵀ = scᵀ W tc
    let h = sc.t().dot(&weights.dot(&tc));

    let hm = DMatrix::from_fn(d, d, |i, j| h[[i, j]]);
    let svd = hm.svd(true, true);
    let sv = &svd.singular_values;
    let scale = sv.max().max(f64::MIN_POSITIVE);
    let rank = sv.iter().filter(|&&x| x > 1e-12 * scale && x > 1e-300).count();
    let cs_v = DVector::from_iterator(d, cs.iter().copied());
    let ct_v = DVector::from_iterator(d, ct.iter().copied());
    if rank + 1 < d {
        log::warn!("degenerate cross-covariance (rank {rank}); using identity rotation");
        return Ok(ProcrustesFit {
            transform: RigidTransform {
                rotation: DMatrix::identity(d, d),
                translation: &ct_v - &cs_v,
            },
            degenerate: true,
        });
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vt").transpose();
    let mut correction = DMatrix::identity(d, d);
    if (&v * u.transpose()).determinant() < 0.0 {
        correction[(d - 1, d - 1)] = -1.0;
    }
    let rotation = &v * correction * u.transpose();
    let translation = &ct_v - &rotation * &cs_v;
    Ok(ProcrustesFit {
        transform: RigidTransform {
            rotation,
            translation,
        },
        degenerate: false,
    })
}

/// Why a cluster's transform could not be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignFlag {
    /// The cluster's rows carry less than [`MIN_CLUSTER_MASS`].
    Unmatched,
    /// Rank-deficient cross-covariance.
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct ClusterAlignment {
    pub label: String,
    pub transform: RigidTransform,
    pub flag: Option<AlignFlag>,
}

/// Maps each source point's row to a one-hot row on its argmax target,
/// keeping the row mass. Ties go to the lowest index.
pub fn harden(plan: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros(plan.dim());
    for (i, row) in plan.rows().into_iter().enumerate() {
        if let Some(j) = argmax(row.iter().copied()) {
            out[[i, j]] = row.sum();
        }
    }
    out
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

/// One rigid transform per source cluster, fitted from that cluster's
/// coupling rows against all target points.
pub fn align_clusters(
    coupling: &Coupling,
    source: &ClusteredSpace,
    target: &ClusteredSpace,
    hardened: bool,
) -> Result<Vec<ClusterAlignment>> {
    let src = source
        .coordinates()
        .ok_or_else(|| JgwError::InvalidArgument("source space has no coordinates".into()))?;
    let tgt = target
        .coordinates()
        .ok_or_else(|| JgwError::InvalidArgument("target space has no coordinates".into()))?;
    let expected = (src.nrows(), tgt.nrows());
    if coupling.dim() != expected {
        return Err(JgwError::ShapeMismatch {
            what: "coupling against spaces",
            expected,
            found: coupling.dim(),
        });
    }
    let plan = if hardened {
        harden(coupling.plan().view())
    } else {
        coupling.plan().clone()
    };
    let offsets = source.offsets();
    let dim = src.ncols();
    source
        .clusters()
        .iter()
        .enumerate()
        .map(|(c, cluster)| {
            let rows = offsets[c]..offsets[c + 1];
            let weights = plan.slice(ndarray::s![rows.clone(), ..]);
            let label = cluster.label().to_string();
            if weights.sum() < MIN_CLUSTER_MASS {
                return Ok(ClusterAlignment {
                    label,
                    transform: RigidTransform::identity(dim),
                    flag: Some(AlignFlag::Unmatched),
                });
            }
            let fit = weighted_procrustes(src.slice(ndarray::s![rows, ..]), tgt.view(), weights)?;
            Ok(ClusterAlignment {
                label,
                transform: fit.transform,
                flag: fit.degenerate.then_some(AlignFlag::Degenerate),
            })
        })
        .collect()
}

/// Angle of `R_a R_bᵀ` in degrees, in `[0, 180]`.
pub fn rotational_error(a: &RigidTransform, b: &RigidTransform) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(JgwError::DimensionMismatch {
            context: "rotational error".into(),
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let rel = &a.rotation * b.rotation.transpose();
    let tr = rel.trace();
    let cos = match a.dim() {
        2 => tr / 2.0,
        _ => (tr - 1.0) / 2.0,
    };
    Ok(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Root-mean-square deviation of index-paired points.
pub fn rmsd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(JgwError::ShapeMismatch {
            what: "rmsd point sets",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.nrows() == 0 {
        return Err(JgwError::InvalidArgument("rmsd of empty point sets".into()));
    }
    let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / a.nrows() as f64).sqrt())
}

/// JSON form: `{"rotation": [row-major], "translation": [...], "cluster": label}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub rotation: Vec<f64>,
    pub translation: Vec<f64>,
    pub cluster: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotational_error_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<AlignFlag>,
}

impl TransformRecord {
    pub fn new(cluster: impl Into<String>, t: &RigidTransform) -> Self {
        let d = t.dim();
        TransformRecord {
            rotation: (0..d * d).map(|k| t.rotation[(k / d, k % d)]).collect(),
            translation: t.translation.iter().copied().collect(),
            cluster: cluster.into(),
            rotational_error_deg: None,
            flag: None,
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform> {
        let d = self.translation.len();
        if self.rotation.len() != d * d {
            return Err(JgwError::InvalidArgument(format!(
                "rotation of cluster {} has {} entries, expected {}",
                self.cluster,
                self.rotation.len(),
                d * d
            )));
        }
        RigidTransform::new(
            DMatrix::from_row_slice(d, d, &self.rotation),
            DVector::from_column_slice(&self.translation),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cloud() -> Array2<f64> {
        array![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 0.0, 3.0],
            [1.0, 1.0, 0.5]
        ]
    }

    #[test]
    fn identity_pairing_recovers_identity() {
        let s = cloud();
        let w = Array2::eye(5);
        let fit = weighted_procrustes(s.view(), s.view(), w.view()).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.transform.rotation.clone() - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!(fit.transform.translation.amax() < 1e-12);
    }

    #[test]
    fn quarter_turn_about_z() {
        let s = cloud();
        let truth = RigidTransform::from_axis_angle([0.0, 0.0, 1.0], 90.0, [0.0; 3]);
        let analytic = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((truth.rotation.clone() - &analytic).amax() < 1e-15);
        let t = truth.apply(s.view());
        let fit = weighted_procrustes(s.view(), t.view(), Array2::eye(5).view()).unwrap();
        assert!((fit.transform.rotation - analytic).amax() < 1e-9);
    }

    #[test]
    fn reflection_is_corrected() {
        // mirror image: the best orthogonal map is a reflection
        let s = cloud();
        let mut t = s.clone();
        t.column_mut(2).mapv_inplace(|z| -z);
        let fit = weighted_procrustes(s.view(), t.view(), Array2::eye(5).view()).unwrap();
        assert!((fit.transform.rotation.determinant() - 1.0).abs() < 1e-9);
        fit.transform.validate().unwrap();
    }

    #[test]
    fn collinear_is_degenerate() {
        let s = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let fit = weighted_procrustes(s.view(), s.view(), Array2::eye(3).view()).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.transform.rotation, DMatrix::identity(3, 3));
    }

    #[test]
    fn procrustes_errors() {
        let s = cloud();
        assert!(weighted_procrustes(s.view(), s.view(), Array2::zeros((5, 5)).view()).is_err());
        let four = Array2::<f64>::zeros((2, 4));
        assert!(weighted_procrustes(four.view(), four.view(), Array2::eye(2).view()).is_err());
    }

    #[test]
    fn rotational_error_examples() {
        let id = RigidTransform::identity(3);
        assert_eq!(rotational_error(&id, &id).unwrap(), 0.0);
        for axis in [[1.0, 0.0, 0.0], [0.3, -0.5, 0.8], [0.0, 1.0, 1.0]] {
            let r = RigidTransform::from_axis_angle(axis, 30.0, [1.0, 2.0, 3.0]);
            assert!((rotational_error(&r, &id).unwrap() - 30.0).abs() < 1e-9);
        }
        let p = RigidTransform::planar(30.0, [0.0, 0.0]);
        assert!((rotational_error(&p, &RigidTransform::identity(2)).unwrap() - 30.0).abs() < 1e-9);
        assert!(rotational_error(&p, &id).is_err());
    }

    #[test]
    fn improper_rotation_rejected() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0]));
        assert!(RigidTransform::new(m, DVector::zeros(3)).is_err());
    }

    #[test]
    fn rmsd_examples() {
        let a = cloud();
        assert_eq!(rmsd(a.view(), a.view()).unwrap(), 0.0);
        let b = &a + &array![3.0, 4.0, 0.0];
        assert!((rmsd(a.view(), b.view()).unwrap() - 5.0).abs() < 1e-12);
        assert!(rmsd(a.view(), a.slice(ndarray::s![..2, ..])).is_err());
    }

    #[test]
    fn harden_ties_lowest_index() {
        let p = array![[0.2, 0.2, 0.1], [0.0, 0.1, 0.3]];
        let h = harden(p.view());
        assert_eq!(h, array![[0.5, 0.0, 0.0], [0.0, 0.0, 0.4]]);
    }

    #[test]
    fn record_round_trip() {
        let t = RigidTransform::from_axis_angle([0.0, 1.0, 0.0], 42.0, [1.0, -2.0, 0.5]);
        let rec = TransformRecord::new("A", &t);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"cluster\":\"A\""));
        let back: TransformRecord = serde_json::from_str(&json).unwrap();
        assert!((back.to_transform().unwrap().rotation - t.rotation).amax() < 1e-15);
    }
}
