//! Quadratic cost of the joint objective.
//!
//! For a plan `μ` between embeddings `X` and `Y` the gradient-like matrix is
//!
//! ```text
//! Λ(μ) = d_X² μ I_Y − 2 d_X μ d_Y + I_X μ d_Y²
//! ```
//!
//! where `d` is block-diagonal and `I` is the block indicator. Neither is
//! materialized: every product is evaluated per cluster block, so the cost
//! is `O(Σ n_Xi² n_Y + n_X Σ n_Yj²)` instead of `O(n_X² n_Y + n_X n_Y²)`.
//! `⟨μ, Λ(μ)⟩` equals the masked quadruple sum over same-cluster pairs.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::error::{JgwError, Result};
use crate::space::{Coupling, Embedding};

/// The `n_X × n_Y` matrix `Λ(μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMatrix(pub Array2<f64>);

impl LambdaMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn check_dims(plan: ArrayView2<'_, f64>, ex: &Embedding, ey: &Embedding) -> Result<()> {
    let expected = (ex.len(), ey.len());
    if plan.dim() != expected {
        return Err(JgwError::ShapeMismatch {
            what: "plan against embeddings",
            expected,
            found: plan.dim(),
        });
    }
    Ok(())
}

/// Blockwise evaluation of `Λ(μ)`.
pub fn compute_lambda(mu: &Coupling, ex: &Embedding, ey: &Embedding) -> Result<LambdaMatrix> {
    check_dims(mu.plan().view(), ex, ey)?;
    Ok(LambdaMatrix(lambda_of_plan(mu.plan().view(), ex, ey)))
}

pub(crate) fn lambda_of_plan(plan: ArrayView2<'_, f64>, ex: &Embedding, ey: &Embedding) -> Array2<f64> {
    let (nx, ny) = plan.dim();
    let mut lambda = Array2::<f64>::zeros((nx, ny));

    // d_X μ and d_X² μ, one source block of rows at a time.
    let mut dx_mu = Array2::<f64>::zeros((nx, ny));
    for (a, ra) in ex.ranges().enumerate() {
        let rows = plan.slice(s![ra.clone(), ..]);
        dx_mu
            .slice_mut(s![ra.clone(), ..])
            .assign(&ex.block(a).dot(&rows));
        let sq = ex.squared_block(a).dot(&rows);
        // (d_X² μ) I_Y: segment sums over each target cluster, broadcast.
        for rb in ey.ranges() {
            let seg_sums = sq.slice(s![.., rb.clone()]).sum_axis(Axis(1));
            let mut out = lambda.slice_mut(s![ra.clone(), rb]);
            for (mut row, &v) in out.rows_mut().into_iter().zip(seg_sums.iter()) {
                row.fill(v);
            }
        }
    }

    for (b, rb) in ey.ranges().enumerate() {
        // μ d_Y² then I_X (μ d_Y²): segment sums over each source cluster.
        let cols = plan.slice(s![.., rb.clone()]);
        let sq = cols.dot(ey.squared_block(b));
        for ra in ex.ranges() {
            let seg_sums = sq.slice(s![ra.clone(), ..]).sum_axis(Axis(0));
            let mut out = lambda.slice_mut(s![ra, rb.clone()]);
            for mut row in out.rows_mut() {
                row += &seg_sums;
            }
        }
        // −2 (d_X μ) d_Y, one target block of columns at a time.
        let cross = dx_mu.slice(s![.., rb.clone()]).dot(ey.block(b));
        Zip::from(lambda.slice_mut(s![.., rb]))
            .and(&cross)
            .for_each(|l, &c| *l -= 2.0 * c);
    }
    lambda
}

/// Direct quadruple sum restricted to same-cluster pairs:
/// `Λ[i][k] = Σ_{j ~ i, l ~ k} (d_X[i][j] − d_Y[k][l])² μ[j][l]`.
///
/// `O(n_X² n_Y²)`; intended as a reference for small instances.
pub fn compute_lambda_naive(mu: &Coupling, ex: &Embedding, ey: &Embedding) -> Result<LambdaMatrix> {
    let plan = mu.plan();
    check_dims(plan.view(), ex, ey)?;
    let (nx, ny) = plan.dim();
    let mut lambda = Array2::zeros((nx, ny));
    for i in 0..nx {
        let ri = ex.range(ex.cluster_of(i));
        for k in 0..ny {
            let rk = ey.range(ey.cluster_of(k));
            let mut acc = 0.0;
            for j in ri.clone() {
                let dxij = ex.distance(i, j);
                for l in rk.clone() {
                    let diff = dxij - ey.distance(k, l);
                    acc += diff * diff * plan[[j, l]];
                }
            }
            lambda[[i, k]] = acc;
        }
    }
    Ok(LambdaMatrix(lambda))
}

/// Compensated `Σ a_ij b_ij`.
pub(crate) fn inner_product(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let term = x * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Reports `½·√q` for a quadratic cost `q = ⟨μ, Λ(μ)⟩`, rejecting values
/// below `−1e-12`.
pub(crate) fn objective_from_quadratic(q: f64) -> Result<f64> {
    if q.is_nan() {
        return Err(JgwError::Numerical("objective is NaN".into()));
    }
    if q < -1e-12 {
        return Err(JgwError::Numerical(format!(
            "negative quadratic cost {q:e}"
        )));
    }
    Ok(0.5 * q.max(0.0).sqrt())
}

/// The unregularized quadratic cost `⟨μ, Λ(μ)⟩`.
pub fn quadratic_cost(mu: &Coupling, ex: &Embedding, ey: &Embedding) -> Result<f64> {
    let lambda = compute_lambda(mu, ex, ey)?;
    Ok(inner_product(mu.plan().view(), lambda.0.view()))
}

/// `½ √⟨μ, Λ(μ)⟩` with `p = 2`.
pub fn objective(mu: &Coupling, ex: &Embedding, ey: &Embedding) -> Result<f64> {
    objective_from_quadratic(quadratic_cost(mu, ex, ey)?)
}

/// `H(μ) = −Σ μ log μ` with `0 log 0 = 0`.
pub fn entropy(mu: &Coupling) -> f64 {
    plan_entropy(mu.plan().view())
}

pub(crate) fn plan_entropy(plan: ArrayView2<'_, f64>) -> f64 {
    -plan
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}
