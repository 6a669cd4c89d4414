//! KL projection of a positive kernel onto the couplings with prescribed
//! marginals, by alternating diagonal scaling.

use ndarray::Array2;

use crate::error::{JgwError, Result};
use crate::space::{marginal_violation, Coupling};

/// Result of a projection. `converged` is false when `max_iters` ran out
/// before the L1 marginal violation reached the tolerance; the last iterate
/// is returned in that case.
#[derive(Debug, Clone)]
pub struct SinkhornOutcome {
    pub coupling: Coupling,
    pub iterations: usize,
    pub violation: f64,
    pub converged: bool,
}

fn check_marginals(a: &[f64], b: &[f64], dim: (usize, usize)) -> Result<()> {
    if dim != (a.len(), b.len()) {
        return Err(JgwError::ShapeMismatch {
            what: "kernel against marginals",
            expected: (a.len(), b.len()),
            found: dim,
        });
    }
    for (name, m) in [("source", a), ("target", b)] {
        if m.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(JgwError::InvalidArgument(format!(
                "{name} marginal must be strictly positive"
            )));
        }
        let s: f64 = m.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(JgwError::InvalidArgument(format!(
                "{name} marginal sums to {s}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Scales `kernel` to `diag(u) K diag(v)` with row sums `a` and column sums
/// `b`. Every row and column of the kernel needs a positive entry.
pub fn sinkhorn_projection(
    kernel: &Array2<f64>,
    a: &[f64],
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<SinkhornOutcome> {
    scale_plain(kernel, a, b, tol, max_iters, None).map(|(out, _)| out)
}

/// Plain scaling started from the row scaling `warm_u`. Returns the final
/// row scaling alongside the outcome.
const RELAX_WINDOW: usize = 10;
const MAX_OMEGA: f64 = 1.9;

/// Over-relaxation weight of the scaling updates. Starts with plain steps,
/// estimates their linear rate κ from the violation, then switches to
/// ω = 2 / (1 + √(1 − κ)). Any window without progress reverts to plain
/// steps for good. The fixed point does not depend on ω.
struct Relaxation {
    omega: f64,
    history: Vec<f64>,
    settled: bool,
    /// Violation at the last window boundary since switching.
    reference: Option<f64>,
}

impl Relaxation {
    fn new() -> Self {
        Relaxation {
            omega: 1.0,
            history: Vec::new(),
            settled: false,
            reference: None,
        }
    }

    fn observe(&mut self, violation: f64) {
        self.history.push(violation);
        let n = self.history.len();
        if self.settled || !n.is_multiple_of(RELAX_WINDOW) {
            return;
        }
        if self.omega > 1.0 {
            // the first window after switching is transient
            if let Some(prev) = self.reference {
                if !(violation < prev) {
                    self.omega = 1.0;
                    self.settled = true;
                }
            }
            self.reference = Some(violation);
        } else if n == 3 * RELAX_WINDOW {
            let prev = self.history[n - 1 - RELAX_WINDOW];
            let rate = (violation / prev).powf(1.0 / RELAX_WINDOW as f64);
            if rate.is_finite() && rate > 0.0 && rate < 1.0 {
                self.omega = (2.0 / (1.0 + (1.0 - rate).sqrt())).min(MAX_OMEGA);
            } else {
                self.settled = true;
            }
        }
    }
}

/// Dot product with four fixed lanes: vectorizes, and the summation order
/// depends only on the length.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (xc, xr) = x.split_at(x.len() - x.len() % 4);
    let (yc, yr) = y.split_at(xc.len());
    for (a, b) in xc.chunks_exact(4).zip(yc.chunks_exact(4)) {
        for l in 0..4 {
            lanes[l] += a[l] * b[l];
        }
    }
    let tail: f64 = xr.iter().zip(yr).map(|(a, b)| a * b).sum();
    (lanes[0] + lanes[2]) + (lanes[1] + lanes[3]) + tail
}

pub(crate) fn scale_plain(
    kernel: &Array2<f64>,
    a: &[f64],
    b: &[f64],
    tol: f64,
    max_iters: usize,
    warm_u: Option<Vec<f64>>,
) -> Result<(SinkhornOutcome, Vec<f64>)> {
    check_marginals(a, b, kernel.dim())?;
    if kernel.iter().any(|&k| !(k >= 0.0) || !k.is_finite()) {
        return Err(JgwError::InvalidArgument(
            "kernel entries must be finite and nonnegative".into(),
        ));
    }
    let (n, m) = kernel.dim();
    let k = kernel.as_standard_layout();
    let ks = k.as_slice().expect("standard layout");

    let mut col_has = vec![false; m];
    for i in 0..n {
        let row = &ks[i * m..(i + 1) * m];
        if !row.iter().any(|&x| x > 0.0) {
            return Err(JgwError::ZeroKernelLine { axis: "row", index: i });
        }
        for (flag, &x) in col_has.iter_mut().zip(row) {
            *flag |= x > 0.0;
        }
    }
    if let Some(j) = col_has.iter().position(|&f| !f) {
        return Err(JgwError::ZeroKernelLine { axis: "column", index: j });
    }

    let mut u = match warm_u {
        Some(u) if u.len() == n && u.iter().all(|x| x.is_finite() && *x > 0.0) => u,
        _ => vec![1.0; n],
    };
    let mut v = vec![1.0; m];
    let mut ktu = vec![0.0; m];
    let mut iterations = 0;
    let mut relax = Relaxation::new();
    // row residual left by the last u update, zero up to rounding for ω = 1
    let mut row_viol = 0.0;
    for it in 0..max_iters {
        ktu.fill(0.0);
        for (i, &ui) in u.iter().enumerate() {
            for (acc, &kij) in ktu.iter_mut().zip(&ks[i * m..(i + 1) * m]) {
                *acc += kij * ui;
            }
        }
        if it > 0 {
            let col_viol: f64 = v
                .iter()
                .zip(&ktu)
                .zip(b)
                .map(|((vj, s), bj)| (vj * s - bj).abs())
                .sum();
            let viol = col_viol + row_viol;
            if viol <= tol {
                break;
            }
            relax.observe(viol);
        }
        let w = relax.omega;
        for ((vj, &s), &bj) in v.iter_mut().zip(&ktu).zip(b) {
            let r = bj / s;
            *vj = if w == 1.0 { r } else { *vj * (r / *vj).powf(w) };
        }
        row_viol = 0.0;
        for (i, ui) in u.iter_mut().enumerate() {
            let s = dot(&ks[i * m..(i + 1) * m], &v);
            let r = a[i] / s;
            if w == 1.0 {
                *ui = r;
            } else {
                *ui *= (r / *ui).powf(w);
                row_viol += (*ui * s - a[i]).abs();
            }
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(JgwError::Numerical(
                "scaling vectors overflowed; use log-domain scaling".into(),
            ));
        }
        iterations = it + 1;
    }

    let plan = Array2::from_shape_fn((n, m), |(i, j)| u[i] * ks[i * m + j] * v[j]);
    Ok((finish(plan, a, b, tol, iterations)?, u))
}

fn finish(plan: Array2<f64>, a: &[f64], b: &[f64], tol: f64, iterations: usize) -> Result<SinkhornOutcome> {
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(JgwError::Numerical("projection produced non-finite entries".into()));
    }
    let violation = marginal_violation(plan.view(), a, b);
    Ok(SinkhornOutcome {
        coupling: Coupling::from_parts(plan, a.to_vec(), b.to_vec()),
        iterations,
        violation,
        converged: violation <= tol,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Same projection with the kernel given as `log K`. Entries may be `-inf`
/// (zero kernel entries); scalings are carried as log-potentials.
pub fn sinkhorn_projection_log(
    log_kernel: &Array2<f64>,
    a: &[f64],
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<SinkhornOutcome> {
    scale_log(log_kernel, a, b, tol, max_iters, None).map(|(out, _)| out)
}

/// Log-domain scaling started from the row potential `warm_f`. Returns the
/// final row potential alongside the outcome.
pub(crate) fn scale_log(
    log_kernel: &Array2<f64>,
    a: &[f64],
    b: &[f64],
    tol: f64,
    max_iters: usize,
    warm_f: Option<Vec<f64>>,
) -> Result<(SinkhornOutcome, Vec<f64>)> {
    check_marginals(a, b, log_kernel.dim())?;
    if log_kernel.iter().any(|&x| x.is_nan() || x == f64::INFINITY) {
        return Err(JgwError::InvalidArgument(
            "log-kernel entries must be finite or -inf".into(),
        ));
    }
    let (n, m) = log_kernel.dim();
    let k = log_kernel.as_standard_layout();
    let ks = k.as_slice().expect("standard layout");
    let mut col_has = vec![false; m];
    for i in 0..n {
        let row = &ks[i * m..(i + 1) * m];
        if row.iter().all(|&x| x == f64::NEG_INFINITY) {
            return Err(JgwError::ZeroKernelLine { axis: "row", index: i });
        }
        for (flag, &x) in col_has.iter_mut().zip(row) {
            *flag |= x > f64::NEG_INFINITY;
        }
    }
    if let Some(j) = col_has.iter().position(|&f| !f) {
        return Err(JgwError::ZeroKernelLine { axis: "column", index: j });
    }

    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = match warm_f {
        Some(f) if f.len() == n && f.iter().all(|x| x.is_finite()) => f,
        _ => vec![0.0; n],
    };
    let mut g = vec![0.0; m];
    let mut col_max = vec![0.0; m];
    let mut col_sum = vec![0.0; m];
    let mut iterations = 0;
    let mut relax = Relaxation::new();
    let mut row_viol = 0.0;
    for it in 0..max_iters {
        // column log-sum-exp of log K + f, two passes over the rows
        col_max.fill(f64::NEG_INFINITY);
        for (i, &fi) in f.iter().enumerate() {
            for (cm, &kij) in col_max.iter_mut().zip(&ks[i * m..(i + 1) * m]) {
                *cm = cm.max(kij + fi);
            }
        }
        col_sum.fill(0.0);
        for (i, &fi) in f.iter().enumerate() {
            for ((cs, &kij), &cm) in col_sum.iter_mut().zip(&ks[i * m..(i + 1) * m]).zip(&col_max) {
                *cs += (kij + fi - cm).exp();
            }
        }
        let col_lse = col_max.iter().zip(&col_sum).map(|(mx, s)| mx + s.ln());
        if it > 0 {
            let col_viol: f64 = col_lse
                .clone()
                .zip(&g)
                .zip(b)
                .map(|((c, gj), bj)| ((c + gj).exp() - bj).abs())
                .sum();
            let viol = col_viol + row_viol;
            if viol <= tol {
                break;
            }
            relax.observe(viol);
        }
        let w = relax.omega;
        for ((gj, c), lb) in g.iter_mut().zip(col_lse).zip(&log_b) {
            *gj = if w == 1.0 { lb - c } else { (1.0 - w) * *gj + w * (lb - c) };
        }
        row_viol = 0.0;
        for (i, fi) in f.iter_mut().enumerate() {
            let row = &ks[i * m..(i + 1) * m];
            let lse = log_sum_exp(row.iter().zip(&g).map(|(k, gj)| k + gj));
            if w == 1.0 {
                *fi = log_a[i] - lse;
            } else {
                *fi = (1.0 - w) * *fi + w * (log_a[i] - lse);
                row_viol += ((*fi + lse).exp() - a[i]).abs();
            }
        }
        if f.iter().chain(&g).any(|x| !x.is_finite()) {
            return Err(JgwError::Numerical("log-potentials became non-finite".into()));
        }
        iterations = it + 1;
    }

    let plan = Array2::from_shape_fn((n, m), |(i, j)| (ks[i * m + j] + f[i] + g[j]).exp());
    Ok((finish(plan, a, b, tol, iterations)?, f))
}
