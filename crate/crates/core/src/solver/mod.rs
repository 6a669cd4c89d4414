//! Entropic solver for the joint objective.
//!
//! Starting from the product of the marginals, every outer iteration builds
//! the damped kernel `exp(−Λ(μ)/ε)^η ⊙ μ^(1−η)` and projects it back onto
//! the transport polytope. Kernels are handled in log space; the scaling
//! itself switches to log-potentials when `Λ/ε` exceeds
//! [`LOG_DOMAIN_THRESHOLD`] or when plain exponentiation underflows.

mod config;
mod sinkhorn;

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

pub use config::{SolveReport, SolverConfig};
pub use sinkhorn::{sinkhorn_projection, sinkhorn_projection_log, SinkhornOutcome};
use sinkhorn::{scale_log, scale_plain};

use crate::error::{JgwError, Result};
use crate::kernel::{inner_product, lambda_of_plan, objective_from_quadratic};
use crate::space::{embed, Cluster, ClusteredSpace, Coupling, Embedding};

/// Largest `Λ/ε` handled by plain scaling.
pub const LOG_DOMAIN_THRESHOLD: f64 = 500.0;

/// Relative objective change that counts as stalled, over
/// [`STALL_WINDOW`] consecutive iterations.
pub const STALL_TOLERANCE: f64 = 1e-7;
pub const STALL_WINDOW: usize = 3;

// Smallest admissible column maximum after per-row normalization of the
// plain kernel; below this the scalings leave the f64 range.
const UNDERFLOW_GUARD: f64 = 1e-200;
/// Squared width of the anchor reweighting of restarts, relative to the
/// largest distance squared.
const ANCHOR_WIDTH: f64 = 0.01;
/// Log-scale of the multiplicative noise that breaks exact ties in restarts.
const RESTART_NOISE: f64 = 0.5;

/// Approximates the joint objective between `source` and `target`.
///
/// Returns the final plan and a report. Non-convergence within
/// `max_outer_iters` is not an error; it is flagged in the report.
pub fn solve(
    source: &ClusteredSpace,
    target: &ClusteredSpace,
    config: &SolverConfig,
) -> Result<(Coupling, SolveReport)> {
    solve_inner(source, target, config, None)
}

/// [`solve`] started from `init` instead of the product of the marginals.
/// `init` must have the marginals of the two embeddings and positive
/// entries wherever the iterates should be able to put mass.
pub fn solve_from(
    source: &ClusteredSpace,
    target: &ClusteredSpace,
    config: &SolverConfig,
    init: &Coupling,
) -> Result<(Coupling, SolveReport)> {
    solve_inner(source, target, config, Some(init))
}

fn solve_inner(
    source: &ClusteredSpace,
    target: &ClusteredSpace,
    config: &SolverConfig,
    init: Option<&Coupling>,
) -> Result<(Coupling, SolveReport)> {
    let start = Instant::now();
    config.validate()?;
    for space in [source, target] {
        let violations = space.validate();
        if !violations.is_empty() {
            return Err(JgwError::InvalidSpace(violations));
        }
    }
    let ex = embed(source);
    let ey = embed(target);

    let scale = if config.normalize_distances {
        let m = ex.max_distance().max(ey.max_distance());
        if m > 0.0 {
            m
        } else {
            1.0
        }
    } else {
        1.0
    };
    let (wx, wy) = if scale != 1.0 {
        (ex.scaled(1.0 / scale), ey.scaled(1.0 / scale))
    } else {
        (ex.clone(), ey.clone())
    };

    let product = Coupling::product(ex.marginal(), ey.marginal());
    let first = match init {
        Some(mu) => {
            let expected = (ex.len(), ey.len());
            if mu.dim() != expected {
                return Err(JgwError::ShapeMismatch {
                    what: "initial plan",
                    expected,
                    found: mu.dim(),
                });
            }
            let tol = config.sinkhorn_tol.max(crate::space::DEFAULT_MARGINAL_TOLERANCE);
            let violation = crate::space::marginal_violation(mu.plan().view(), ex.marginal(), ey.marginal());
            if !(violation <= tol) {
                return Err(JgwError::InvalidArgument(format!(
                    "initial plan violates the marginals by {violation:e}"
                )));
            }
            mu.plan().clone()
        }
        None => product.plan().clone(),
    };
    // restarts compete at the first (coarsest) stage; the winner alone is
    // carried through the rest of the schedule
    let schedule = config.epsilon_schedule();
    let stage = |epsilon: f64| SolverConfig {
        epsilon,
        ..config.clone()
    };
    let coarse = stage(schedule[0]);
    let mut best = run(&wx, &wy, first, scale, &coarse)?;
    for r in 1..=config.restarts {
        let init = perturbed_start(&wx, &wy, &product, config, r)?;
        let candidate = run(&wx, &wy, init, scale, &coarse)?;
        log::debug!("restart {r}: objective {:.6e} after {} iterations", candidate.objective, candidate.trace.len());
        if candidate.objective < best.objective {
            best = candidate;
        }
    }
    for &epsilon in &schedule[1..] {
        let mut next = run(&wx, &wy, best.plan, scale, &stage(epsilon))?;
        best.trace.append(&mut next.trace);
        next.trace = std::mem::take(&mut best.trace);
        best = next;
    }

    let coupling = Coupling::from_parts(best.plan, ex.marginal().to_vec(), ey.marginal().to_vec());
    let objective = objective_from_quadratic(inner_product(
        coupling.plan().view(),
        lambda_of_plan(coupling.plan().view(), &ex, &ey).view(),
    ))?;
    let report = SolveReport {
        objective,
        outer_iters_used: best.trace.len(),
        converged: best.converged,
        objective_trace: best.trace,
        marginal_violation: best.violation,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    Ok((coupling, report))
}

/// The unregularized objective of an externally supplied plan.
pub fn objective_at(mu: &Coupling, source: &ClusteredSpace, target: &ClusteredSpace) -> Result<f64> {
    crate::kernel::objective(mu, &embed(source), &embed(target))
}

/// Input for [`solve_gw`]: coordinates (Euclidean) or a distance matrix,
/// uniform measure unless weights are given.
#[derive(Debug, Clone)]
pub enum GwInput {
    Points(Array2<f64>, Option<Vec<f64>>),
    Distances(Array2<f64>, Option<Vec<f64>>),
}

impl GwInput {
    pub fn into_space(self) -> Result<ClusteredSpace> {
        let cluster = match self {
            GwInput::Points(p, w) => Cluster::from_points("space", p, w.as_deref())?,
            GwInput::Distances(d, w) => Cluster::from_distances("space", d, w.as_deref())?,
        };
        ClusteredSpace::single(cluster)
    }
}

/// Classical entropic Gromov–Wasserstein: [`solve`] with one cluster per side.
pub fn solve_gw(source: GwInput, target: GwInput, config: &SolverConfig) -> Result<(Coupling, SolveReport)> {
    solve(&source.into_space()?, &target.into_space()?, config)
}

struct Run {
    plan: Array2<f64>,
    trace: Vec<f64>,
    objective: f64,
    converged: bool,
    violation: f64,
}

fn run(ex: &Embedding, ey: &Embedding, init: Array2<f64>, scale: f64, config: &SolverConfig) -> Result<Run> {
    let (nx, ny) = init.dim();
    let outer_tol = config.outer_tol_for(nx, ny);
    let a = ex.marginal();
    let b = ey.marginal();

    let mut mu = init;
    let mut lambda = lambda_of_plan(mu.view(), ex, ey);
    let mut trace = Vec::with_capacity(config.max_outer_iters);
    let mut converged = false;
    let mut violation = crate::space::marginal_violation(mu.view(), a, b);
    let mut objective = f64::INFINITY;
    let mut potential: Option<Vec<f64>> = None;
    let mut scaling_iters = 0;

    for _ in 0..config.max_outer_iters {
        let log_kernel = damped_log_kernel(lambda.view(), mu.view(), config);
        let use_log = config.log_domain
            || lambda.iter().any(|&l| l / config.epsilon > LOG_DOMAIN_THRESHOLD);
        let (outcome, f) = project(&log_kernel, a, b, use_log, config, potential.take())?;
        potential = Some(f);
        scaling_iters += outcome.iterations;

        let next = outcome.coupling.into_plan();
        if next.iter().any(|x| x.is_nan()) {
            return Err(JgwError::Numerical("plan contains NaN".into()));
        }
        lambda = lambda_of_plan(next.view(), ex, ey);
        if lambda.iter().any(|x| x.is_nan()) {
            return Err(JgwError::Numerical("cost matrix contains NaN".into()));
        }
        objective = scale * objective_from_quadratic(inner_product(next.view(), lambda.view()))?;
        trace.push(objective);

        let change: f64 = Zip::from(&next).and(&mu).fold(0.0, |acc, x, y| acc + (x - y).abs());
        mu = next;
        violation = outcome.violation;
        if outcome.converged && (change <= outer_tol || stalled(&trace)) {
            converged = true;
            break;
        }
    }
    log::debug!(
        "ε {:e}: {} outer iterations, {scaling_iters} scaling iterations, objective {objective:.6e}",
        config.epsilon,
        trace.len()
    );
    Ok(Run {
        plan: mu,
        trace,
        objective,
        converged,
        violation,
    })
}

fn damped_log_kernel(lambda: ArrayView2<'_, f64>, mu: ArrayView2<'_, f64>, config: &SolverConfig) -> Array2<f64> {
    let sign = if config.paper_literal_signs { 1.0 } else { -1.0 };
    let gain = sign * config.eta / config.epsilon;
    let keep = 1.0 - config.eta;
    let mut out = Array2::zeros(lambda.dim());
    Zip::from(&mut out)
        .and(lambda)
        .and(mu)
        .for_each(|o, &l, &m| {
            *o = if keep == 0.0 {
                gain * l
            } else {
                gain * l + keep * m.ln()
            }
        });
    out
}

/// Projects `exp(log_kernel)`. `warm_f` is the row log-potential of the
/// previous projection, returned updated; potentials are stationary at a
/// fixed point of the outer iteration, so they make good starting values.
fn project(
    log_kernel: &Array2<f64>,
    a: &[f64],
    b: &[f64],
    use_log: bool,
    config: &SolverConfig,
    warm_f: Option<Vec<f64>>,
) -> Result<(SinkhornOutcome, Vec<f64>)> {
    let (tol, iters) = (config.sinkhorn_tol, config.sinkhorn_max_iters);
    if !use_log {
        if let Some((kernel, shift)) = plain_kernel(log_kernel) {
            let warm_u = warm_f.as_ref().map(|f| f.iter().zip(&shift).map(|(f, s)| (f + s).exp()).collect());
            match scale_plain(&kernel, a, b, tol, iters, warm_u) {
                Ok((out, u)) => {
                    let f = u.iter().zip(&shift).map(|(u, s)| u.ln() - s).collect();
                    return Ok((out, f));
                }
                Err(JgwError::Numerical(_)) | Err(JgwError::ZeroKernelLine { .. }) => {
                    log::debug!("plain scaling failed, retrying in log domain");
                }
                Err(e) => return Err(e),
            }
        }
    }
    scale_log(log_kernel, a, b, tol, iters, warm_f)
}

/// Exponentiates with each row shifted to a maximum of one, which leaves the
/// projection unchanged; returns the kernel and the per-row shifts. `None`
/// when a column would underflow.
fn plain_kernel(log_kernel: &Array2<f64>) -> Option<(Array2<f64>, Vec<f64>)> {
    let mut kernel = log_kernel.clone();
    let mut shift = Vec::with_capacity(kernel.nrows());
    for mut row in kernel.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        row.mapv_inplace(|x| (x - max).exp());
        shift.push(max);
    }
    let col_ok = kernel
        .columns()
        .into_iter()
        .all(|c| c.iter().copied().fold(0.0, f64::max) > UNDERFLOW_GUARD);
    col_ok.then_some((kernel, shift))
}

fn stalled(trace: &[f64]) -> bool {
    if trace.len() <= STALL_WINDOW {
        return false;
    }
    let tail = &trace[trace.len() - STALL_WINDOW - 1..];
    tail.windows(2)
        .all(|w| (w[1] - w[0]).abs() <= STALL_TOLERANCE * w[1].abs())
}

/// Restart plan: for every (source cluster, target cluster) block, draw an
/// anchor point on each side and reweight the product plan towards pairs at
/// matching distances from their anchors. Entrywise noise would average out
/// of Λ after one step; anchors move whole clusters and orientations.
fn perturbed_start(ex: &Embedding, ey: &Embedding, product: &Coupling, config: &SolverConfig, restart: u32) -> Result<Array2<f64>> {
    let scale = ex.max_distance().max(ey.max_distance());
    if !(scale > 0.0) {
        return Ok(product.plan().clone());
    }
    let width = ANCHOR_WIDTH * scale * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
    let draw = |e: &Embedding, c: usize, rng: &mut ChaCha8Rng| -> Result<usize> {
        let range = e.range(c);
        let pick = WeightedIndex::new(&e.marginal()[range.clone()])
            .map_err(|err| JgwError::Numerical(format!("anchor draw: {err}")))?;
        Ok(range.start + pick.sample(rng))
    };
    let mut kernel = product.plan().clone();
    for c in 0..ex.num_clusters() {
        let anchor_x = draw(ex, c, &mut rng)?;
        for t in 0..ey.num_clusters() {
            let anchor_y = draw(ey, t, &mut rng)?;
            for i in ex.range(c) {
                let dx = ex.distance(i, anchor_x);
                for k in ey.range(t) {
                    let gap = dx - ey.distance(k, anchor_y);
                    let noise: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
                    kernel[[i, k]] *= (RESTART_NOISE * noise - gap * gap / width).exp();
                }
            }
        }
    }
    let out = sinkhorn_projection_log(
        &kernel.mapv(f64::ln),
        product.source_marginal(),
        product.target_marginal(),
        config.sinkhorn_tol,
        config.sinkhorn_max_iters,
    )?;
    Ok(out.coupling.into_plan())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_clustered_space, PointCluster};
    use ndarray::array;

    #[test]
    fn stall_detection() {
        assert!(!stalled(&[1.0, 1.0, 1.0]));
        assert!(stalled(&[1.0, 1.0, 1.0, 1.0]));
        assert!(!stalled(&[1.0, 1.1, 1.0, 1.0]));
        assert!(stalled(&[0.0; 5]));
    }

    #[test]
    fn plain_kernel_rows_peak_at_one() {
        let lk = array![[-1.0, -3.0], [-800.0, -801.0]];
        let (k, shift) = plain_kernel(&lk).unwrap();
        assert_eq!(shift, vec![-1.0, -800.0]);
        assert_eq!(k[[0, 0]], 1.0);
        assert_eq!(k[[1, 0]], 1.0);
        let starving = array![[0.0, -900.0], [0.0, -900.0]];
        assert!(plain_kernel(&starving).is_none());
    }

    #[test]
    fn self_match_single_cluster() {
        let pts = array![[0.0, 0.0], [1.0, 0.2], [0.3, 1.5], [2.0, 2.2], [-1.0, 0.7]];
        let space = build_clustered_space(vec![PointCluster::new("a", pts)], None).unwrap();
        let cfg = SolverConfig::default().with_epsilon(1e-3);
        let (mu, report) = solve(&space, &space, &cfg).unwrap();
        assert!(report.objective <= 1e-3, "objective {}", report.objective);
        assert_eq!(report.objective_trace.len(), report.outer_iters_used);
        assert!(mu.marginal_violation() <= 1e-8);
    }

    #[test]
    fn rejects_invalid_config() {
        let space = build_clustered_space(vec![PointCluster::new("a", array![[0.0], [1.0]])], None).unwrap();
        let cfg = SolverConfig::default().with_eta(0.0);
        assert!(matches!(solve(&space, &space, &cfg), Err(JgwError::InvalidConfig { .. })));
    }
}
