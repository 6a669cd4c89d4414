use serde::{Deserialize, Serialize};

use crate::error::{JgwError, Result};

/// Parameters of the entropic solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Entropic regularization, in squared normalized-distance units.
    pub epsilon: f64,
    /// Damping exponent of the outer iteration, in `(0, 1]`.
    pub eta: f64,
    pub max_outer_iters: usize,
    pub sinkhorn_max_iters: usize,
    /// L1 marginal violation at which a projection stops.
    pub sinkhorn_tol: f64,
    /// L1 change between consecutive plans at which the outer loop stops.
    /// `None` means `1e-9 · n_X · n_Y`.
    pub outer_tol: Option<f64>,
    /// Force log-domain scaling for every projection.
    pub log_domain: bool,
    pub seed: u64,
    /// Divide every distance of both spaces by their largest distance.
    pub normalize_distances: bool,
    /// Use `exp(+Λ/ε)` in the kernel instead of `exp(−Λ/ε)`.
    pub paper_literal_signs: bool,
    /// Extra runs started from seeded random perturbations of the product
    /// plan; the lowest objective at the first ε stage wins.
    pub restarts: u32,
    /// Continuation: solve first at this larger ε, then halve it down to
    /// `epsilon`, warm-starting each stage from the previous plan. Each
    /// stage gets its own `max_outer_iters`.
    pub epsilon_start: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 5e-3,
            eta: 0.5,
            max_outer_iters: 200,
            sinkhorn_max_iters: 10_000,
            sinkhorn_tol: 1e-9,
            outer_tol: None,
            log_domain: false,
            seed: 0,
            normalize_distances: true,
            paper_literal_signs: false,
            restarts: 0,
            epsilon_start: None,
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> JgwError {
    JgwError::InvalidConfig {
        key: key.into(),
        reason: reason.into(),
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("eta", format!("must lie in (0, 1], got {}", self.eta)));
        }
        if self.max_outer_iters == 0 {
            return Err(invalid("max_outer_iters", "must be positive"));
        }
        if self.sinkhorn_max_iters == 0 {
            return Err(invalid("sinkhorn_max_iters", "must be positive"));
        }
        if !(self.sinkhorn_tol > 0.0) {
            return Err(invalid("sinkhorn_tol", format!("must be positive, got {}", self.sinkhorn_tol)));
        }
        if let Some(e) = self.epsilon_start {
            if !(e.is_finite() && e >= self.epsilon) {
                return Err(invalid("epsilon_start", format!("must be finite and at least epsilon, got {e}")));
            }
        }
        if let Some(t) = self.outer_tol {
            if !(t > 0.0) {
                return Err(invalid("outer_tol", format!("must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn outer_tol_for(&self, nx: usize, ny: usize) -> f64 {
        self.outer_tol.unwrap_or(1e-9 * (nx * ny) as f64)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_restarts(mut self, restarts: u32) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_epsilon_start(mut self, epsilon_start: Option<f64>) -> Self {
        self.epsilon_start = epsilon_start;
        self
    }

    /// The ε of every continuation stage, ending with `epsilon`.
    pub fn epsilon_schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(mut e) = self.epsilon_start {
            while e > self.epsilon * (1.0 + 1e-12) {
                out.push(e);
                e *= 0.5;
            }
        }
        out.push(self.epsilon);
        out
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveReport {
    /// Unregularized objective at the returned plan, in input distance units.
    pub objective: f64,
    pub outer_iters_used: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    /// Final L1 marginal violation.
    pub marginal_violation: f64,
    pub wall_time_ms: u64,
}
