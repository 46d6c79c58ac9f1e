//! Continuous conic subproblem solving.
//!
//! [`ConicSubproblemSolver`] is the seam between the modeling/search layers
//! and the numerical engine: it takes an immutable [`ConicModel`], a sparse
//! set of per-variable bound overrides (how branch-and-bound fixes binaries
//! without rebuilding the model), and returns primal values plus duals for
//! every tagged row. The crate ships one implementation,
//! [`ClarabelSolver`], an interior-point backend; the trait exists so the
//! search layer stays engine-agnostic and tests can interpose wrappers (call
//! counters, failure injectors).
//!
//! Dual sign convention: for `minimize f(x)` with rows `a·x = b` (multiplier
//! λ, free) and `g·x ≤ h` (multiplier μ ≥ 0), the returned duals satisfy
//! `∇f(x) + Aᵀλ + Gᵀμ ≈ 0` at an optimum. This is the convention the
//! first-order-condition layer mirrors.

mod clarabel_backend;

pub use clarabel_backend::ClarabelSolver;

use crate::keys::Key;
use crate::model::{ConicModel, VarId};

/// Termination status of a continuous solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Converged to the requested tolerances.
    Optimal,
    /// Converged to slightly relaxed tolerances; the point is usable but the
    /// caller may want to treat bounds derived from it with care.
    AlmostOptimal,
    /// The constraints admit no solution (an infeasibility certificate is
    /// attached to the outcome).
    PrimalInfeasible,
    /// The objective is unbounded below over the feasible set.
    Unbounded,
    /// Iteration or time limit hit before convergence.
    Limit,
    /// The engine failed numerically.
    NumericalTrouble,
}

/// A successful (or at least informative) solve result.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Termination status.
    pub status: SolveStatus,
    /// Primal point in model variable order.
    pub x: Vec<f64>,
    /// Multipliers of the equality rows, in row order.
    pub eq_duals: Vec<f64>,
    /// Multipliers of the inequality rows, in row order (≥ 0 at optimality).
    pub ineq_duals: Vec<f64>,
    /// Objective recomputed from `x` against the model (never trusted from
    /// the engine, which may scale or offset internally).
    pub objective: f64,
    /// Interior-point iterations used.
    pub iterations: u32,
    /// Wall-clock seconds inside the engine.
    pub solve_seconds: f64,
}

impl Solution {
    /// True when the point is usable as an optimum (strict or relaxed
    /// convergence).
    pub fn is_usable(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

/// Rows implicated by an infeasibility certificate, largest weight first.
#[derive(Debug, Clone)]
pub struct InfeasibilityReport {
    /// `(row key, certificate weight)` for the dominant rows.
    pub rows: Vec<(Key, f64)>,
}

impl std::fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "infeasibility certificate rows:")?;
        for (k, w) in self.rows.iter().take(8) {
            write!(f, " {k} ({w:.3e})")?;
        }
        Ok(())
    }
}

/// Errors from a continuous solve.
#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    /// No feasible point exists under the given bounds.
    #[error("subproblem infeasible; {0}")]
    Infeasible(InfeasibilityReport),
    /// The objective is unbounded below.
    #[error("subproblem unbounded below")]
    Unbounded,
    /// The engine stopped without a usable point.
    #[error("solver failed: {0}")]
    Engine(String),
}

/// Tolerances and limits for a continuous solve.
#[derive(Debug, Clone)]
pub struct SolveSettings {
    /// Primal/dual feasibility tolerance requested from the engine.
    pub tol_feas: f64,
    /// Absolute duality-gap tolerance.
    pub tol_gap_abs: f64,
    /// Relative duality-gap tolerance.
    pub tol_gap_rel: f64,
    /// Iteration cap.
    pub max_iter: u32,
    /// Wall-clock cap in seconds (0 disables).
    pub time_limit: f64,
    /// Engine log output.
    pub verbose: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tol_feas: 1e-8,
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            max_iter: 200,
            time_limit: 0.0,
            verbose: false,
        }
    }
}

/// A continuous conic solver usable for relaxations and polish solves.
///
/// Implementations must be deterministic: the same model, overrides, and
/// settings must reproduce the same floating-point output.
pub trait ConicSubproblemSolver: Sync {
    /// Solve `model` with `bound_overrides` (sorted by variable id; each
    /// entry replaces the declared bounds of one variable).
    fn solve(
        &self,
        model: &ConicModel,
        bound_overrides: &[(VarId, f64, f64)],
        settings: &SolveSettings,
    ) -> Result<Solution, SolveError>;
}
