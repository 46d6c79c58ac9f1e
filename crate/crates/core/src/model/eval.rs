//! Independent feasibility evaluation.
//!
//! The evaluator replays every constraint of a [`ConicModel`] against a
//! candidate point without consulting any solver state. Branch-and-bound
//! incumbents, experiment outputs, and acceptance checks all pass through it,
//! so a solver cannot silently hand back an infeasible "solution".

use super::{ConicModel, VarId};
use crate::keys::Key;

/// Worst violation per constraint class, with the offending row's key.
#[derive(Debug, Clone)]
pub struct FeasReport {
    /// Largest `|terms·x − rhs|` over equality rows.
    pub eq_residual: f64,
    /// Key of the worst equality row.
    pub eq_worst: Option<Key>,
    /// Largest `max(0, terms·x − rhs)` over inequality rows.
    pub ineq_violation: f64,
    /// Key of the worst inequality row.
    pub ineq_worst: Option<Key>,
    /// Largest `max(0, ‖tail‖ − head)` over cone blocks.
    pub cone_violation: f64,
    /// Key of the worst cone block.
    pub cone_worst: Option<Key>,
    /// Largest bound violation `max(0, lb − x, x − ub)`.
    pub bound_violation: f64,
    /// Key of the worst-bounded variable.
    pub bound_worst: Option<Key>,
    /// Largest `|x − round(x)|` over binary variables.
    pub integrality_gap: f64,
    /// Key of the least-integral binary.
    pub integrality_worst: Option<Key>,
    /// Objective value at the point.
    pub objective: f64,
}

impl FeasReport {
    /// The largest violation across all constraint classes (integrality
    /// excluded — relaxations are legitimately fractional).
    pub fn worst_violation(&self) -> f64 {
        self.eq_residual
            .max(self.ineq_violation)
            .max(self.cone_violation)
            .max(self.bound_violation)
    }

    /// True if every constraint class (including integrality) is within
    /// `tol`.
    pub fn is_integer_feasible(&self, tol: f64) -> bool {
        self.worst_violation() <= tol && self.integrality_gap <= tol
    }

    /// Human-readable one-line summary.
    pub fn summary(&self) -> String {
        format!(
            "eq {:.3e}{} ineq {:.3e}{} cone {:.3e}{} bounds {:.3e}{} int {:.3e}{}",
            self.eq_residual,
            fmt_key(&self.eq_worst),
            self.ineq_violation,
            fmt_key(&self.ineq_worst),
            self.cone_violation,
            fmt_key(&self.cone_worst),
            self.bound_violation,
            fmt_key(&self.bound_worst),
            self.integrality_gap,
            fmt_key(&self.integrality_worst),
        )
    }
}

fn fmt_key(k: &Option<Key>) -> String {
    match k {
        Some(k) => format!(" ({k})"),
        None => String::new(),
    }
}

/// Replay all constraints of `model` at `x`, honoring bound `overrides`
/// (sorted `(var, lb, ub)` triples, same convention as the solver layer).
pub fn evaluate(model: &ConicModel, x: &[f64], overrides: &[(VarId, f64, f64)]) -> FeasReport {
    assert_eq!(
        x.len(),
        model.vars.len(),
        "point dimension does not match the model"
    );

    let mut report = FeasReport {
        eq_residual: 0.0,
        eq_worst: None,
        ineq_violation: 0.0,
        ineq_worst: None,
        cone_violation: 0.0,
        cone_worst: None,
        bound_violation: 0.0,
        bound_worst: None,
        integrality_gap: 0.0,
        integrality_worst: None,
        objective: model.objective_value(x),
    };

    for row in &model.eq_rows {
        let r = (row.activity(x) - row.rhs).abs();
        if r > report.eq_residual {
            report.eq_residual = r;
            report.eq_worst = Some(row.key);
        }
    }
    for row in &model.ineq_rows {
        let v = row.activity(x) - row.rhs;
        if v > report.ineq_violation {
            report.ineq_violation = v;
            report.ineq_worst = Some(row.key);
        }
    }
    for cone in &model.cones {
        let v = -cone.residual(x);
        if v > report.cone_violation {
            report.cone_violation = v;
            report.cone_worst = Some(cone.key);
        }
    }
    for (i, var) in model.vars.iter().enumerate() {
        let (lb, ub) = model.effective_bounds(i, overrides);
        let v = (lb - x[i]).max(x[i] - ub).max(0.0);
        if v > report.bound_violation {
            report.bound_violation = v;
            report.bound_worst = Some(var.key);
        }
        if var.binary {
            let gap = (x[i] - x[i].round()).abs();
            if gap > report.integrality_gap {
                report.integrality_gap = gap;
                report.integrality_worst = Some(var.key);
            }
        }
    }
    report
}

/// ∞-norm of the stationarity residual `∇f(x) + Aᵀλ + Gᵀμ` over all
/// variables.
///
/// `eq_duals` pairs with the equality rows and `ineq_duals` with the
/// inequality rows, in declaration order. The check is exact only for models
/// whose variables are unbounded boxes and which have no cone blocks —
/// finite bounds and cones carry multipliers the caller does not hold. The
/// transmission program is built that way on purpose: every binding
/// restriction is a tagged row, so this residual certifies its first-order
/// conditions completely.
pub fn stationarity_residual(
    model: &ConicModel,
    x: &[f64],
    eq_duals: &[f64],
    ineq_duals: &[f64],
) -> f64 {
    assert_eq!(x.len(), model.vars.len(), "point dimension mismatch");
    assert_eq!(eq_duals.len(), model.eq_rows.len(), "eq dual count mismatch");
    assert_eq!(
        ineq_duals.len(),
        model.ineq_rows.len(),
        "ineq dual count mismatch"
    );
    let mut grad: Vec<f64> = model
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| 2.0 * v.quad * x[i] + v.lin)
        .collect();
    for (row, lam) in model.eq_rows.iter().zip(eq_duals) {
        for &(v, c) in &row.terms {
            grad[v] += c * lam;
        }
    }
    for (row, mu) in model.ineq_rows.iter().zip(ineq_duals) {
        for &(v, c) in &row.terms {
            grad[v] += c * mu;
        }
    }
    grad.iter().fold(0.0, |acc, g| acc.max(g.abs()))
}

/// Largest complementary-slackness violation `|μ_r · (rhs_r − activity_r)|`
/// over inequality rows, together with sign sanity: a negative multiplier
/// counts as a violation of its own magnitude.
pub fn complementarity_residual(model: &ConicModel, x: &[f64], ineq_duals: &[f64]) -> f64 {
    assert_eq!(
        ineq_duals.len(),
        model.ineq_rows.len(),
        "ineq dual count mismatch"
    );
    let mut worst: f64 = 0.0;
    for (row, &mu) in model.ineq_rows.iter().zip(ineq_duals) {
        let slack = row.rhs - row.activity(x);
        worst = worst.max((mu * slack).abs()).max(-mu);
    }
    worst
}
