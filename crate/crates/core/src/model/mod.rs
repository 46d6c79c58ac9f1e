//! Shared optimization-model representation.
//!
//! Every optimization layer in this crate — the transmission DC-OPF, the
//! distribution SOC dispatch, the assembled single-level MISOCP, and the
//! follower-first stage models — is expressed as one [`ConicModel`]:
//!
//! ```text
//! minimize    Σ_v quad_v · x_v² + lin_v · x_v + constant
//! subject to  terms·x = rhs            (tagged equality rows)
//!             terms·x ≤ rhs            (tagged inequality rows)
//!             lb_v ≤ x_v ≤ ub_v        (native box bounds)
//!             head ≥ ‖tail‖₂           (second-order cones, affine entries)
//!             x_v ∈ {0,1}              (variables flagged binary)
//! ```
//!
//! The objective is diagonal-quadratic by construction, which is exactly the
//! class the mechanical duality layer supports. Rows and variables carry
//! [`Key`]s for diagnostics and mirroring.
//!
//! Continuous relaxations and branch fixings never mutate a model: callers
//! pass per-variable bound overrides to the solver instead, so one immutable
//! model serves the whole search tree.

pub mod eval;
pub mod export;

pub use eval::{evaluate, FeasReport};
pub use export::to_sparse_text;

use crate::keys::Key;

/// Index of a variable within its model.
pub type VarId = usize;
/// Index of a row within its block (equality and inequality blocks count
/// separately).
pub type RowId = usize;

/// Convenience alias for `f64::INFINITY` used in bound declarations.
pub const INF: f64 = f64::INFINITY;

/// A single decision variable.
#[derive(Debug, Clone)]
pub struct VarDef {
    /// What the variable represents.
    pub key: Key,
    /// Lower bound (may be `-INF`).
    pub lb: f64,
    /// Upper bound (may be `INF`).
    pub ub: f64,
    /// Whether the variable is restricted to {0,1} in the integer model.
    pub binary: bool,
    /// Objective coefficient on the squared variable.
    pub quad: f64,
    /// Objective coefficient on the variable.
    pub lin: f64,
}

/// A linear constraint row: `Σ terms · x (= or ≤) rhs`.
#[derive(Debug, Clone)]
pub struct LinRow {
    /// What the row enforces.
    pub key: Key,
    /// Sparse coefficient list `(variable, coefficient)`.
    pub terms: Vec<(VarId, f64)>,
    /// Right-hand side.
    pub rhs: f64,
}

impl LinRow {
    /// Row activity `terms · x`.
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }
}

/// An affine expression `terms · x + constant`, used for cone entries.
#[derive(Debug, Clone)]
pub struct AffExpr {
    /// Sparse coefficient list.
    pub terms: Vec<(VarId, f64)>,
    /// Constant offset.
    pub constant: f64,
}

impl AffExpr {
    /// A single-variable expression.
    pub fn var(v: VarId) -> Self {
        AffExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    /// A scaled single-variable expression.
    pub fn scaled(v: VarId, c: f64) -> Self {
        AffExpr {
            terms: vec![(v, c)],
            constant: 0.0,
        }
    }

    /// Evaluate at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

/// A second-order cone block `head ≥ ‖tail‖₂` with affine entries.
#[derive(Debug, Clone)]
pub struct SocCone {
    /// What the cone enforces.
    pub key: Key,
    /// The bounding entry.
    pub head: AffExpr,
    /// The bounded vector.
    pub tail: Vec<AffExpr>,
}

impl SocCone {
    /// Cone residual `head − ‖tail‖` at `x` (negative = violated).
    pub fn residual(&self, x: &[f64]) -> f64 {
        let h = self.head.value(x);
        let norm = self
            .tail
            .iter()
            .map(|e| {
                let v = e.value(x);
                v * v
            })
            .sum::<f64>()
            .sqrt();
        h - norm
    }
}

/// Size summary of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelStats {
    /// Total variables.
    pub vars: usize,
    /// Variables flagged binary.
    pub binaries: usize,
    /// Equality rows.
    pub eq_rows: usize,
    /// Inequality rows.
    pub ineq_rows: usize,
    /// Second-order cone blocks.
    pub cones: usize,
    /// Structural nonzeros across rows and cone entries.
    pub nonzeros: usize,
    /// Finite box bounds (each side counted separately).
    pub finite_bounds: usize,
}

/// The shared model container. See the module docs for the algebraic form.
#[derive(Debug, Clone, Default)]
pub struct ConicModel {
    /// Decision variables in declaration order (declaration order is the
    /// canonical variable order everywhere: solver columns, solution vectors,
    /// reports).
    pub vars: Vec<VarDef>,
    /// Constant objective offset.
    pub obj_constant: f64,
    /// Equality rows.
    pub eq_rows: Vec<LinRow>,
    /// Inequality rows (`≤`).
    pub ineq_rows: Vec<LinRow>,
    /// Second-order cone blocks.
    pub cones: Vec<SocCone>,
}

impl ConicModel {
    /// An empty model.
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a continuous variable with the given bounds; returns its id.
    pub fn add_var(&mut self, key: Key, lb: f64, ub: f64) -> VarId {
        debug_assert!(lb <= ub, "variable {key} declared with lb > ub");
        self.vars.push(VarDef {
            key,
            lb,
            ub,
            binary: false,
            quad: 0.0,
            lin: 0.0,
        });
        self.vars.len() - 1
    }

    /// Add a binary variable (continuous relaxation bounds `[0,1]`).
    pub fn add_binary(&mut self, key: Key) -> VarId {
        self.vars.push(VarDef {
            key,
            lb: 0.0,
            ub: 1.0,
            binary: true,
            quad: 0.0,
            lin: 0.0,
        });
        self.vars.len() - 1
    }

    /// Add to a variable's objective coefficients.
    pub fn add_cost(&mut self, v: VarId, quad: f64, lin: f64) {
        self.vars[v].quad += quad;
        self.vars[v].lin += lin;
    }

    /// Add an equality row; returns its id within the equality block.
    pub fn add_eq(&mut self, key: Key, terms: Vec<(VarId, f64)>, rhs: f64) -> RowId {
        self.eq_rows.push(LinRow { key, terms, rhs });
        self.eq_rows.len() - 1
    }

    /// Add an inequality row (`terms·x ≤ rhs`); returns its id within the
    /// inequality block.
    pub fn add_ineq(&mut self, key: Key, terms: Vec<(VarId, f64)>, rhs: f64) -> RowId {
        self.ineq_rows.push(LinRow { key, terms, rhs });
        self.ineq_rows.len() - 1
    }

    /// Add a second-order cone block.
    pub fn add_cone(&mut self, key: Key, head: AffExpr, tail: Vec<AffExpr>) {
        self.cones.push(SocCone { key, head, tail });
    }

    /// Ids of all binary variables, in declaration order.
    pub fn binary_ids(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.binary)
            .map(|(i, _)| i)
            .collect()
    }

    /// Objective value at `x`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut obj = self.obj_constant;
        for (i, v) in self.vars.iter().enumerate() {
            if v.quad != 0.0 {
                obj += v.quad * x[i] * x[i];
            }
            if v.lin != 0.0 {
                obj += v.lin * x[i];
            }
        }
        obj
    }

    /// Size summary.
    pub fn stats(&self) -> ModelStats {
        let nnz_rows: usize = self
            .eq_rows
            .iter()
            .chain(self.ineq_rows.iter())
            .map(|r| r.terms.len())
            .sum();
        let nnz_cones: usize = self
            .cones
            .iter()
            .map(|c| c.head.terms.len() + c.tail.iter().map(|e| e.terms.len()).sum::<usize>())
            .sum();
        let finite_bounds = self
            .vars
            .iter()
            .map(|v| usize::from(v.lb.is_finite()) + usize::from(v.ub.is_finite()))
            .sum();
        ModelStats {
            vars: self.vars.len(),
            binaries: self.vars.iter().filter(|v| v.binary).count(),
            eq_rows: self.eq_rows.len(),
            ineq_rows: self.ineq_rows.len(),
            cones: self.cones.len(),
            nonzeros: nnz_rows + nnz_cones,
            finite_bounds,
        }
    }

    /// Effective bounds of a variable under optional overrides.
    ///
    /// `overrides` is a sorted slice of `(var, lb, ub)` produced by the
    /// branch-and-bound layer; a variable not listed keeps its declared
    /// bounds.
    pub fn effective_bounds(&self, v: VarId, overrides: &[(VarId, f64, f64)]) -> (f64, f64) {
        match overrides.binary_search_by_key(&v, |o| o.0) {
            Ok(i) => (overrides[i].1, overrides[i].2),
            Err(_) => (self.vars[v].lb, self.vars[v].ub),
        }
    }
}
