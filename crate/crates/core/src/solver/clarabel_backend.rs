//! Interior-point backend built on the Clarabel conic solver.
//!
//! The adapter translates a [`ConicModel`] into Clarabel's canonical form
//! `min ½xᵀPx + qᵀx  s.t.  Ax + s = b, s ∈ K` with the row layout
//!
//! ```text
//! [ equality rows            ]  zero cone
//! [ fixed variables (lb=ub)  ]  zero cone
//! [ inequality rows          ]  nonnegative cone
//! [ finite lower bounds      ]  nonnegative cone   (−x ≤ −lb)
//! [ finite upper bounds      ]  nonnegative cone   ( x ≤  ub)
//! [ cone blocks, head first  ]  second-order cones
//! ```
//!
//! and maps the dual vector back onto the tagged equality/inequality rows.
//! Clarabel's convention for `Ax + s = b` makes its `z` exactly the
//! multipliers in `∇f + Aᵀλ + Gᵀμ = 0`, so no sign flip is needed.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{
    ConicSubproblemSolver, InfeasibilityReport, Solution, SolveError, SolveSettings, SolveStatus,
};
use crate::keys::Key;
use crate::model::{ConicModel, VarId};

/// Clarabel-backed implementation of [`ConicSubproblemSolver`].
///
/// Stateless and deterministic: every call assembles matrices in declaration
/// order and runs the engine single-threaded.
#[derive(Debug, Default, Clone)]
pub struct ClarabelSolver;

impl ClarabelSolver {
    /// Construct the backend.
    pub fn new() -> Self {
        ClarabelSolver
    }
}

/// Triplet accumulator that assembles a CSC matrix column by column.
struct CscBuilder {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl CscBuilder {
    fn new(m: usize, n: usize) -> Self {
        CscBuilder {
            m,
            cols: vec![Vec::new(); n],
        }
    }

    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.cols[col].push((row, val));
        }
    }

    fn build(mut self) -> CscMatrix<f64> {
        let n = self.cols.len();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0usize);
        for col in &mut self.cols {
            // Rows are pushed in ascending order by construction, but sort
            // defensively: CSC requires it and stability keeps determinism.
            col.sort_by_key(|&(r, _)| r);
            for &(r, v) in col.iter() {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(self.m, n, colptr, rowval, nzval)
    }
}

/// Where each dual block lives inside Clarabel's stacked `z` vector.
struct RowLayout {
    eq_len: usize,
    fixed_len: usize,
    ineq_len: usize,
}

/// Assembled Clarabel inputs: `(P, q, A, b, cones, layout)`.
type ClarabelInputs = (
    CscMatrix<f64>,
    Vec<f64>,
    CscMatrix<f64>,
    Vec<f64>,
    Vec<SupportedConeT<f64>>,
    RowLayout,
);

fn assemble(model: &ConicModel, overrides: &[(VarId, f64, f64)]) -> ClarabelInputs {
    let n = model.vars.len();

    // Objective: P diagonal (Clarabel minimizes ½xᵀPx, so double the
    // model's x² coefficients), q linear.
    let mut p = CscBuilder::new(n, n);
    let mut q = vec![0.0; n];
    for (j, v) in model.vars.iter().enumerate() {
        debug_assert!(v.quad >= 0.0, "nonconvex objective on {}", v.key);
        p.push(j, j, 2.0 * v.quad);
        q[j] = v.lin;
    }

    // Classify bounds under overrides.
    let mut fixed: Vec<(VarId, f64)> = Vec::new();
    let mut lbs: Vec<(VarId, f64)> = Vec::new();
    let mut ubs: Vec<(VarId, f64)> = Vec::new();
    for j in 0..n {
        let (lb, ub) = model.effective_bounds(j, overrides);
        debug_assert!(lb <= ub, "crossed bounds on {}", model.vars[j].key);
        if lb == ub {
            fixed.push((j, lb));
        } else {
            if lb.is_finite() {
                lbs.push((j, lb));
            }
            if ub.is_finite() {
                ubs.push((j, ub));
            }
        }
    }

    let m_eq = model.eq_rows.len();
    let m_fixed = fixed.len();
    let m_ineq = model.ineq_rows.len();
    let m_bounds = lbs.len() + ubs.len();
    let m_cone: usize = model.cones.iter().map(|c| 1 + c.tail.len()).sum();
    let m = m_eq + m_fixed + m_ineq + m_bounds + m_cone;

    let mut a = CscBuilder::new(m, n);
    let mut b = vec![0.0; m];
    let mut row = 0usize;

    for r in &model.eq_rows {
        for &(v, c) in &r.terms {
            a.push(row, v, c);
        }
        b[row] = r.rhs;
        row += 1;
    }
    for &(v, val) in &fixed {
        a.push(row, v, 1.0);
        b[row] = val;
        row += 1;
    }
    for r in &model.ineq_rows {
        for &(v, c) in &r.terms {
            a.push(row, v, c);
        }
        b[row] = r.rhs;
        row += 1;
    }
    for &(v, lb) in &lbs {
        a.push(row, v, -1.0);
        b[row] = -lb;
        row += 1;
    }
    for &(v, ub) in &ubs {
        a.push(row, v, 1.0);
        b[row] = ub;
        row += 1;
    }
    // Cone entries: s_row = b − A·x must equal the affine entry, so the
    // matrix carries the negated coefficients and b the constant.
    for cone in &model.cones {
        for expr in std::iter::once(&cone.head).chain(cone.tail.iter()) {
            for &(v, c) in &expr.terms {
                a.push(row, v, -c);
            }
            b[row] = expr.constant;
            row += 1;
        }
    }
    debug_assert_eq!(row, m);

    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if m_eq + m_fixed > 0 {
        cones.push(SupportedConeT::ZeroConeT(m_eq + m_fixed));
    }
    if m_ineq + m_bounds > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(m_ineq + m_bounds));
    }
    for cone in &model.cones {
        cones.push(SupportedConeT::SecondOrderConeT(1 + cone.tail.len()));
    }

    (
        p.build(),
        q,
        a.build(),
        b,
        cones,
        RowLayout {
            eq_len: m_eq,
            fixed_len: m_fixed,
            ineq_len: m_ineq,
        },
    )
}

/// Pull the dominant rows out of an infeasibility certificate.
fn certificate_report(model: &ConicModel, z: &[f64], layout: &RowLayout) -> InfeasibilityReport {
    let mut rows: Vec<(Key, f64)> = Vec::new();
    for (i, r) in model.eq_rows.iter().enumerate() {
        let w = z.get(i).copied().unwrap_or(0.0).abs();
        if w > 1e-9 {
            rows.push((r.key, w));
        }
    }
    let off = layout.eq_len + layout.fixed_len;
    for (i, r) in model.ineq_rows.iter().enumerate() {
        let w = z.get(off + i).copied().unwrap_or(0.0).abs();
        if w > 1e-9 {
            rows.push((r.key, w));
        }
    }
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    rows.truncate(16);
    InfeasibilityReport { rows }
}

impl ConicSubproblemSolver for ClarabelSolver {
    fn solve(
        &self,
        model: &ConicModel,
        bound_overrides: &[(VarId, f64, f64)],
        settings: &SolveSettings,
    ) -> Result<Solution, SolveError> {
        debug_assert!(
            bound_overrides.windows(2).all(|w| w[0].0 < w[1].0),
            "bound overrides must be sorted by variable id"
        );
        let (p, q, a, b, cones, layout) = assemble(model, bound_overrides);

        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .tol_feas(settings.tol_feas)
            .tol_gap_abs(settings.tol_gap_abs)
            .tol_gap_rel(settings.tol_gap_rel);
        if settings.time_limit > 0.0 {
            builder.time_limit(settings.time_limit);
        }
        let clarabel_settings = builder
            .build()
            .map_err(|e| SolveError::Engine(format!("settings rejected: {e:?}")))?;

        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, clarabel_settings)
            .map_err(|e| SolveError::Engine(format!("model rejected: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(SolveError::Infeasible(certificate_report(
                    model, &sol.z, &layout,
                )));
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Err(SolveError::Unbounded);
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::Limit,
            SolverStatus::NumericalError | SolverStatus::InsufficientProgress => {
                SolveStatus::NumericalTrouble
            }
            other => return Err(SolveError::Engine(format!("engine stopped: {other:?}"))),
        };

        let x = sol.x.clone();
        let eq_duals = sol.z[0..layout.eq_len].to_vec();
        let ineq_off = layout.eq_len + layout.fixed_len;
        let ineq_duals = sol.z[ineq_off..ineq_off + layout.ineq_len].to_vec();
        let objective = model.objective_value(&x);

        Ok(Solution {
            status,
            x,
            eq_duals,
            ineq_duals,
            objective,
            iterations: sol.iterations,
            solve_seconds: sol.solve_time,
        })
    }
}
