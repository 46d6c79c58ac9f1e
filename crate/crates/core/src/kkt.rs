//! Collapse the leader/follower structure into one mixed-integer model.
//!
//! The transmission dispatch is a convex program that is *parametric* in the
//! boundary exchanges: the distribution side (the leader) picks the exchange
//! quantities, the transmission operator (the follower) dispatches optimally
//! given them. Because the follower's problem is convex with strong duality,
//! "the follower dispatches optimally" can be stated as a finite constraint
//! system — its first-order (KKT) conditions — and embedded next to the
//! leader's own constraints. What remains is a single-level model over
//!
//! * the transmission primal variables,
//! * one multiplier per transmission row (`λ` free for equalities, `μ ≥ 0`
//!   for inequalities),
//! * one switch binary `α` per inequality row linearizing complementarity
//!   through Big-M rows, and
//! * every distribution network's own block (with its `w`/`y` binaries).
//!
//! # Mechanical derivation
//!
//! [`derive_kkt`] reads the stationarity system `2Q·x + c + Aᵀλ + Gᵀμ = 0`
//! straight off the model matrices: nothing is transcribed by hand, so the
//! system is correct for whatever rows the builder actually emitted. The
//! transmission program cooperates by declaring every variable as a free box
//! and expressing all bounds as tagged rows, so every restriction that can
//! bind owns exactly one multiplier.
//!
//! A hand-transcribed description of the expected multiplier support per
//! variable family exists as well ([`audit_kkt`]) — it is a cross-check and
//! documentation artifact, never the source of the constraints. Two known,
//! deliberate differences of the derived system are reported as
//! `MatchModuloExtra` rather than failures: nonnegativity multipliers on the
//! power variables, and the boundary-pin multipliers (the pins are what makes
//! the follower problem parametric in the leader's decisions).
//!
//! # Complementarity linearization
//!
//! For inequality row `g·x ≤ h` with slack `s = h − g·x` and multiplier `μ`,
//! complementarity `μ·s = 0` is enforced by a binary `α` and two rows:
//! `s ≤ M_s·(1−α)` and `μ ≤ M_μ·α`. `M_s` is certified per row from implied
//! variable bounds (never guessed); `M_μ` comes from observed dual magnitudes
//! with a safety factor, and a too-small choice is detectable after the fact
//! because every accepted solution is replayed against the true
//! complementarity products.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::adn::{build_adn_into, AdnIndex};
use crate::keys::Key;
use crate::model::{ConicModel, RowId, VarId, INF};
use crate::net::Scenario;
use crate::solver::Solution;
use crate::tn::{CanonicalConvexProgram, TnIndex};

// ---------------------------------------------------------------------------
// Derivation
// ---------------------------------------------------------------------------

/// Ways the mechanical derivation can reject a program.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KktError {
    /// A variable carries a negative quadratic cost — the program is not
    /// convex and its first-order conditions do not characterize optima.
    #[error("nonconvex objective: variable {key} has quadratic coefficient {quad}")]
    NonConvex {
        /// Offending variable.
        key: Key,
        /// Its quadratic coefficient.
        quad: f64,
    },
    /// The program uses a feature the derivation does not cover (finite
    /// variable boxes, cones, binaries) — such restrictions would carry
    /// multipliers the derived system does not model.
    #[error("unsupported program feature: {0}")]
    Unsupported(String),
    /// An inequality row's slack cannot be bounded from the implied variable
    /// bounds, so no certified Big-M exists for it.
    #[error("slack of row {key} is unbounded; no certified Big-M exists")]
    UnboundedSlack {
        /// Offending row.
        key: Key,
    },
}

/// Stationarity row for one primal variable: `2·quad·x + lin + Σ a·λ + Σ g·μ = 0`.
#[derive(Debug, Clone)]
pub struct StatRow {
    /// The variable this row differentiates by.
    pub var: VarId,
    /// Its key.
    pub var_key: Key,
    /// Objective quadratic coefficient (on `x²`).
    pub quad: f64,
    /// Objective linear coefficient.
    pub lin: f64,
    /// Transposed equality-matrix column: `(equality row, coefficient)`.
    pub eq_terms: Vec<(RowId, f64)>,
    /// Transposed inequality-matrix column: `(inequality row, coefficient)`.
    pub ineq_terms: Vec<(RowId, f64)>,
}

/// The first-order optimality system of a convex program, as data.
///
/// One stationarity row per primal variable (indexed by variable id), one
/// implied multiplier per constraint row, one complementarity pair per
/// inequality row. Produced by [`derive_kkt`]; turned into model rows by
/// [`assemble_single_level`].
#[derive(Debug, Clone)]
pub struct KktSystem {
    /// Primal variable count of the source program.
    pub n_vars: usize,
    /// Equality row count (= number of free multipliers λ).
    pub n_eq: usize,
    /// Inequality row count (= number of nonnegative multipliers μ and of
    /// complementarity pairs).
    pub n_ineq: usize,
    /// Stationarity rows, one per variable, in variable order.
    pub stationarity: Vec<StatRow>,
}

/// Derive the first-order system of `prog` from its matrices.
///
/// Requires the canonical shape the transmission builder produces: convex
/// diagonal-quadratic objective, no cones, no binaries, and every variable a
/// free box (so that the tagged rows own all multipliers).
pub fn derive_kkt(prog: &CanonicalConvexProgram) -> Result<KktSystem, KktError> {
    let m = &prog.model;
    for v in &m.vars {
        if v.quad < 0.0 {
            return Err(KktError::NonConvex {
                key: v.key,
                quad: v.quad,
            });
        }
        if v.binary {
            return Err(KktError::Unsupported(format!(
                "binary variable {} in a convex follower program",
                v.key
            )));
        }
        if v.lb.is_finite() || v.ub.is_finite() {
            return Err(KktError::Unsupported(format!(
                "variable {} has native box bounds; bounds must be tagged rows",
                v.key
            )));
        }
    }
    if !m.cones.is_empty() {
        return Err(KktError::Unsupported(
            "cone blocks in the follower program".into(),
        ));
    }

    let mut stationarity: Vec<StatRow> = m
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| StatRow {
            var: i,
            var_key: v.key,
            quad: v.quad,
            lin: v.lin,
            eq_terms: Vec::new(),
            ineq_terms: Vec::new(),
        })
        .collect();
    for (r, row) in m.eq_rows.iter().enumerate() {
        for &(v, c) in &row.terms {
            stationarity[v].eq_terms.push((r, c));
        }
    }
    for (r, row) in m.ineq_rows.iter().enumerate() {
        for &(v, c) in &row.terms {
            stationarity[v].ineq_terms.push((r, c));
        }
    }

    Ok(KktSystem {
        n_vars: m.vars.len(),
        n_eq: m.eq_rows.len(),
        n_ineq: m.ineq_rows.len(),
        stationarity,
    })
}

// ---------------------------------------------------------------------------
// Implied bounds and Big-M certification
// ---------------------------------------------------------------------------

/// Tightest variable bounds provable by interval propagation over the
/// constraint rows (declared boxes as the starting point).
///
/// Each pass relaxes one variable of a row against the interval extremes of
/// the others — inequality rows tighten upper sides only, equality rows
/// tighten both — and passes repeat until a fixed point (or a pass cap, since
/// validity does not require convergence). The result is a valid enclosure
/// of the feasible set's projection, suitable for certifying Big-M constants
/// and for fixing switch binaries before search.
pub fn implied_bounds(model: &ConicModel) -> Vec<(f64, f64)> {
    let seed_lo: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let seed_hi: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    implied_bounds_from(model, seed_lo, seed_hi)
}

/// [`implied_bounds`] with caller-supplied starting boxes (used by presolve
/// to propagate tentative binary fixings without mutating the model).
pub fn implied_bounds_from(
    model: &ConicModel,
    mut lo: Vec<f64>,
    mut hi: Vec<f64>,
) -> Vec<(f64, f64)> {
    // Derived bounds larger than this are kept at infinity: dividing by
    // small coefficients amplifies interval widths pass over pass, and a
    // "bound" of 1e30 certifies nothing useful while risking overflow.
    const CAP: f64 = 1e12;

    // Interval min/max of a row's terms excluding index `skip`.
    let extreme = |terms: &[(VarId, f64)], skip: usize, lo: &[f64], hi: &[f64], max: bool| {
        let mut acc = 0.0;
        for (i, &(vi, ai)) in terms.iter().enumerate() {
            if i == skip {
                continue;
            }
            acc += if (ai > 0.0) == max { ai * hi[vi] } else { ai * lo[vi] };
        }
        acc
    };

    for _pass in 0..16 {
        let mut changed = false;
        for row in &model.ineq_rows {
            for (j, &(vj, aj)) in row.terms.iter().enumerate() {
                if aj == 0.0 {
                    continue;
                }
                let rest_min = extreme(&row.terms, j, &lo, &hi, false);
                if !rest_min.is_finite() {
                    continue;
                }
                let limit = (row.rhs - rest_min) / aj;
                if limit.abs() > CAP {
                    continue;
                }
                if aj > 0.0 {
                    if limit < hi[vj] - 1e-12 {
                        hi[vj] = limit;
                        changed = true;
                    }
                } else if limit > lo[vj] + 1e-12 {
                    lo[vj] = limit;
                    changed = true;
                }
            }
        }
        for row in &model.eq_rows {
            for (j, &(vj, aj)) in row.terms.iter().enumerate() {
                if aj == 0.0 {
                    continue;
                }
                // a_j·x_j = rhs − rest: the ≤ side bounds one end of x_j,
                // the ≥ side the other.
                let rest_min = extreme(&row.terms, j, &lo, &hi, false);
                let rest_max = extreme(&row.terms, j, &lo, &hi, true);
                let (cand_lo, cand_hi) = if aj > 0.0 {
                    ((row.rhs - rest_max) / aj, (row.rhs - rest_min) / aj)
                } else {
                    ((row.rhs - rest_min) / aj, (row.rhs - rest_max) / aj)
                };
                if cand_hi.is_finite() && cand_hi.abs() <= CAP && cand_hi < hi[vj] - 1e-12 {
                    hi[vj] = cand_hi;
                    changed = true;
                }
                if cand_lo.is_finite() && cand_lo.abs() <= CAP && cand_lo > lo[vj] + 1e-12 {
                    lo[vj] = cand_lo;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    lo.into_iter().zip(hi).collect()
}

/// Big-M sizing policy for the complementarity linearization.
#[derive(Debug, Clone, Copy)]
pub struct BigMPolicy {
    /// Bound applied to every multiplier (`μ ≤ dual_m · α`).
    pub dual_m: f64,
    /// When set, overrides the certified per-row slack bounds.
    pub slack_override: Option<f64>,
}

impl BigMPolicy {
    /// Dual-side bound from observed data, certified slack side.
    pub fn from_dual_bound(dual_m: f64) -> Self {
        BigMPolicy {
            dual_m,
            slack_override: None,
        }
    }

    /// One constant for both sides (tests and external overrides).
    pub fn fixed(m: f64) -> Self {
        BigMPolicy {
            dual_m: m,
            slack_override: Some(m),
        }
    }
}

/// Dual-side Big-M from solved relaxations: ten times the largest multiplier
/// magnitude seen, floored at 1000. Feed it every available reference solve
/// (free exchanges, pinned exchanges) so the bound covers the dual ranges the
/// search will actually visit.
pub fn dual_bound_from_solves<'a>(solutions: impl IntoIterator<Item = &'a Solution>) -> f64 {
    let mut worst = 0.0_f64;
    for s in solutions {
        for d in s.eq_duals.iter().chain(s.ineq_duals.iter()) {
            if d.is_finite() {
                worst = worst.max(d.abs());
            }
        }
    }
    (10.0 * worst).max(1e3)
}

/// One linearized complementarity pair.
#[derive(Debug, Clone, Copy)]
pub struct CompPair {
    /// Inequality row id within the follower program.
    pub row: RowId,
    /// The row's key.
    pub key: Key,
    /// Certified bound on the row's slack.
    pub slack_m: f64,
    /// Bound on the row's multiplier.
    pub dual_m: f64,
}

/// The complementarity pairs with their certified constants.
#[derive(Debug, Clone)]
pub struct LinearizedKkt {
    /// One pair per inequality row, in row order.
    pub pairs: Vec<CompPair>,
}

/// Size the Big-M constants for every complementarity pair of `kkt`.
///
/// Slack bounds are certified per row from [`implied_bounds`] of the follower
/// program *with its boundary pins relaxed* — in the single-level embedding
/// the pinned exchanges range over the leader's whole feasible set, so a
/// bound certified against any one pin value would be unsound (a zero pin
/// would certify zero slack and freeze the exchange shut). A row whose slack
/// cannot be bounded is an error, not a guess. The dual bound comes from
/// `policy`.
pub fn big_m_linearize(
    prog: &CanonicalConvexProgram,
    kkt: &KktSystem,
    policy: &BigMPolicy,
) -> Result<LinearizedKkt, KktError> {
    assert_eq!(
        kkt.n_ineq,
        prog.model.ineq_rows.len(),
        "system derived from a different program"
    );
    let mut unpinned = prog.model.clone();
    unpinned
        .eq_rows
        .retain(|r| !matches!(r.key, Key::TnBoundaryPin { .. }));
    let bounds = implied_bounds(&unpinned);
    let mut pairs = Vec::with_capacity(kkt.n_ineq);
    for (r, row) in prog.model.ineq_rows.iter().enumerate() {
        let slack_m = match policy.slack_override {
            Some(m) => m,
            None => {
                // slack = rhs − activity; its maximum is rhs − min(activity).
                let mut min_activity = 0.0;
                for &(v, a) in &row.terms {
                    let (l, h) = bounds[v];
                    min_activity += if a > 0.0 { a * l } else { a * h };
                }
                let m = row.rhs - min_activity;
                if !m.is_finite() {
                    return Err(KktError::UnboundedSlack { key: row.key });
                }
                m.max(0.0)
            }
        };
        pairs.push(CompPair {
            row: r,
            key: row.key,
            slack_m,
            dual_m: policy.dual_m,
        });
    }
    Ok(LinearizedKkt { pairs })
}

// ---------------------------------------------------------------------------
// Single-level assembly
// ---------------------------------------------------------------------------

/// Ways the assembly can fail to couple the two levels.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CouplingError {
    /// The follower program was built without boundary pins, so there is
    /// nothing to couple the leader's exchanges to.
    #[error("follower program has no boundary-pin rows; build it with a fixing")]
    NoPinRows,
    /// A distribution network attaches at a bus with no exchange point.
    #[error("distribution network {label} attaches at bus {bus}, which has no boundary exchange")]
    AttachmentNotBoundary {
        /// The network's label.
        label: String,
        /// The attachment bus.
        bus: u32,
    },
    /// Horizon mismatch between the follower program and the scenario.
    #[error("follower program covers {prog} periods, scenario {scenario}")]
    HorizonMismatch {
        /// Periods in the program.
        prog: u32,
        /// Periods in the scenario.
        scenario: u32,
    },
}

/// The assembled single-level model: leader objective and constraints,
/// follower primal feasibility, follower optimality (stationarity + Big-M
/// complementarity), and the boundary coupling through the rewritten pin
/// rows.
#[derive(Debug, Clone)]
pub struct SingleLevelModel {
    /// The complete mixed-integer model.
    pub model: ConicModel,
    /// Follower variable/row lookup (variable ids are unchanged from the
    /// source program).
    pub tn_index: TnIndex,
    /// One block index per distribution network, in scenario order.
    pub adn_indices: Vec<AdnIndex>,
    /// Multiplier variable per follower equality row, in row order.
    pub lambda: Vec<VarId>,
    /// Multiplier variable per follower inequality row, in row order.
    pub mu: Vec<VarId>,
    /// Switch binary per follower inequality row, in row order.
    pub alpha: Vec<VarId>,
    /// The complementarity pairs the model encodes.
    pub pairs: Vec<CompPair>,
    /// Variable count of the bare follower program (its variables occupy
    /// ids `0..tn_var_count` in [`SingleLevelModel::model`]).
    pub tn_var_count: usize,
    /// The transmission network the follower block was built from, kept so
    /// the search can re-solve the follower alone at candidate exchange
    /// profiles (repair heuristics, optimality audits).
    pub tn: crate::net::TransmissionNetwork,
    /// The scenario configuration the follower block was built from.
    pub cfg: crate::net::ScenarioConfig,
}

impl SingleLevelModel {
    /// Project the follower's primal variables out of a full solution
    /// vector.
    pub fn tn_primal<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..self.tn_var_count]
    }

    /// Largest true complementarity product `μ_r · slack_r` at `x` —
    /// independent of the Big-M rows, so a too-small constant shows up here.
    pub fn complementarity_products(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for pair in &self.pairs {
            let row = &self.model.ineq_rows[pair.row];
            let slack = row.rhs - row.activity(x);
            let mu = x[self.mu[pair.row]];
            worst = worst.max((mu * slack).abs());
        }
        worst
    }

    /// Multi-line size summary of the assembled model by component.
    pub fn size_report(&self) -> String {
        let s = self.model.stats();
        let n_alpha = self.alpha.len();
        let n_wy = s.binaries - n_alpha;
        format!(
            "single-level model: {} variables ({} binary: {} complementarity switches, \
             {} device/trade), {} equality rows, {} inequality rows, {} cones, {} nonzeros\n\
             follower block: {} primal variables, {} multipliers\n\
             distribution blocks: {}",
            s.vars,
            s.binaries,
            n_alpha,
            n_wy,
            s.eq_rows,
            s.ineq_rows,
            s.cones,
            s.nonzeros,
            self.tn_var_count,
            self.lambda.len() + self.mu.len(),
            self.adn_indices.len(),
        )
    }

    /// Render the whole model in the documented sparse text format.
    pub fn to_sparse_text(&self) -> String {
        crate::model::export::to_sparse_text(&self.model)
    }
}

/// Assemble the single-level model from a pinned follower program, its
/// derived first-order system, and the scenario's distribution networks.
///
/// The follower's objective is dropped (it survives inside the stationarity
/// rows); the distribution blocks bring the leader's procurement objective.
/// Every boundary-pin row is rewritten from `pk = constant` to
/// `pk − Σ (matching leader exchange) = 0`, which is the entire coupling:
/// exchange points without an attached network stay pinned to zero.
pub fn assemble_single_level(
    prog: &CanonicalConvexProgram,
    scenario: &Scenario,
    kkt: &KktSystem,
    lin: &LinearizedKkt,
) -> Result<SingleLevelModel, CouplingError> {
    let cfg = &scenario.cfg;
    if prog.index.horizon != cfg.horizon as u32 {
        return Err(CouplingError::HorizonMismatch {
            prog: prog.index.horizon,
            scenario: cfg.horizon as u32,
        });
    }
    if prog.index.pin_rows.is_empty() && !scenario.adns.is_empty() {
        return Err(CouplingError::NoPinRows);
    }
    assert_eq!(kkt.n_vars, prog.model.vars.len(), "foreign system");
    assert_eq!(lin.pairs.len(), kkt.n_ineq, "foreign linearization");

    let mut big = prog.model.clone();
    let tn_var_count = big.vars.len();

    // The follower's objective moves into its optimality conditions; the
    // model's objective belongs to the leader alone.
    for v in &mut big.vars {
        v.quad = 0.0;
        v.lin = 0.0;
    }
    big.obj_constant = 0.0;

    // Multipliers: λ free per equality row, μ ≥ 0 per inequality row.
    let lambda: Vec<VarId> = (0..kkt.n_eq)
        .map(|r| big.add_var(Key::DualEq { row: r as u32 }, -INF, INF))
        .collect();
    let mu: Vec<VarId> = (0..kkt.n_ineq)
        .map(|r| big.add_var(Key::DualIneq { row: r as u32 }, 0.0, INF))
        .collect();

    // Stationarity rows.
    for srow in &kkt.stationarity {
        let mut terms: Vec<(VarId, f64)> = Vec::with_capacity(
            1 + srow.eq_terms.len() + srow.ineq_terms.len(),
        );
        if srow.quad != 0.0 {
            terms.push((srow.var, 2.0 * srow.quad));
        }
        for &(r, c) in &srow.eq_terms {
            terms.push((lambda[r], c));
        }
        for &(r, c) in &srow.ineq_terms {
            terms.push((mu[r], c));
        }
        big.add_eq(
            Key::Stationarity {
                var: srow.var as u32,
            },
            terms,
            -srow.lin,
        );
    }

    // Complementarity switches: slack ≤ M_s(1−α) and μ ≤ M_μ·α.
    let mut alpha = Vec::with_capacity(lin.pairs.len());
    for pair in &lin.pairs {
        let a = big.add_binary(Key::CompBinary {
            row: pair.row as u32,
        });
        alpha.push(a);
        let src = prog.model.ineq_rows[pair.row].clone();
        let mut slack_terms: Vec<(VarId, f64)> =
            src.terms.iter().map(|&(v, c)| (v, -c)).collect();
        slack_terms.push((a, pair.slack_m));
        big.add_ineq(
            Key::CompSlack {
                row: pair.row as u32,
            },
            slack_terms,
            pair.slack_m - src.rhs,
        );
        big.add_ineq(
            Key::CompDual {
                row: pair.row as u32,
            },
            vec![(mu[pair.row], 1.0), (a, -pair.dual_m)],
            0.0,
        );
    }

    // Leader blocks: every distribution network appends its variables, rows,
    // cones, and procurement-cost objective terms.
    let mut adn_indices = Vec::with_capacity(scenario.adns.len());
    for (ordinal, dn) in scenario.adns.iter().enumerate() {
        adn_indices.push(build_adn_into(&mut big, ordinal as u32, dn, cfg));
    }

    // Coupling: rewrite each pin row from `pk = constant` to
    // `pk − Σ pk_leader = 0`.
    for (&(_class, _bus, _t), &row) in &prog.index.pin_rows {
        big.eq_rows[row].rhs = 0.0;
    }
    use crate::keys::ExchangeClass::{Buy, SellCheap, SellExp};
    for (dn, ix) in scenario.adns.iter().zip(&adn_indices) {
        let bus = dn.attachment_bus;
        for t in 0..cfg.horizon as u32 {
            for (class, leader_var) in [
                (Buy, ix.pk_export[&t]),
                (SellCheap, ix.pk_import_cheap[&t]),
                (SellExp, ix.pk_import_exp[&t]),
            ] {
                let row = *prog.index.pin_rows.get(&(class, bus, t)).ok_or_else(|| {
                    CouplingError::AttachmentNotBoundary {
                        label: dn.label.clone(),
                        bus,
                    }
                })?;
                big.eq_rows[row].terms.push((leader_var, -1.0));
            }
        }
    }

    Ok(SingleLevelModel {
        model: big,
        tn_index: prog.index.clone(),
        adn_indices,
        lambda,
        mu,
        alpha,
        pairs: lin.pairs.clone(),
        tn_var_count,
        tn: scenario.tn.clone(),
        cfg: cfg.clone(),
    })
}

/// Solve the follower program alone, with its boundary exchanges pinned to
/// the values a full solution vector `x` carries. The rebuilt program has
/// the same inequality-row order as the embedded block, so its duals and
/// slacks line up with [`SingleLevelModel::pairs`] by row index.
pub fn follower_solve_at(
    single: &SingleLevelModel,
    x: &[f64],
    solver: &dyn crate::solver::ConicSubproblemSolver,
    settings: &crate::solver::SolveSettings,
) -> Result<crate::tn::TnSolveReport, crate::solver::SolveError> {
    let mut fixing = crate::tn::BoundaryFixing::new();
    for &(class, bus, t) in single.tn_index.pin_rows.keys() {
        fixing.insert((class, bus, t), x[single.tn_index.pk[&(class, bus, t)]]);
    }
    let fresh = crate::tn::build_tn_program(&single.tn, &single.cfg, Some(&fixing));
    crate::tn::solve_tn_direct(&fresh, solver, settings)
}

/// Choose the switch pattern a solved follower relaxation implies:
/// `α_r = 1` exactly where the multiplier is active.
///
/// With the true primal/dual pair this pattern makes the linearized system
/// feasible (binding rows with μ ≈ 0 are served by the slack side).
pub fn alpha_from_duals(ineq_duals: &[f64], tol: f64) -> Vec<f64> {
    ineq_duals
        .iter()
        .map(|&mu| if mu > tol { 1.0 } else { 0.0 })
        .collect()
}

/// Soundness projection: how far the follower block embedded in a
/// single-level point is from true follower optimality.
///
/// Reads the boundary exchanges off `x`, re-solves the follower program
/// directly with those exchanges pinned, and returns the relative gap
/// between the embedded follower cost (original objective evaluated on the
/// embedded primal block) and the independent optimum. A correct
/// first-order block keeps this at solver precision; an undersized dual
/// Big-M shows up here as a positive gap, because the cut-off multiplier
/// forces the embedded block to a non-optimal stationary pattern.
pub fn follower_optimality_gap(
    tn: &crate::net::TransmissionNetwork,
    cfg: &crate::net::ScenarioConfig,
    prog: &CanonicalConvexProgram,
    x: &[f64],
    solver: &dyn crate::solver::ConicSubproblemSolver,
    settings: &crate::solver::SolveSettings,
) -> Result<f64, crate::solver::SolveError> {
    let mut embedded = prog.model.obj_constant;
    for (v, var) in prog.model.vars.iter().enumerate() {
        embedded += var.quad * x[v] * x[v] + var.lin * x[v];
    }
    let mut fixing = crate::tn::BoundaryFixing::new();
    for &(class, bus, t) in prog.index.pin_rows.keys() {
        fixing.insert((class, bus, t), x[prog.index.pk[&(class, bus, t)]]);
    }
    let fresh = crate::tn::build_tn_program(tn, cfg, Some(&fixing));
    let direct = crate::tn::solve_tn_direct(&fresh, solver, settings)?;
    let best = direct.solution.objective;
    Ok((embedded - best) / best.abs().max(1.0))
}

// ---------------------------------------------------------------------------
// Audit against the transcribed reference conditions
// ---------------------------------------------------------------------------

/// Multiplier families of the follower program, named by the constraint
/// family that owns the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[allow(missing_docs)]
pub enum MultiplierFamily {
    BalanceInterior,
    BalanceBoundary,
    FlowDef,
    RefAngle,
    BoundaryPin,
    FlowUb,
    FlowLb,
    PgUb,
    PvUb,
    PoolCheap,
    PoolExp,
    BuyCap,
    VarLb,
}

impl fmt::Display for MultiplierFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MultiplierFamily::BalanceInterior => "balance",
            MultiplierFamily::BalanceBoundary => "balance_boundary",
            MultiplierFamily::FlowDef => "flow_def",
            MultiplierFamily::RefAngle => "ref_angle",
            MultiplierFamily::BoundaryPin => "boundary_pin",
            MultiplierFamily::FlowUb => "flow_ub",
            MultiplierFamily::FlowLb => "flow_lb",
            MultiplierFamily::PgUb => "pg_ub",
            MultiplierFamily::PvUb => "pv_ub",
            MultiplierFamily::PoolCheap => "pool_cheap",
            MultiplierFamily::PoolExp => "pool_exp",
            MultiplierFamily::BuyCap => "buy_cap",
            MultiplierFamily::VarLb => "var_lb",
        };
        f.write_str(s)
    }
}

fn family_of(key: &Key) -> Option<MultiplierFamily> {
    use MultiplierFamily as F;
    Some(match key {
        Key::TnBalanceInterior { .. } => F::BalanceInterior,
        Key::TnBalanceBoundary { .. } => F::BalanceBoundary,
        Key::TnFlowDef { .. } => F::FlowDef,
        Key::TnRefAngle { .. } => F::RefAngle,
        Key::TnBoundaryPin { .. } => F::BoundaryPin,
        Key::TnFlowUb { .. } => F::FlowUb,
        Key::TnFlowLb { .. } => F::FlowLb,
        Key::TnPgUb { .. } => F::PgUb,
        Key::TnPvUb { .. } => F::PvUb,
        Key::TnPoolCheap { .. } => F::PoolCheap,
        Key::TnPoolExp { .. } => F::PoolExp,
        Key::TnBuyCap { .. } => F::BuyCap,
        Key::TnVarLb { .. } => F::VarLb,
        _ => return None,
    })
}

/// Multiplier support the transcribed reference conditions assign to each
/// variable family. The reference writes the flow condition with both
/// balance multipliers on every line and the angle condition with the
/// reference-angle multiplier at every bus; the derived system carries each
/// only where the corresponding row exists.
fn transcribed_support(var_key: &Key) -> Option<&'static [MultiplierFamily]> {
    use MultiplierFamily as F;
    Some(match var_key {
        Key::TnPg { .. } => &[F::BalanceInterior, F::PgUb, F::PoolExp],
        Key::TnPv { .. } => &[F::BalanceInterior, F::PvUb, F::PoolCheap],
        Key::TnPkBuy { .. } => &[F::BalanceBoundary, F::BuyCap],
        Key::TnPkSellCheap { .. } => &[F::BalanceBoundary, F::PoolCheap],
        Key::TnPkSellExp { .. } => &[F::BalanceBoundary, F::PoolExp],
        Key::TnFlow { .. } => &[
            F::BalanceInterior,
            F::BalanceBoundary,
            F::FlowDef,
            F::FlowUb,
            F::FlowLb,
        ],
        Key::TnTheta { .. } => &[F::FlowDef, F::RefAngle],
        _ => return None,
    })
}

/// How a derived stationarity row compares against its transcribed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditClass {
    /// Multiplier support identical.
    ExactMatch,
    /// Derived row carries the transcribed multipliers plus only the known
    /// deliberate extras (nonnegativity rows, boundary pins).
    MatchModuloExtra,
    /// Support differs beyond the known extras.
    Mismatch,
}

/// Comparison record for one variable's stationarity row.
#[derive(Debug, Clone)]
pub struct AuditEntry {
    /// The variable.
    pub var: VarId,
    /// Its key.
    pub var_key: Key,
    /// Verdict.
    pub class: AuditClass,
    /// Families the transcription expects but the derivation lacks.
    pub missing: Vec<MultiplierFamily>,
    /// Families the derivation carries beyond the transcription.
    pub extras: Vec<MultiplierFamily>,
}

/// Full audit: one entry per follower variable, with counts per verdict.
#[derive(Debug, Clone)]
pub struct KktAuditReport {
    /// Per-variable comparisons, in variable order.
    pub entries: Vec<AuditEntry>,
    /// Count of [`AuditClass::ExactMatch`].
    pub exact: usize,
    /// Count of [`AuditClass::MatchModuloExtra`].
    pub modulo_extra: usize,
    /// Count of [`AuditClass::Mismatch`].
    pub mismatch: usize,
}

impl fmt::Display for KktAuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "stationarity audit: {} exact, {} modulo known extras, {} mismatched",
            self.exact, self.modulo_extra, self.mismatch
        )?;
        for e in self.entries.iter().filter(|e| e.class == AuditClass::Mismatch) {
            write!(f, "  {}:", e.var_key)?;
            if !e.missing.is_empty() {
                write!(f, " missing")?;
                for m in &e.missing {
                    write!(f, " {m}")?;
                }
            }
            if !e.extras.is_empty() {
                write!(f, " extra")?;
                for m in &e.extras {
                    write!(f, " {m}")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Compare every derived stationarity row against the transcribed reference
/// conditions by multiplier support.
///
/// Two classes of difference are expected and normal: the power variables'
/// tagged nonnegativity rows and the boundary pins both carry multipliers
/// the transcription omits (`MatchModuloExtra`). Genuine mismatches — a
/// transcribed multiplier the derivation never produces — are reported with
/// both sides; for this program family they occur exactly where the
/// transcription's uniform indexing promises a multiplier that has no row
/// (boundary-balance terms on interior-only lines, the reference-angle term
/// at non-reference buses).
pub fn audit_kkt(prog: &CanonicalConvexProgram, kkt: &KktSystem) -> KktAuditReport {
    const KNOWN_EXTRAS: [MultiplierFamily; 2] =
        [MultiplierFamily::VarLb, MultiplierFamily::BoundaryPin];

    let mut entries = Vec::with_capacity(kkt.stationarity.len());
    let (mut exact, mut modulo, mut mismatch) = (0usize, 0usize, 0usize);
    for srow in &kkt.stationarity {
        let Some(expected) = transcribed_support(&srow.var_key) else {
            continue;
        };
        let expected: BTreeSet<MultiplierFamily> = expected.iter().copied().collect();
        let mut derived: BTreeSet<MultiplierFamily> = BTreeSet::new();
        for &(r, c) in &srow.eq_terms {
            if c != 0.0 {
                if let Some(fam) = family_of(&prog.model.eq_rows[r].key) {
                    derived.insert(fam);
                }
            }
        }
        for &(r, c) in &srow.ineq_terms {
            if c != 0.0 {
                if let Some(fam) = family_of(&prog.model.ineq_rows[r].key) {
                    derived.insert(fam);
                }
            }
        }
        let missing: Vec<_> = expected.difference(&derived).copied().collect();
        let extras: Vec<_> = derived.difference(&expected).copied().collect();
        let class = if missing.is_empty() && extras.is_empty() {
            exact += 1;
            AuditClass::ExactMatch
        } else if missing.is_empty() && extras.iter().all(|e| KNOWN_EXTRAS.contains(e)) {
            modulo += 1;
            AuditClass::MatchModuloExtra
        } else {
            mismatch += 1;
            AuditClass::Mismatch
        };
        entries.push(AuditEntry {
            var: srow.var,
            var_key: srow.var_key,
            class,
            missing,
            extras,
        });
    }
    KktAuditReport {
        entries,
        exact,
        modulo_extra: modulo,
        mismatch,
    }
}
