//! Day-ahead transmission dispatch as a canonical convex program.
//!
//! The transmission operator schedules thermal units and utility PV over the
//! horizon under a DC power-flow model, optionally trading three blocks of
//! power with each attached distribution network at its boundary bus:
//! a purchase block (the ADN exports), a PV-backed sale block (cheap import
//! for the ADN, limited by the pooled PV output), and a thermal-backed sale
//! block (expensive import, limited by the pooled thermal output).
//!
//! # Canonical form
//!
//! The program is assembled so that its first-order conditions can be derived
//! mechanically from the matrices alone:
//!
//! * every variable is declared as a free box (`[-∞, ∞]`) — nonnegativity of
//!   the power variables is a *tagged inequality row* ([`Key::TnVarLb`]), so
//!   every restriction that can bind at the optimum owns a named multiplier;
//! * equality rows carry the balance / flow-definition / reference-angle /
//!   boundary-pin tags, inequality rows the limit tags; the tag set is
//!   exhaustive and unique per `(element, period)`;
//! * the flow definition keeps the literal form `x·p − θ_from + θ_to = 0`
//!   with `p` in MW and `x` in per-unit, which folds the MVA base into the
//!   angle variables; flow distribution depends only on reactance ratios, so
//!   the dispatch solution is unchanged while every row stays transcribable.
//!
//! Boundary handling: boundary buses carry no local demand or generation
//! (validated upstream); their balance rows contain exchange terms only. When
//! a [`BoundaryFixing`] is supplied, every exchange variable is pinned by an
//! equality row ([`Key::TnBoundaryPin`]) — the pins' multipliers are exactly
//! the sensitivities the bilevel reduction needs, and the single-level
//! assembler later rewrites those rows to reference the leader's variables
//! instead of constants. Without a fixing the operator trades freely within
//! the pools and caps.

use std::collections::BTreeMap;

use crate::keys::{ExchangeClass, Key};
use crate::model::{eval, ConicModel, RowId, VarId, INF};
use crate::net::{ScenarioConfig, TransmissionNetwork};
use crate::solver::{ConicSubproblemSolver, SolveError, SolveSettings, Solution};

/// Requested values for every boundary exchange variable, keyed by
/// `(class, boundary bus, period)`. Missing entries pin to zero: supplying a
/// fixing always pins the *entire* exchange point.
pub type BoundaryFixing = BTreeMap<(ExchangeClass, u32, u32), f64>;

/// Variable and row lookup tables for a built transmission program.
///
/// All maps are keyed by external bus ids / line indices and 0-based periods;
/// they are the only sanctioned way to address the program's columns and
/// rows from outside this module.
#[derive(Debug, Clone, Default)]
pub struct TnIndex {
    /// Periods in the program.
    pub horizon: u32,
    /// Thermal output variables, `(bus, t)`.
    pub pg: BTreeMap<(u32, u32), VarId>,
    /// Utility PV output variables, `(bus, t)`.
    pub pv: BTreeMap<(u32, u32), VarId>,
    /// Boundary exchange variables, `(class, bus, t)`.
    pub pk: BTreeMap<(ExchangeClass, u32, u32), VarId>,
    /// Bus angle variables, `(bus, t)`.
    pub theta: BTreeMap<(u32, u32), VarId>,
    /// Line flow variables, `(line index, t)`.
    pub flow: BTreeMap<(u32, u32), VarId>,
    /// Bus balance rows (interior and boundary alike), `(bus, t)`.
    pub balance_rows: BTreeMap<(u32, u32), RowId>,
    /// Boundary pin rows, `(class, bus, t)`; empty when built without fixing.
    pub pin_rows: BTreeMap<(ExchangeClass, u32, u32), RowId>,
}

/// A transmission program in canonical convex form plus its index.
#[derive(Debug, Clone)]
pub struct CanonicalConvexProgram {
    /// The algebraic model (quadratic objective, equality and inequality
    /// rows, no cones, no finite variable bounds).
    pub model: ConicModel,
    /// Lookup tables into the model.
    pub index: TnIndex,
}

impl CanonicalConvexProgram {
    /// Thermal output at `(bus, t)`; zero when the bus has no unit.
    pub fn pg(&self, sol: &Solution, bus: u32, t: u32) -> f64 {
        self.index.pg.get(&(bus, t)).map_or(0.0, |&v| sol.x[v])
    }

    /// PV output at `(bus, t)`; zero when the bus has no plant.
    pub fn pv(&self, sol: &Solution, bus: u32, t: u32) -> f64 {
        self.index.pv.get(&(bus, t)).map_or(0.0, |&v| sol.x[v])
    }

    /// Exchange block value at `(class, bus, t)`; zero when absent.
    pub fn pk(&self, sol: &Solution, class: ExchangeClass, bus: u32, t: u32) -> f64 {
        self.index.pk.get(&(class, bus, t)).map_or(0.0, |&v| sol.x[v])
    }

    /// Signed flow on `line` at `t` (oriented from the line's first
    /// endpoint).
    pub fn flow(&self, sol: &Solution, line: u32, t: u32) -> f64 {
        self.index.flow.get(&(line, t)).map_or(0.0, |&v| sol.x[v])
    }

    /// Nodal marginal cost at `(bus, t)`: the multiplier of the bus's
    /// balance row. `None` for unknown buses.
    pub fn marginal_cost_at(&self, sol: &Solution, bus: u32, t: u32) -> Option<f64> {
        self.index
            .balance_rows
            .get(&(bus, t))
            .map(|&r| sol.eq_duals[r])
    }

    /// Total thermal output in period `t`.
    pub fn total_pg(&self, sol: &Solution, t: u32) -> f64 {
        self.index
            .pg
            .iter()
            .filter(|((_, tt), _)| *tt == t)
            .map(|(_, &v)| sol.x[v])
            .sum()
    }

    /// Total PV output in period `t`.
    pub fn total_pv(&self, sol: &Solution, t: u32) -> f64 {
        self.index
            .pv
            .iter()
            .filter(|((_, tt), _)| *tt == t)
            .map(|(_, &v)| sol.x[v])
            .sum()
    }
}

/// Build the transmission program for `tn` over `cfg.horizon` periods.
///
/// With `fixing = Some(values)` every exchange variable is pinned by an
/// equality row (missing map entries pin to zero); with `None` the exchanges
/// are free within their pools and caps.
pub fn build_tn_program(
    tn: &TransmissionNetwork,
    cfg: &ScenarioConfig,
    fixing: Option<&BoundaryFixing>,
) -> CanonicalConvexProgram {
    let horizon = cfg.horizon as u32;
    let mut m = ConicModel::new();
    let mut ix = TnIndex {
        horizon,
        ..TnIndex::default()
    };

    // ---- variables ------------------------------------------------------
    // Declaration order: pg, pv, pk, theta, flow — each sweeping buses/lines
    // in case order, then periods. Power variables are free boxes; their
    // nonnegativity rows are added after all variables exist.
    let mut nonneg: Vec<VarId> = Vec::new();

    for b in &tn.buses {
        let has_unit = b.pg_max.iter().any(|&c| c > 0.0);
        if !has_unit {
            continue;
        }
        for t in 0..horizon {
            let v = m.add_var(Key::TnPg { bus: b.id, t }, -INF, INF);
            m.add_cost(v, b.gen_cost.a, b.gen_cost.b);
            m.obj_constant += b.gen_cost.c;
            ix.pg.insert((b.id, t), v);
            nonneg.push(v);
        }
    }
    for b in &tn.buses {
        if b.pv_capacity_ratio <= 0.0 {
            continue;
        }
        for t in 0..horizon {
            let v = m.add_var(Key::TnPv { bus: b.id, t }, -INF, INF);
            m.add_cost(v, 0.0, b.pv_marginal_cost);
            ix.pv.insert((b.id, t), v);
            nonneg.push(v);
        }
    }
    for &bus in &tn.boundary_bus_ids {
        for t in 0..horizon {
            for class in [
                ExchangeClass::Buy,
                ExchangeClass::SellCheap,
                ExchangeClass::SellExp,
            ] {
                let key = match class {
                    ExchangeClass::Buy => Key::TnPkBuy { bus, t },
                    ExchangeClass::SellCheap => Key::TnPkSellCheap { bus, t },
                    ExchangeClass::SellExp => Key::TnPkSellExp { bus, t },
                };
                let v = m.add_var(key, -INF, INF);
                ix.pk.insert((class, bus, t), v);
                nonneg.push(v);
            }
        }
    }
    for b in &tn.buses {
        for t in 0..horizon {
            let v = m.add_var(Key::TnTheta { bus: b.id, t }, -INF, INF);
            ix.theta.insert((b.id, t), v);
        }
    }
    for (l, _) in tn.lines.iter().enumerate() {
        for t in 0..horizon {
            let v = m.add_var(
                Key::TnFlow {
                    line: l as u32,
                    t,
                },
                -INF,
                INF,
            );
            ix.flow.insert((l as u32, t), v);
        }
    }

    // ---- equality rows ---------------------------------------------------
    // Bus balance. Interior: Σ(out) − Σ(in) flows − pg − pv = −demand.
    // Boundary: Σ(out) − Σ(in) flows − pk_buy + pk_sell_cheap + pk_sell_exp = 0.
    for b in &tn.buses {
        for t in 0..horizon {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            for (l, line) in tn.lines.iter().enumerate() {
                let f = ix.flow[&(l as u32, t)];
                if line.from_bus == b.id {
                    terms.push((f, 1.0));
                } else if line.to_bus == b.id {
                    terms.push((f, -1.0));
                }
            }
            let row = if tn.is_boundary(b.id) {
                terms.push((ix.pk[&(ExchangeClass::Buy, b.id, t)], -1.0));
                terms.push((ix.pk[&(ExchangeClass::SellCheap, b.id, t)], 1.0));
                terms.push((ix.pk[&(ExchangeClass::SellExp, b.id, t)], 1.0));
                m.add_eq(Key::TnBalanceBoundary { bus: b.id, t }, terms, 0.0)
            } else {
                if let Some(&pg) = ix.pg.get(&(b.id, t)) {
                    terms.push((pg, -1.0));
                }
                if let Some(&pv) = ix.pv.get(&(b.id, t)) {
                    terms.push((pv, -1.0));
                }
                m.add_eq(
                    Key::TnBalanceInterior { bus: b.id, t },
                    terms,
                    -b.demand_profile[t as usize],
                )
            };
            ix.balance_rows.insert((b.id, t), row);
        }
    }
    // Flow definition x·p − θ_from + θ_to = 0.
    for (l, line) in tn.lines.iter().enumerate() {
        for t in 0..horizon {
            m.add_eq(
                Key::TnFlowDef {
                    line: l as u32,
                    t,
                },
                vec![
                    (ix.flow[&(l as u32, t)], line.reactance),
                    (ix.theta[&(line.from_bus, t)], -1.0),
                    (ix.theta[&(line.to_bus, t)], 1.0),
                ],
                0.0,
            );
        }
    }
    // Reference angles.
    for &bus in &tn.reference_bus_ids {
        for t in 0..horizon {
            m.add_eq(
                Key::TnRefAngle { bus, t },
                vec![(ix.theta[&(bus, t)], 1.0)],
                0.0,
            );
        }
    }
    // Boundary pins.
    if let Some(values) = fixing {
        for &bus in &tn.boundary_bus_ids {
            for t in 0..horizon {
                for class in [
                    ExchangeClass::Buy,
                    ExchangeClass::SellCheap,
                    ExchangeClass::SellExp,
                ] {
                    let target = values.get(&(class, bus, t)).copied().unwrap_or(0.0);
                    let row = m.add_eq(
                        Key::TnBoundaryPin { class, bus, t },
                        vec![(ix.pk[&(class, bus, t)], 1.0)],
                        target,
                    );
                    ix.pin_rows.insert((class, bus, t), row);
                }
            }
        }
    }

    // ---- inequality rows -------------------------------------------------
    // Flow limits ±p ≤ s_max.
    for (l, line) in tn.lines.iter().enumerate() {
        for t in 0..horizon {
            let f = ix.flow[&(l as u32, t)];
            m.add_ineq(
                Key::TnFlowUb {
                    line: l as u32,
                    t,
                },
                vec![(f, 1.0)],
                line.flow_limit,
            );
            m.add_ineq(
                Key::TnFlowLb {
                    line: l as u32,
                    t,
                },
                vec![(f, -1.0)],
                line.flow_limit,
            );
        }
    }
    // Output caps.
    for b in &tn.buses {
        for t in 0..horizon {
            if let Some(&pg) = ix.pg.get(&(b.id, t)) {
                m.add_ineq(
                    Key::TnPgUb { bus: b.id, t },
                    vec![(pg, 1.0)],
                    b.pg_max[t as usize],
                );
            }
            if let Some(&pv) = ix.pv.get(&(b.id, t)) {
                m.add_ineq(
                    Key::TnPvUb { bus: b.id, t },
                    vec![(pv, 1.0)],
                    b.pv_capacity_ratio * cfg.pv_avail_tn[t as usize],
                );
            }
        }
    }
    // Pooled sale caps: Σ sells_cheap ≤ Σ pv, Σ sells_exp ≤ Σ pg.
    for t in 0..horizon {
        let mut cheap: Vec<(VarId, f64)> = tn
            .boundary_bus_ids
            .iter()
            .map(|&bus| (ix.pk[&(ExchangeClass::SellCheap, bus, t)], 1.0))
            .collect();
        cheap.extend(
            ix.pv
                .iter()
                .filter(|((_, tt), _)| *tt == t)
                .map(|(_, &v)| (v, -1.0)),
        );
        m.add_ineq(Key::TnPoolCheap { t }, cheap, 0.0);

        let mut exp: Vec<(VarId, f64)> = tn
            .boundary_bus_ids
            .iter()
            .map(|&bus| (ix.pk[&(ExchangeClass::SellExp, bus, t)], 1.0))
            .collect();
        exp.extend(
            ix.pg
                .iter()
                .filter(|((_, tt), _)| *tt == t)
                .map(|(_, &v)| (v, -1.0)),
        );
        m.add_ineq(Key::TnPoolExp { t }, exp, 0.0);
    }
    // Per-bus purchase caps.
    for &bus in &tn.boundary_bus_ids {
        let cap = tn.bus(bus).map_or(0.0, |b| b.kt_bg_limit);
        for t in 0..horizon {
            m.add_ineq(
                Key::TnBuyCap { bus, t },
                vec![(ix.pk[&(ExchangeClass::Buy, bus, t)], 1.0)],
                cap,
            );
        }
    }
    // Nonnegativity of the power variables as tagged rows.
    for v in nonneg {
        m.add_ineq(Key::TnVarLb { var: v as u32 }, vec![(v, -1.0)], 0.0);
    }

    CanonicalConvexProgram { model: m, index: ix }
}

/// Result of a direct transmission solve with its first-order certificates.
#[derive(Debug, Clone)]
pub struct TnSolveReport {
    /// The solver's point and multipliers.
    pub solution: Solution,
    /// ∞-norm of `∇f + Aᵀλ + Gᵀμ` at the returned point.
    pub stationarity_inf: f64,
    /// Largest complementary-slackness violation over inequality rows.
    pub complementarity_inf: f64,
}

/// Solve the transmission program directly and certify the returned point's
/// first-order conditions from the matrices (nothing is taken from solver
/// internals).
pub fn solve_tn_direct(
    prog: &CanonicalConvexProgram,
    solver: &dyn ConicSubproblemSolver,
    settings: &SolveSettings,
) -> Result<TnSolveReport, SolveError> {
    let solution = solver.solve(&prog.model, &[], settings)?;
    let stationarity_inf = eval::stationarity_residual(
        &prog.model,
        &solution.x,
        &solution.eq_duals,
        &solution.ineq_duals,
    );
    let complementarity_inf =
        eval::complementarity_residual(&prog.model, &solution.x, &solution.ineq_duals);
    Ok(TnSolveReport {
        solution,
        stationarity_inf,
        complementarity_inf,
    })
}
