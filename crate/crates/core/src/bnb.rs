//! Branch-and-bound over the binaries of a mixed-integer conic model.
//!
//! The search owns no numerics: every node is one continuous solve of the
//! *same* immutable model with per-variable bound overrides (binaries fixed
//! to 0 or 1), delegated to a [`ConicSubproblemSolver`]. The contribution is
//! faithful bookkeeping, not solver competitiveness — no cutting planes, no
//! heuristic machinery beyond plunging and round-and-polish repair.
//!
//! * **Presolve** ([`presolve_fix`]) fixes binaries that interval propagation
//!   proves: complementarity switches whose row can never bind (or can only
//!   bind), and any binary whose 0 or 1 value makes some row interval-
//!   infeasible (battery gates of absent devices, trade roles of agents that
//!   can never carry surplus).
//! * **Search** is best-bound with depth-first plunging until the first
//!   incumbent. Branching picks the most fractional free binary, ties broken
//!   by lowest variable id; complementarity switches are branched last, since
//!   they follow the continuous equilibrium rather than drive it. Fathoming
//!   compares a node's relaxation bound against the incumbent minus the
//!   configured gap.
//! * **Incumbents** are never trusted from the relaxation: the rounded
//!   assignment is re-solved with all binaries fixed (polish) and the result
//!   replayed through the independent constraint evaluator
//!   ([`crate::model::eval::evaluate`]); only a clean replay is accepted.
//!   On bilevel embeddings the search also *repairs* relaxed points into
//!   candidates: battery/trade binaries are rounded from the physics
//!   (charge vs discharge, surplus vs deficit), and the switch block is
//!   completed by re-solving the follower alone at the candidate exchange
//!   profile and closing switches exactly where its multipliers are active.
//! * **Determinism**: in deterministic mode nodes are processed one at a
//!   time in a fixed order, so two runs produce byte-identical node logs.
//!   Parallel mode evaluates node batches concurrently but reduces results
//!   in popped order, which keeps runs reproducible given a deterministic
//!   subproblem solver; the tree may differ from the sequential one.
//! * **Oracle**: [`brute_force_enumerate`] solves every assignment of the
//!   free binaries and returns the exact optimum; micro-instance tests hold
//!   the search to it.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::Instant;

use thiserror::Error;

use crate::keys::Key;
use crate::kkt::{follower_solve_at, implied_bounds_from, SingleLevelModel};
use crate::model::{eval, ConicModel, VarId};
use crate::par::{self, ExecMode};
use crate::solver::{ConicSubproblemSolver, SolveError, SolveSettings, Solution};

// ---------------------------------------------------------------------------
// Options / report types
// ---------------------------------------------------------------------------

/// Search limits and tolerances.
#[derive(Debug, Clone)]
pub struct BnbOptions {
    /// Terminate when `(incumbent − bound) / max(1, |incumbent|)` falls to
    /// this value.
    pub gap_rel: f64,
    /// Absolute companion to `gap_rel`.
    pub gap_abs: f64,
    /// Max violation accepted from the independent evaluator when an
    /// incumbent candidate is replayed.
    pub feas_tol: f64,
    /// Distance from 0/1 within which a relaxed binary counts as integral.
    pub int_tol: f64,
    /// Node budget.
    pub node_limit: usize,
    /// Wall-clock budget in seconds (0 disables).
    pub time_limit: f64,
    /// Process nodes strictly one at a time in a fixed order (required for
    /// byte-identical node logs).
    pub deterministic: bool,
    /// Parallel or sequential node batches when not deterministic.
    pub exec: ExecMode,
    /// Per-node continuous solve settings.
    pub solve: SolveSettings,
    /// Try rounding-based repair of the root relaxation before branching
    /// (off forces the tree to be explored, which some tests rely on).
    pub root_repair: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            gap_rel: 1e-5,
            gap_abs: 1e-8,
            feas_tol: 1e-6,
            int_tol: 1e-6,
            node_limit: 50_000,
            time_limit: 0.0,
            deterministic: true,
            exec: ExecMode::default(),
            solve: SolveSettings::default(),
            root_repair: true,
        }
    }
}

/// Ways the search can end without an incumbent.
#[derive(Debug, Error)]
pub enum BnbError {
    /// The root relaxation (or every leaf) is infeasible.
    #[error("no feasible point exists: {0}")]
    Infeasible(String),
    /// A limit hit before any incumbent was found.
    #[error("limit reached after {nodes} nodes without an incumbent (best bound {best_bound})")]
    NoIncumbent {
        /// Nodes processed.
        nodes: usize,
        /// Best relaxation bound seen.
        best_bound: f64,
    },
    /// The continuous engine failed on a subproblem.
    #[error("subproblem solver failed: {0}")]
    Solver(String),
    /// Enumeration was asked to scan more binaries than its cap.
    #[error("{count} free binaries exceed the enumeration cap {cap}")]
    TooManyBinaries {
        /// Free binaries in the model.
        count: usize,
        /// Configured cap.
        cap: usize,
    },
}

/// How a processed node ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    /// Relaxation solved fractional; two children created.
    Branched,
    /// Relaxation integral; incumbent candidate extracted.
    Integral,
    /// Relaxation bound at or above the incumbent cutoff.
    Fathomed,
    /// Relaxation infeasible.
    Infeasible,
}

impl NodeStatus {
    fn word(self) -> &'static str {
        match self {
            NodeStatus::Branched => "branched",
            NodeStatus::Integral => "integral",
            NodeStatus::Fathomed => "fathomed",
            NodeStatus::Infeasible => "infeasible",
        }
    }
}

/// One processed node, as recorded in the search log.
#[derive(Debug, Clone)]
pub struct BnbNodeRecord {
    /// Node id (creation order; root is 0).
    pub id: usize,
    /// Parent node id (`None` for the root).
    pub parent: Option<usize>,
    /// Depth in the tree (root 0).
    pub depth: u32,
    /// The one binary fixing this node adds to its parent's set.
    pub fixing_delta: Option<(Key, u8)>,
    /// Relaxation objective (`+inf` for infeasible nodes).
    pub bound: f64,
    /// Outcome.
    pub status: NodeStatus,
    /// Variable branched on, when `status` is `Branched`.
    pub branch_var: Option<Key>,
}

/// Why the search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnbStatus {
    /// Gap closed to tolerance (or the tree was exhausted).
    Optimal,
    /// Node or time budget hit; the incumbent and gap are still valid.
    LimitReached,
}

/// Search outcome: incumbent, bound, gap, and the node log.
#[derive(Debug, Clone)]
pub struct BnbReport {
    /// Termination cause.
    pub status: BnbStatus,
    /// Incumbent objective.
    pub objective: f64,
    /// Incumbent point (full model variable order).
    pub x: Vec<f64>,
    /// Global lower bound at termination.
    pub best_bound: f64,
    /// `(objective − best_bound) / max(1, |objective|)`, clamped at 0.
    pub gap: f64,
    /// Nodes processed (including the root).
    pub nodes: usize,
    /// Wall-clock seconds for the whole search.
    pub wall_seconds: f64,
    /// Binaries fixed before search.
    pub presolve_fixed: usize,
    /// Per-node log in processing order.
    pub node_records: Vec<BnbNodeRecord>,
}

impl BnbReport {
    /// The node log as line-delimited structured text:
    /// `node <id> parent <id|-> fix <key>=<v>|- bound <val|inf> status <word> [branch <key>]`.
    pub fn node_log_text(&self) -> String {
        let mut out = String::new();
        for r in &self.node_records {
            out.push_str(&format!(
                "node {} parent {} fix {} bound {} status {}",
                r.id,
                r.parent.map_or("-".into(), |p| p.to_string()),
                r.fixing_delta
                    .as_ref()
                    .map_or("-".into(), |(k, v)| format!("{k}={v}")),
                if r.bound.is_finite() {
                    format!("{:.9e}", r.bound)
                } else {
                    "inf".into()
                },
                r.status.word(),
            ));
            if let Some(k) = &r.branch_var {
                out.push_str(&format!(" branch {k}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Render a solution as `variable-name value` lines in variable order.
pub fn solution_text(model: &ConicModel, x: &[f64]) -> String {
    let mut out = String::new();
    for (v, def) in model.vars.iter().enumerate() {
        out.push_str(&format!("{} {}\n", def.key, x[v]));
    }
    out
}

// ---------------------------------------------------------------------------
// Presolve
// ---------------------------------------------------------------------------

/// What presolve proved, and the binary fixings it emits.
#[derive(Debug, Clone)]
pub struct PresolveReport {
    /// Sorted `(var, v, v)` bound overrides fixing the proven binaries.
    pub overrides: Vec<(VarId, f64, f64)>,
    /// Complementarity switches fixed to 0 (row can never bind).
    pub switches_never_binding: usize,
    /// Complementarity switches fixed to 1 (row can only bind).
    pub switches_always_binding: usize,
    /// Binaries of any kind fixed because the opposite value makes a row
    /// interval-infeasible.
    pub probed: usize,
}

/// Interval-based binary fixing on a general model (no complementarity
/// structure assumed): a binary is fixed when one of its values makes some
/// row infeasible against the propagated variable bounds.
pub fn probe_binaries(model: &ConicModel, fixed: &mut BTreeMap<VarId, f64>) -> usize {
    let mut n_fixed = 0;
    for _round in 0..2 {
        let lo: Vec<f64> = model
            .vars
            .iter()
            .enumerate()
            .map(|(v, d)| fixed.get(&v).copied().unwrap_or(d.lb))
            .collect();
        let hi: Vec<f64> = model
            .vars
            .iter()
            .enumerate()
            .map(|(v, d)| fixed.get(&v).copied().unwrap_or(d.ub))
            .collect();
        let bounds = implied_bounds_from(model, lo, hi);

        let mut changed = false;
        let rows = model
            .ineq_rows
            .iter()
            .map(|r| (r, false))
            .chain(model.eq_rows.iter().map(|r| (r, true)));
        for (row, is_eq) in rows {
            let mut min_act = 0.0;
            let mut max_act = 0.0;
            for &(v, c) in &row.terms {
                let (l, h) = bounds[v];
                min_act += if c > 0.0 { c * l } else { c * h };
                max_act += if c > 0.0 { c * h } else { c * l };
            }
            for &(v, c) in &row.terms {
                if !model.vars[v].binary || fixed.contains_key(&v) || c == 0.0 {
                    continue;
                }
                let (l, h) = bounds[v];
                if l > 0.5 || h < 0.5 {
                    continue; // already pinned by propagation
                }
                // The row's activity extremes *excluding* this binary's own
                // contribution (propagation may have tightened its box, so
                // the contribution is not simply zero).
                let min_rest = min_act - if c > 0.0 { c * l } else { c * h };
                let max_rest = max_act - if c > 0.0 { c * h } else { c * l };
                let margin = 1e-7 * (1.0 + row.rhs.abs() + c.abs());
                for v01 in [0.0, 1.0] {
                    let too_high =
                        min_rest.is_finite() && min_rest + c * v01 > row.rhs + margin;
                    let too_low = is_eq
                        && max_rest.is_finite()
                        && max_rest + c * v01 < row.rhs - margin;
                    if too_high || too_low {
                        fixed.insert(v, 1.0 - v01);
                        n_fixed += 1;
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    n_fixed
}

/// Fix the binaries of an assembled single-level model that interval
/// reasoning decides: switches of never-binding rows to 0, switches of
/// always-binding rows to 1, and any binary (device gate, trade role,
/// switch) whose opposite value is interval-infeasible.
pub fn presolve_fix(single: &SingleLevelModel, _feas_tol: f64) -> PresolveReport {
    let model = &single.model;
    let bounds = implied_bounds_from(
        model,
        model.vars.iter().map(|v| v.lb).collect(),
        model.vars.iter().map(|v| v.ub).collect(),
    );

    let mut fixed: BTreeMap<VarId, f64> = BTreeMap::new();
    let (mut never, mut always) = (0usize, 0usize);
    for (i, pair) in single.pairs.iter().enumerate() {
        // The follower's inequality rows keep their positions when the
        // single-level model is assembled, so `pair.row` indexes both.
        let row = &model.ineq_rows[pair.row];
        let mut min_act = 0.0;
        let mut max_act = 0.0;
        for &(v, c) in &row.terms {
            let (l, h) = bounds[v];
            min_act += if c > 0.0 { c * l } else { c * h };
            max_act += if c > 0.0 { c * h } else { c * l };
        }
        let margin = 1e-9 * (1.0 + row.rhs.abs());
        if max_act.is_finite() && max_act < row.rhs - 1e-7 * (1.0 + row.rhs.abs()) {
            fixed.insert(single.alpha[i], 0.0);
            never += 1;
        } else if min_act.is_finite() && min_act >= row.rhs - margin {
            fixed.insert(single.alpha[i], 1.0);
            always += 1;
        }
    }

    let probed = probe_binaries(model, &mut fixed);

    PresolveReport {
        overrides: fixed.into_iter().map(|(v, b)| (v, b, b)).collect(),
        switches_never_binding: never,
        switches_always_binding: always,
        probed,
    }
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

/// Heap entry ordered by (bound, id) ascending.
struct Open {
    bound: f64,
    id: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert for best(lowest)-bound-first.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Tree node: parent link plus the single binary fixing it adds.
struct NodeArena {
    parent: Vec<usize>,
    depth: Vec<u32>,
    fix_var: Vec<VarId>,
    fix_val: Vec<f64>,
    inherited: Vec<f64>,
}

const NO_PARENT: usize = usize::MAX;

impl NodeArena {
    fn new() -> Self {
        NodeArena {
            parent: vec![NO_PARENT],
            depth: vec![0],
            fix_var: vec![usize::MAX],
            fix_val: vec![0.0],
            inherited: vec![f64::NEG_INFINITY],
        }
    }

    fn push(&mut self, parent: usize, var: VarId, val: f64, bound: f64) -> usize {
        self.parent.push(parent);
        self.depth.push(self.depth[parent] + 1);
        self.fix_var.push(var);
        self.fix_val.push(val);
        self.inherited.push(bound);
        self.parent.len() - 1
    }

    /// All binary fixings on the path from the root to `id`.
    fn chain(&self, mut id: usize) -> BTreeMap<VarId, f64> {
        let mut out = BTreeMap::new();
        while self.parent[id] != NO_PARENT {
            out.insert(self.fix_var[id], self.fix_val[id]);
            id = self.parent[id];
        }
        out
    }
}

/// Merge base overrides with a node's chain into the sorted unique list the
/// solver contract requires.
fn merged_overrides(
    base: &[(VarId, f64, f64)],
    chain: &BTreeMap<VarId, f64>,
) -> Vec<(VarId, f64, f64)> {
    let mut map: BTreeMap<VarId, (f64, f64)> =
        base.iter().map(|&(v, l, h)| (v, (l, h))).collect();
    for (&v, &b) in chain {
        map.insert(v, (b, b));
    }
    map.into_iter().map(|(v, (l, h))| (v, l, h)).collect()
}

struct SearchCtx<'a> {
    model: &'a ConicModel,
    solver: &'a dyn ConicSubproblemSolver,
    opts: &'a BnbOptions,
    base: Vec<(VarId, f64, f64)>,
    /// Binaries the search may branch on (not fixed by presolve).
    free: Vec<VarId>,
    /// Complementarity switches among the binaries; they follow the
    /// continuous equilibrium rather than drive it, so branching prefers
    /// the other binaries and switch blocks are completed by repair.
    alpha_ids: BTreeSet<VarId>,
    /// Structure of the assembled bilevel model, when the caller has one;
    /// unlocks the follower-resolve repair.
    single: Option<&'a SingleLevelModel>,
    arena: NodeArena,
    records: Vec<BnbNodeRecord>,
    incumbent: Option<(f64, Vec<f64>)>,
    /// Signatures of binary assignments already polished, so repeated
    /// repair attempts across nodes never pay for the same solve twice.
    tried: BTreeSet<Vec<u8>>,
    nodes: usize,
    started: Instant,
}

impl SearchCtx<'_> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.opts.gap_abs.max(self.opts.gap_rel * obj.abs().max(1.0)),
            None => f64::INFINITY,
        }
    }

    fn out_of_budget(&self) -> bool {
        self.nodes >= self.opts.node_limit
            || (self.opts.time_limit > 0.0
                && self.started.elapsed().as_secs_f64() >= self.opts.time_limit)
    }

    fn solve_node(&self, id: usize) -> Result<Solution, SolveError> {
        let overrides = merged_overrides(&self.base, &self.arena.chain(id));
        self.solver.solve(self.model, &overrides, &self.opts.solve)
    }

    fn record(&mut self, id: usize, bound: f64, status: NodeStatus, branch: Option<Key>) {
        let delta = if self.arena.parent[id] == NO_PARENT {
            None
        } else {
            Some((
                self.model.vars[self.arena.fix_var[id]].key,
                self.arena.fix_val[id] as u8,
            ))
        };
        self.records.push(BnbNodeRecord {
            id,
            parent: (self.arena.parent[id] != NO_PARENT).then(|| self.arena.parent[id]),
            depth: self.arena.depth[id],
            fixing_delta: delta,
            bound,
            status,
            branch_var: branch,
        });
    }

    /// Round every binary from `x`, fix, polish-solve, replay through the
    /// independent evaluator; adopt as incumbent when clean and better.
    /// `pattern` overrides the rounding for selected binaries.
    fn try_candidate(&mut self, x: &[f64], pattern: &BTreeMap<VarId, f64>) -> bool {
        let mut all: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, l, h) in &self.base {
            if self.model.vars[v].binary && l == h {
                all.insert(v, l);
            }
        }
        for &v in &self.free {
            let r = pattern
                .get(&v)
                .copied()
                .unwrap_or_else(|| if x[v] >= 0.5 { 1.0 } else { 0.0 });
            all.insert(v, r);
        }
        let sig: Vec<u8> = self.free.iter().map(|&v| all[&v] as u8).collect();
        if !self.tried.insert(sig) {
            return false;
        }
        let overrides = merged_overrides(&self.base, &all);
        let Ok(sol) = self.solver.solve(self.model, &overrides, &self.opts.solve) else {
            return false;
        };
        if !sol.is_usable() {
            return false;
        }
        self.accept_if_better(sol.objective, sol.x, &overrides)
    }

    fn accept_if_better(
        &mut self,
        objective: f64,
        x: Vec<f64>,
        overrides: &[(VarId, f64, f64)],
    ) -> bool {
        if let Some((best, _)) = &self.incumbent {
            if objective >= *best - 1e-12 {
                return false;
            }
        }
        let rep = eval::evaluate(self.model, &x, overrides);
        if rep.worst_violation() > self.opts.feas_tol || !rep.is_integer_feasible(self.opts.int_tol)
        {
            return false;
        }
        self.incumbent = Some((objective, x));
        true
    }

    /// Battery-mode and trade-role binaries rounded from the physics of
    /// `x` — charge vs discharge magnitude, surplus vs deficit magnitude —
    /// rather than from the relaxed binary itself, which a relaxation can
    /// leave anywhere between the gates it appears in.
    fn physical_rounding(&self, x: &[f64]) -> BTreeMap<VarId, f64> {
        let mut out = BTreeMap::new();
        let Some(s) = self.single else { return out };
        for adn in &s.adn_indices {
            for (key, &w) in &adn.w_mode {
                let charging = adn.charge.get(key).map_or(0.0, |&v| x[v]);
                let discharging = adn.discharge.get(key).map_or(0.0, |&v| x[v]);
                out.insert(w, if charging > discharging { 1.0 } else { 0.0 });
            }
            for (key, &y) in &adn.y_role {
                let surplus = adn.surplus.get(key).map_or(0.0, |&v| x[v]);
                let deficit = adn.deficit.get(key).map_or(0.0, |&v| x[v]);
                out.insert(y, if surplus > deficit { 1.0 } else { 0.0 });
            }
        }
        out
    }

    /// Switch pattern read off an independent follower solve at the exchange
    /// profile embedded in `x`: a switch closes exactly where the follower's
    /// own multiplier is active, so the pattern is consistent with *some*
    /// true equilibrium by construction. Physical rounding fills in the
    /// distribution-side binaries.
    fn follower_support(&self, x: &[f64]) -> Option<BTreeMap<VarId, f64>> {
        let s = self.single?;
        let report = follower_solve_at(s, x, self.solver, &self.opts.solve).ok()?;
        let sol = &report.solution;
        if !sol.is_usable() {
            return None;
        }
        let mut out = self.physical_rounding(x);
        for pair in &s.pairs {
            // Same row order and coefficients as the embedded follower
            // block, and the follower's own variables occupy the same ids.
            let row = &self.model.ineq_rows[pair.row];
            let slack = row.rhs - row.activity(&sol.x);
            let active = sol.ineq_duals.get(pair.row).is_some_and(|&mu| mu > 1e-6)
                || slack.abs() <= 1e-9 * (1.0 + row.rhs.abs());
            out.insert(s.alpha[pair.row], if active { 1.0 } else { 0.0 });
        }
        Some(out)
    }

    /// Relaxed-solution repair patterns tried at the root, best-informed
    /// first: switches from an independent follower solve, switches from
    /// binding rows, switches from multiplier values, plain rounding. Stops
    /// early once an incumbent proves the root bound tight.
    fn root_repair(&mut self, root: &Solution) {
        let mut patterns: Vec<BTreeMap<VarId, f64>> = Vec::new();
        if let Some(p) = self.follower_support(&root.x) {
            patterns.push(p);
        }
        if let Some(s) = self.single {
            let physical = self.physical_rounding(&root.x);
            let mut by_slack = physical.clone();
            let mut by_mu = physical;
            for pair in &s.pairs {
                let row = &self.model.ineq_rows[pair.row];
                let slack = row.rhs - row.activity(&root.x);
                let scale = 1e-7 * (1.0 + row.rhs.abs());
                by_slack.insert(s.alpha[pair.row], if slack <= scale { 1.0 } else { 0.0 });
                by_mu.insert(
                    s.alpha[pair.row],
                    if root.x[s.mu[pair.row]] > 1e-6 { 1.0 } else { 0.0 },
                );
            }
            patterns.push(by_slack);
            patterns.push(by_mu);
        }
        patterns.push(BTreeMap::new());
        for p in patterns {
            self.try_candidate(&root.x, &p);
            if let Some((obj, _)) = &self.incumbent {
                if gap_of(*obj, root.objective) <= self.opts.gap_rel {
                    break;
                }
            }
        }
    }
}

/// Solve the assembled single-level model: presolve, then branch-and-bound
/// over the remaining free binaries.
pub fn solve_bnb(
    single: &SingleLevelModel,
    solver: &dyn ConicSubproblemSolver,
    opts: &BnbOptions,
) -> Result<BnbReport, BnbError> {
    let pre = presolve_fix(single, opts.feas_tol);
    solve_bnb_with(
        &single.model,
        &pre.overrides,
        Some(single),
        solver,
        opts,
    )
}

/// Branch-and-bound on a bare model with caller-supplied fixings (used for
/// standalone distribution-network programs and tests).
pub fn solve_bnb_model(
    model: &ConicModel,
    base_overrides: &[(VarId, f64, f64)],
    solver: &dyn ConicSubproblemSolver,
    opts: &BnbOptions,
) -> Result<BnbReport, BnbError> {
    solve_bnb_with(model, base_overrides, None, solver, opts)
}

fn solve_bnb_with(
    model: &ConicModel,
    base_overrides: &[(VarId, f64, f64)],
    single: Option<&SingleLevelModel>,
    solver: &dyn ConicSubproblemSolver,
    opts: &BnbOptions,
) -> Result<BnbReport, BnbError> {
    let started = Instant::now();
    let fixed_ids: BTreeSet<VarId> = base_overrides
        .iter()
        .filter(|&&(_, l, h)| l == h)
        .map(|&(v, _, _)| v)
        .collect();
    let free: Vec<VarId> = model
        .binary_ids()
        .into_iter()
        .filter(|v| !fixed_ids.contains(v))
        .collect();

    let alpha_ids: BTreeSet<VarId> = single
        .map(|s| s.alpha.iter().copied().collect())
        .unwrap_or_default();
    let mut ctx = SearchCtx {
        model,
        solver,
        opts,
        base: base_overrides.to_vec(),
        free,
        alpha_ids,
        single,
        arena: NodeArena::new(),
        records: Vec::new(),
        incumbent: None,
        tried: BTreeSet::new(),
        nodes: 0,
        started,
    };

    // Root relaxation.
    let root_sol = match ctx.solve_node(0) {
        Ok(s) if s.is_usable() => s,
        Ok(s) => return Err(BnbError::Solver(format!("root relaxation status {:?}", s.status))),
        Err(SolveError::Infeasible(rep)) => return Err(BnbError::Infeasible(rep.to_string())),
        Err(e) => return Err(BnbError::Solver(e.to_string())),
    };
    ctx.nodes = 1;
    let root_bound = root_sol.objective;

    // Fast incumbents by repair, before any branching.
    if opts.root_repair {
        ctx.root_repair(&root_sol);
    }

    let mut heap: BinaryHeap<Open> = BinaryHeap::new();
    let mut plunge: Vec<usize> = Vec::new();
    let mut best_bound = root_bound;

    // Process the root inline, seeding children.
    process_solved(&mut ctx, 0, root_sol, &mut heap, &mut plunge)?;

    // Main loop.
    let mut limit_hit = false;
    loop {
        // Once an incumbent exists plunging stops paying; drain the stack
        // into the best-bound heap.
        if ctx.incumbent.is_some() && !plunge.is_empty() {
            for id in plunge.drain(..) {
                heap.push(Open { bound: ctx.arena.inherited[id], id });
            }
        }

        // Current global bound: incumbent vs all open subtrees.
        let open_min = plunge
            .iter()
            .map(|&id| ctx.arena.inherited[id])
            .chain(heap.iter().map(|o| o.bound))
            .fold(f64::INFINITY, f64::min);
        if let Some((obj, _)) = &ctx.incumbent {
            best_bound = open_min.min(*obj);
            let gap = gap_of(*obj, best_bound);
            if gap <= opts.gap_rel || open_min >= ctx.cutoff() {
                best_bound = best_bound.max(ctx.cutoff().min(*obj));
                break;
            }
        } else {
            best_bound = open_min.min(best_bound).max(root_bound);
        }
        if plunge.is_empty() && heap.is_empty() {
            break;
        }
        if ctx.out_of_budget() {
            limit_hit = true;
            break;
        }

        // Pick the batch: depth-first while plunging, else best-bound.
        let batch: Vec<usize> = if let Some(id) = plunge.pop() {
            vec![id]
        } else {
            let width = if opts.deterministic || !opts.exec.is_parallel() {
                1
            } else {
                8.min(opts.node_limit.saturating_sub(ctx.nodes)).max(1)
            };
            let mut ids = Vec::with_capacity(width);
            while ids.len() < width {
                match heap.pop() {
                    Some(o) if o.bound < ctx.cutoff() => ids.push(o.id),
                    Some(_) => continue, // fathomed while queued
                    None => break,
                }
            }
            ids
        };
        if batch.is_empty() {
            continue;
        }

        // Evaluate the batch (possibly in parallel), then reduce in order.
        let solved: Vec<Result<Solution, SolveError>> = if batch.len() == 1 {
            vec![ctx.solve_node(batch[0])]
        } else {
            let jobs: Vec<Vec<(VarId, f64, f64)>> = batch
                .iter()
                .map(|&id| merged_overrides(&ctx.base, &ctx.arena.chain(id)))
                .collect();
            par::map_vec(opts.exec, jobs, |ov| solver.solve(model, &ov, &opts.solve))
        };
        for (&id, outcome) in batch.iter().zip(solved) {
            ctx.nodes += 1;
            match outcome {
                Ok(s) if s.is_usable() => {
                    process_solved(&mut ctx, id, s, &mut heap, &mut plunge)?
                }
                Ok(s) => {
                    return Err(BnbError::Solver(format!(
                        "node {id} relaxation status {:?}",
                        s.status
                    )))
                }
                Err(SolveError::Infeasible(_)) => {
                    ctx.record(id, f64::INFINITY, NodeStatus::Infeasible, None);
                }
                Err(e) => return Err(BnbError::Solver(e.to_string())),
            }
        }
    }

    let wall = started.elapsed().as_secs_f64();
    let presolve_fixed = fixed_ids.len();
    match ctx.incumbent {
        Some((objective, x)) => {
            let best_bound = best_bound.min(objective);
            Ok(BnbReport {
                status: if limit_hit { BnbStatus::LimitReached } else { BnbStatus::Optimal },
                objective,
                x,
                best_bound,
                gap: gap_of(objective, best_bound),
                nodes: ctx.nodes,
                wall_seconds: wall,
                presolve_fixed,
                node_records: ctx.records,
            })
        }
        None if limit_hit => Err(BnbError::NoIncumbent { nodes: ctx.nodes, best_bound }),
        None => Err(BnbError::Infeasible(
            "every leaf of the search tree is infeasible".into(),
        )),
    }
}

fn gap_of(objective: f64, bound: f64) -> f64 {
    ((objective - bound) / objective.abs().max(1.0)).max(0.0)
}

/// Handle one node whose relaxation solved: fathom, accept an integral
/// point, or branch.
fn process_solved(
    ctx: &mut SearchCtx<'_>,
    id: usize,
    sol: Solution,
    heap: &mut BinaryHeap<Open>,
    plunge: &mut Vec<usize>,
) -> Result<(), BnbError> {
    let bound = sol.objective;
    if bound >= ctx.cutoff() {
        ctx.record(id, bound, NodeStatus::Fathomed, None);
        return Ok(());
    }

    // Most fractional free binary not already fixed on this node's path.
    // Switch binaries follow the continuous equilibrium rather than drive
    // it, so branching prefers the others and falls back to switches only
    // when nothing else is fractional.
    let chain = ctx.arena.chain(id);
    let mut other: Option<(f64, VarId)> = None;
    let mut switch: Option<(f64, VarId)> = None;
    for &v in &ctx.free {
        if chain.contains_key(&v) {
            continue;
        }
        let xv = sol.x[v].clamp(0.0, 1.0);
        let frac = xv.min(1.0 - xv);
        if frac <= ctx.opts.int_tol {
            continue;
        }
        let slot = if ctx.alpha_ids.contains(&v) { &mut switch } else { &mut other };
        if slot.map_or(true, |(f, _)| frac > f) {
            *slot = Some((frac, v));
        }
    }

    // Only switches left fractional: before branching on one, try to
    // complete the whole block from an independent follower solve at this
    // node's exchange profile. A tight completion fathoms the node.
    if other.is_none() && switch.is_some() {
        if let Some(p) = ctx.follower_support(&sol.x) {
            ctx.try_candidate(&sol.x, &p);
            if bound >= ctx.cutoff() {
                ctx.record(id, bound, NodeStatus::Fathomed, None);
                return Ok(());
            }
        }
    }

    match other.or(switch) {
        None => {
            ctx.record(id, bound, NodeStatus::Integral, None);
            // All binaries (effectively) integral: polish with everything
            // fixed at the rounded values, then replay independently.
            ctx.try_candidate(&sol.x, &BTreeMap::new());
        }
        Some((_, v)) => {
            ctx.record(id, bound, NodeStatus::Branched, Some(ctx.model.vars[v].key));
            let toward = if sol.x[v] >= 0.5 { 1.0 } else { 0.0 };
            let away = ctx.arena.push(id, v, 1.0 - toward, bound);
            let pref = ctx.arena.push(id, v, toward, bound);
            if ctx.incumbent.is_none() {
                // Depth-first plunge: preferred child processed next.
                plunge.push(away);
                plunge.push(pref);
            } else {
                heap.push(Open { bound, id: away });
                heap.push(Open { bound, id: pref });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Enumeration oracle
// ---------------------------------------------------------------------------

/// Options for [`brute_force_enumerate`].
#[derive(Debug, Clone)]
pub struct BruteForceOptions {
    /// Refuse to enumerate more than this many free binaries.
    pub cap: usize,
    /// Parallel or sequential scanning (reduction is order-fixed either way).
    pub exec: ExecMode,
    /// Max violation accepted from the independent evaluator.
    pub feas_tol: f64,
    /// Per-assignment continuous solve settings.
    pub solve: SolveSettings,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        BruteForceOptions {
            cap: 24,
            exec: ExecMode::default(),
            feas_tol: 1e-6,
            solve: SolveSettings::default(),
        }
    }
}

/// Exact optimum by solving the continuous model for every assignment of
/// the free binaries and keeping the best point that replays cleanly through
/// the independent evaluator. Ties take the lowest assignment index, so the
/// result is deterministic in both execution modes.
pub fn brute_force_enumerate(
    model: &ConicModel,
    solver: &dyn ConicSubproblemSolver,
    base_overrides: &[(VarId, f64, f64)],
    opts: &BruteForceOptions,
) -> Result<(f64, Vec<f64>), BnbError> {
    let fixed_ids: BTreeSet<VarId> = base_overrides
        .iter()
        .filter(|&&(_, l, h)| l == h)
        .map(|&(v, _, _)| v)
        .collect();
    let free: Vec<VarId> = model
        .binary_ids()
        .into_iter()
        .filter(|v| !fixed_ids.contains(v))
        .collect();
    if free.len() > opts.cap {
        return Err(BnbError::TooManyBinaries { count: free.len(), cap: opts.cap });
    }

    let n = 1usize << free.len();
    let outcomes = par::map_range(opts.exec, n, |mask| {
        let chain: BTreeMap<VarId, f64> = free
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, ((mask >> i) & 1) as f64))
            .collect();
        let overrides = merged_overrides(base_overrides, &chain);
        match solver.solve(model, &overrides, &opts.solve) {
            Ok(sol) if sol.is_usable() => {
                let rep = eval::evaluate(model, &sol.x, &overrides);
                (rep.worst_violation() <= opts.feas_tol).then_some((sol.objective, sol.x))
            }
            _ => None,
        }
    });

    let best = outcomes
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.0 < a.0 - 1e-12 { b } else { a });
    match best {
        Some((obj, x)) => Ok((obj, x)),
        None => Err(BnbError::Infeasible(
            "every binary assignment is infeasible".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::{
        assemble_single_level, big_m_linearize, derive_kkt, dual_bound_from_solves,
        follower_optimality_gap, BigMPolicy,
    };
    use crate::net::{
        BessSpec, DistributionNetwork, DnBus, DnLine, ExchangeCaps, GenCost, Scenario,
        ScenarioConfig, TnBus, TnLine, TransmissionNetwork,
    };
    use crate::model::INF;
    use crate::solver::ClarabelSolver;
    use crate::tn::{build_tn_program, solve_tn_direct, BoundaryFixing};

    fn gen_bus(id: u32, demand: Vec<f64>, cap: f64) -> TnBus {
        let t = demand.len();
        TnBus {
            id,
            demand_profile: demand,
            gen_cost: GenCost { a: 0.01, b: 5.0, c: 0.0 },
            pg_max: vec![cap; t],
            pv_marginal_cost: 0.0,
            pv_capacity_ratio: 0.0,
            kt_bg_limit: 0.0,
        }
    }

    fn boundary_bus(id: u32, t: usize, kt: f64) -> TnBus {
        TnBus {
            id,
            demand_profile: vec![0.0; t],
            gen_cost: GenCost::ZERO,
            pg_max: vec![],
            pv_marginal_cost: 0.0,
            pv_capacity_ratio: 0.0,
            kt_bg_limit: kt,
        }
    }

    /// Two-bus transmission net: generator+reference at 1, exchange point
    /// at 2.
    fn micro_tn(t: usize) -> TransmissionNetwork {
        TransmissionNetwork {
            buses: vec![gen_bus(1, vec![50.0; t], 200.0), boundary_bus(2, t, 40.0)],
            lines: vec![TnLine { from_bus: 1, to_bus: 2, reactance: 0.1, flow_limit: 200.0 }],
            boundary_bus_ids: vec![2],
            reference_bus_ids: vec![1],
        }
    }

    /// Feeder with one agent bus carrying load, PV, and a battery.
    fn micro_feeder(t: usize, with_battery: bool) -> DistributionNetwork {
        DistributionNetwork {
            attachment_bus: 2,
            label: "micro".into(),
            buses: vec![
                DnBus {
                    id: 1,
                    demand: vec![0.0; t],
                    reactive_demand: vec![0.0; t],
                    qg_min: -10.0,
                    qg_max: 10.0,
                    v_min_sq: 1.0,
                    v_max_sq: 1.0,
                    pv_capacity_ratio: 0.0,
                    battery: None,
                },
                DnBus {
                    id: 2,
                    demand: vec![1.0; t],
                    reactive_demand: vec![0.0; t],
                    qg_min: 0.0,
                    qg_max: 0.0,
                    v_min_sq: 0.81,
                    v_max_sq: 1.21,
                    pv_capacity_ratio: 1.0,
                    battery: with_battery.then_some(BessSpec {
                        installed: true,
                        capacity_mwh: 2.0,
                        rated_power_mw: 1.0,
                        soc_min: 0.1,
                        soc_max: 0.9,
                        eff_charge: 0.95,
                        eff_discharge: 0.95,
                        soc_initial_mwh: 1.0,
                    }),
                },
            ],
            lines: vec![DnLine {
                from_bus: 1,
                to_bus: 2,
                resistance: 0.01,
                reactance: 0.005,
                current_sq_limit: 100.0,
            }],
            agent_bus_ids: vec![2],
            boundary_bus_ids: vec![1],
            caps: [(1, ExchangeCaps { sell_grid: 5.0, buy_cheap: 5.0, buy_exp: 5.0 })].into(),
            s_base_mva: 1.0,
        }
    }

    fn micro_cfg(t: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::flat(t);
        cfg.price_buy_cheap = (0..t).map(|i| 0.5 + 0.001 * i as f64).collect();
        cfg.price_buy_exp = (0..t).map(|i| 2.0 + 0.1 * i as f64).collect();
        cfg.price_sell_grid = (0..t).map(|i| 0.4 + 0.0008 * i as f64).collect();
        // PV available in the second half of the horizon only, so storage
        // and trade have intertemporal structure.
        cfg.pv_avail_dn = (0..t).map(|i| if i * 2 >= t { 0.8 } else { 0.0 }).collect();
        cfg
    }

    fn assemble_scenario(
        scenario: Scenario,
        policy: Option<BigMPolicy>,
    ) -> (Scenario, crate::tn::CanonicalConvexProgram, SingleLevelModel) {
        let prog = build_tn_program(&scenario.tn, &scenario.cfg, Some(&BoundaryFixing::new()));
        let policy = policy.unwrap_or_else(|| {
            let direct =
                solve_tn_direct(&prog, &ClarabelSolver::new(), &SolveSettings::default())
                    .unwrap();
            BigMPolicy::from_dual_bound(dual_bound_from_solves([&direct.solution]))
        });
        let kkt = derive_kkt(&prog).unwrap();
        let lin = big_m_linearize(&prog, &kkt, &policy).unwrap();
        let single = assemble_single_level(&prog, &scenario, &kkt, &lin).unwrap();
        (scenario, prog, single)
    }

    fn assemble_micro(
        t: usize,
        with_battery: bool,
    ) -> (Scenario, crate::tn::CanonicalConvexProgram, SingleLevelModel) {
        let scenario = Scenario {
            tn: micro_tn(t),
            adns: vec![micro_feeder(t, with_battery)],
            cfg: micro_cfg(t),
        };
        assemble_scenario(scenario, None)
    }

    /// A pure-binary knapsack with a fractional relaxation and a real
    /// integrality gap: the smallest deterministic exercise of branching,
    /// bounding, and budget semantics.
    fn knapsack() -> ConicModel {
        let mut m = ConicModel::new();
        let b0 = m.add_binary(Key::CompBinary { row: 0 });
        let b1 = m.add_binary(Key::CompBinary { row: 1 });
        let b2 = m.add_binary(Key::CompBinary { row: 2 });
        m.add_cost(b0, 0.0, -3.0);
        m.add_cost(b1, 0.0, -4.0);
        m.add_cost(b2, 0.0, -2.0);
        m.add_ineq(
            Key::TnBuyCap { bus: 1, t: 0 },
            vec![(b0, 2.0), (b1, 3.0), (b2, 1.0)],
            4.0,
        );
        m
    }

    #[test]
    fn presolve_fixes_the_decided_switches() {
        let (_, prog, single) = assemble_micro(1, false);
        let pre = presolve_fix(&single, 1e-7);

        // Provably-decided switches include: flow limits far above any
        // feasible flow (never binding), the cheap-export pool with no
        // utility PV (always binding at zero).
        assert!(pre.switches_never_binding > 0);
        assert!(pre.switches_always_binding > 0);
        let fixed: BTreeMap<VarId, f64> =
            pre.overrides.iter().map(|&(v, l, _)| (v, l)).collect();
        let row_of = |key: Key| {
            prog.model
                .ineq_rows
                .iter()
                .position(|r| r.key == key)
                .unwrap()
        };
        let flow_ub = single.alpha[row_of(Key::TnFlowUb { line: 0, t: 0 })];
        assert_eq!(fixed.get(&flow_ub), Some(&0.0), "slack flow cap must fix to 0");
        let pool = single.alpha[row_of(Key::TnPoolCheap { t: 0 })];
        assert_eq!(fixed.get(&pool), Some(&1.0), "empty cheap pool must fix to 1");

        // Overrides are sorted and unique, as the solver contract requires.
        assert!(pre.overrides.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn search_matches_the_enumeration_oracle() {
        let (scenario, prog, single) = assemble_micro(1, false);
        let solver = ClarabelSolver::new();
        let pre = presolve_fix(&single, 1e-7);
        let n_free = single.model.binary_ids().len() - pre.overrides.len();
        assert!(n_free <= 10, "micro instance grew: {n_free} free binaries");

        let (oracle_obj, _) = brute_force_enumerate(
            &single.model,
            &solver,
            &pre.overrides,
            &BruteForceOptions::default(),
        )
        .unwrap();

        let report = solve_bnb(&single, &solver, &BnbOptions::default()).unwrap();
        assert!(
            (report.objective - oracle_obj).abs() <= 1e-6,
            "search {} vs oracle {}",
            report.objective,
            oracle_obj
        );
        assert_eq!(report.status, BnbStatus::Optimal);
        assert!(report.gap <= 1e-5 + 1e-12);
        assert!(report.best_bound <= report.objective + 1e-9);

        // Incumbent replays cleanly through the independent evaluator.
        let rep = eval::evaluate(&single.model, &report.x, &[]);
        assert!(rep.worst_violation() < 1e-6, "{}", rep.summary());
        assert!(rep.is_integer_feasible(1e-6));

        // And the embedded follower block is truly optimal for the chosen
        // exchanges.
        let gap = follower_optimality_gap(
            &scenario.tn,
            &scenario.cfg,
            &prog,
            &report.x,
            &solver,
            &SolveSettings::default(),
        )
        .unwrap();
        assert!(gap.abs() < 1e-6, "follower optimality gap {gap}");
    }

    #[test]
    fn battery_micro_instance_matches_oracle_across_periods() {
        let (_, _, single) = assemble_micro(2, true);
        let solver = ClarabelSolver::new();
        let pre = presolve_fix(&single, 1e-7);
        let n_free = single.model.binary_ids().len() - pre.overrides.len();
        assert!(n_free <= 14, "battery micro instance grew: {n_free} free binaries");

        let (oracle_obj, oracle_x) = brute_force_enumerate(
            &single.model,
            &solver,
            &pre.overrides,
            &BruteForceOptions::default(),
        )
        .unwrap();
        let report = solve_bnb(&single, &solver, &BnbOptions::default()).unwrap();
        assert!(
            (report.objective - oracle_obj).abs() <= 1e-6,
            "search {} vs oracle {}",
            report.objective,
            oracle_obj
        );
        // The oracle point itself must replay cleanly too.
        let rep = eval::evaluate(&single.model, &oracle_x, &[]);
        assert!(rep.worst_violation() < 1e-6);
    }

    #[test]
    fn fully_preprocessed_instance_solves_at_the_root() {
        // Island transmission net, no feeders: every exchange is pinned to
        // zero, so interval reasoning decides every switch and the search
        // never branches.
        let tn = TransmissionNetwork {
            buses: vec![gen_bus(1, vec![30.0], 200.0)],
            lines: vec![],
            boundary_bus_ids: vec![],
            reference_bus_ids: vec![1],
        };
        let cfg = ScenarioConfig::flat(1);
        let scenario = Scenario { tn: tn.clone(), adns: vec![], cfg: cfg.clone() };
        let prog = build_tn_program(&tn, &cfg, Some(&BoundaryFixing::new()));
        let kkt = derive_kkt(&prog).unwrap();
        let lin = big_m_linearize(&prog, &kkt, &BigMPolicy::from_dual_bound(1e3)).unwrap();
        let single = assemble_single_level(&prog, &scenario, &kkt, &lin).unwrap();

        let pre = presolve_fix(&single, 1e-7);
        assert_eq!(
            pre.overrides.len(),
            single.model.binary_ids().len(),
            "preprocessing must decide every switch"
        );

        let report = solve_bnb(&single, &ClarabelSolver::new(), &BnbOptions::default()).unwrap();
        assert_eq!(report.nodes, 1);
        assert_eq!(report.status, BnbStatus::Optimal);
        // No leader: the objective is empty.
        assert!(report.objective.abs() < 1e-9);
        // Embedded follower block reproduces the island dispatch.
        let pg = prog.index.pg[&(1, 0)];
        assert!((report.x[pg] - 30.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_runs_produce_identical_logs() {
        let (_, _, single) = assemble_micro(2, true);
        let solver = ClarabelSolver::new();
        let opts = BnbOptions { deterministic: true, ..BnbOptions::default() };
        let a = solve_bnb(&single, &solver, &opts).unwrap();
        let b = solve_bnb(&single, &solver, &opts).unwrap();
        assert_eq!(a.node_log_text(), b.node_log_text());
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.nodes, b.nodes);

        // The log carries one line per processed node in a stable format.
        let log = a.node_log_text();
        assert_eq!(log.lines().count(), a.node_records.len());
        assert!(log.starts_with("node 0 parent - fix - bound "));
    }

    fn check_monotone(report: &BnbReport) -> usize {
        let by_id: BTreeMap<usize, &BnbNodeRecord> =
            report.node_records.iter().map(|r| (r.id, r)).collect();
        let mut checked = 0;
        for r in &report.node_records {
            if let Some(pr) = r.parent.and_then(|p| by_id.get(&p)) {
                assert!(
                    r.bound >= pr.bound - 1e-6,
                    "node {} bound {} below parent {} bound {}",
                    r.id,
                    r.bound,
                    pr.id,
                    pr.bound
                );
                checked += 1;
            }
        }
        checked
    }

    #[test]
    fn bounds_grow_monotonically_along_tree_paths() {
        let solver = ClarabelSolver::new();
        // The knapsack branches for sure.
        let km = knapsack();
        let kr = solve_bnb_model(&km, &[], &solver, &BnbOptions::default()).unwrap();
        assert!(check_monotone(&kr) > 0, "knapsack produced no parent/child pairs");

        // The physical model too, when run without presolve or root repair:
        // the switch binaries relax fractional (they carry no cost, so the
        // interior point sits mid-box) and force real branching.
        let (_, _, single) = assemble_micro(1, false);
        let opts = BnbOptions { root_repair: false, ..BnbOptions::default() };
        let report = solve_bnb_model(&single.model, &[], &solver, &opts).unwrap();
        assert!(
            check_monotone(&report) > 0,
            "micro model produced no parent/child pairs"
        );
        assert!(report.nodes > 1, "expected branching without presolve");
    }

    #[test]
    fn limits_surface_as_reported_status() {
        let solver = ClarabelSolver::new();
        let m = knapsack();

        // Unlimited: exact optimum (0,1,1) with value −6, matching the
        // enumeration oracle.
        let full = solve_bnb_model(&m, &[], &solver, &BnbOptions::default()).unwrap();
        let (oracle, _) =
            brute_force_enumerate(&m, &solver, &[], &BruteForceOptions::default()).unwrap();
        assert!((full.objective - oracle).abs() < 1e-9);
        assert!((full.objective + 6.0).abs() < 1e-6);
        assert_eq!(full.status, BnbStatus::Optimal);

        // One-node budget: root repair rounds the fractional relaxation to
        // the feasible (1,0,1) worth −5, and the bound stays at the root
        // relaxation −19/3, so the run ends LimitReached with a real gap.
        let budget = solve_bnb_model(
            &m,
            &[],
            &solver,
            &BnbOptions { node_limit: 1, ..BnbOptions::default() },
        )
        .unwrap();
        assert_eq!(budget.status, BnbStatus::LimitReached);
        assert!((budget.objective + 5.0).abs() < 1e-6, "objective {}", budget.objective);
        assert!(budget.best_bound <= -6.0 - 1e-6);
        assert!(budget.gap > 0.2, "gap {}", budget.gap);
        assert_eq!(budget.nodes, 1);
    }

    #[test]
    fn exhausted_budgets_and_integer_infeasibility_are_errors() {
        // b0 + b1 = 3/2 has a feasible relaxation but no integral point.
        let mut m = ConicModel::new();
        let b0 = m.add_binary(Key::CompBinary { row: 0 });
        let b1 = m.add_binary(Key::CompBinary { row: 1 });
        m.add_eq(Key::TnBalanceInterior { bus: 1, t: 0 }, vec![(b0, 1.0), (b1, 1.0)], 1.5);
        let solver = ClarabelSolver::new();

        let full = solve_bnb_model(&m, &[], &solver, &BnbOptions::default());
        assert!(matches!(full, Err(BnbError::Infeasible(_))), "{full:?}");

        let capped = solve_bnb_model(
            &m,
            &[],
            &solver,
            &BnbOptions { node_limit: 3, ..BnbOptions::default() },
        );
        match capped {
            Err(BnbError::NoIncumbent { nodes, .. }) => assert_eq!(nodes, 3),
            other => panic!("expected NoIncumbent, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_root_is_an_error() {
        let (_, _, single) = assemble_micro(1, false);
        // Contradictory fixing: head import forced negative.
        let mut m = single.model.clone();
        let v = m.add_var(Key::DualEq { row: 9999 }, -INF, INF);
        m.add_eq(Key::Stationarity { var: 9999 }, vec![(v, 1.0)], 1.0);
        m.add_eq(Key::Stationarity { var: 9998 }, vec![(v, 1.0)], 2.0);
        let err = solve_bnb_model(&m, &[], &ClarabelSolver::new(), &BnbOptions::default());
        assert!(matches!(err, Err(BnbError::Infeasible(_))), "{err:?}");
    }

    #[test]
    fn enumeration_without_binaries_is_a_single_solve() {
        let mut m = ConicModel::new();
        let x = m.add_var(Key::TnPg { bus: 1, t: 0 }, 0.0, 10.0);
        m.add_cost(x, 1.0, -4.0);
        let (obj, sol) = brute_force_enumerate(
            &m,
            &ClarabelSolver::new(),
            &[],
            &BruteForceOptions::default(),
        )
        .unwrap();
        assert!((sol[x] - 2.0).abs() < 1e-6);
        assert!((obj + 4.0).abs() < 1e-6);
    }

    #[test]
    fn enumeration_scans_every_assignment_and_caps() {
        // minimize x, with two gate binaries: x ≥ 3 − 2·b0 − b1. Optimum
        // fixes both gates: x = 0.
        let mut m = ConicModel::new();
        let x = m.add_var(Key::TnPg { bus: 1, t: 0 }, 0.0, 10.0);
        let b0 = m.add_binary(Key::CompBinary { row: 0 });
        let b1 = m.add_binary(Key::CompBinary { row: 1 });
        m.add_cost(x, 0.0, 1.0);
        m.add_ineq(
            Key::TnBuyCap { bus: 1, t: 0 },
            vec![(x, -1.0), (b0, -2.0), (b1, -1.0)],
            -3.0,
        );
        let solver = ClarabelSolver::new();
        let (obj, sol) =
            brute_force_enumerate(&m, &solver, &[], &BruteForceOptions::default()).unwrap();
        assert!(obj.abs() < 1e-6);
        assert!((sol[b0] - 1.0).abs() < 1e-9 && (sol[b1] - 1.0).abs() < 1e-9);

        // With b0 pre-fixed to 0 the best point needs x = 1 − … wait: x ≥ 3 − 1 = 2.
        let (obj_fixed, _) =
            brute_force_enumerate(&m, &solver, &[(b0, 0.0, 0.0)], &BruteForceOptions::default())
                .unwrap();
        assert!((obj_fixed - 2.0).abs() < 1e-6);

        // Cap enforcement.
        let err = brute_force_enumerate(
            &m,
            &solver,
            &[],
            &BruteForceOptions { cap: 1, ..BruteForceOptions::default() },
        );
        assert!(matches!(err, Err(BnbError::TooManyBinaries { count: 2, cap: 1 })));
    }

    /// Transmission net with a real dispatch choice: a cheap capped unit and
    /// an expensive marginal unit. At the optimum the cheap cap binds with a
    /// multiplier equal to the marginal-cost spread, so an undersized dual
    /// constant cannot represent the true first-order conditions.
    fn merit_tn(t: usize) -> TransmissionNetwork {
        let mut cheap = gen_bus(1, vec![0.0; t], 30.0);
        cheap.gen_cost = GenCost { a: 0.005, b: 2.0, c: 0.0 };
        let mut marginal = gen_bus(2, vec![50.0; t], 100.0);
        marginal.gen_cost = GenCost { a: 0.01, b: 6.0, c: 0.0 };
        TransmissionNetwork {
            buses: vec![cheap, marginal, boundary_bus(3, t, 40.0)],
            lines: vec![
                TnLine { from_bus: 1, to_bus: 2, reactance: 0.1, flow_limit: 200.0 },
                TnLine { from_bus: 2, to_bus: 3, reactance: 0.1, flow_limit: 200.0 },
            ],
            boundary_bus_ids: vec![3],
            reference_bus_ids: vec![1],
        }
    }

    #[test]
    fn undersized_dual_constant_is_caught_by_the_projection_check() {
        let mut feeder = micro_feeder(1, false);
        feeder.attachment_bus = 3;
        let scenario =
            Scenario { tn: merit_tn(1), adns: vec![feeder], cfg: micro_cfg(1) };
        let solver = ClarabelSolver::new();

        // Well-sized constants: the search result projects onto a truly
        // optimal dispatch (cheap unit at its cap).
        let (scenario, prog, single) = assemble_scenario(scenario, None);
        let report = solve_bnb(&single, &solver, &BnbOptions::default()).unwrap();
        let gap_good = follower_optimality_gap(
            &scenario.tn,
            &scenario.cfg,
            &prog,
            &report.x,
            &solver,
            &SolveSettings::default(),
        )
        .unwrap();
        assert!(gap_good.abs() < 1e-6, "well-sized constants must project cleanly: {gap_good}");
        let pg_cheap = report.x[prog.index.pg[&(1, 0)]];
        assert!((pg_cheap - 30.0).abs() < 1e-4, "cheap unit off its cap: {pg_cheap}");

        // Deliberately crippled dual bound: the true multiplier on the cheap
        // cap (the marginal-cost spread, ≈ 3–4 $/MW) exceeds it, so the
        // linearized system either goes infeasible or lands on a distorted
        // dispatch — and the projection check flags the distortion.
        let kkt = derive_kkt(&prog).unwrap();
        let lin_bad = big_m_linearize(&prog, &kkt, &BigMPolicy::from_dual_bound(1e-4)).unwrap();
        let single_bad = assemble_single_level(&prog, &scenario, &kkt, &lin_bad).unwrap();
        let detected = match solve_bnb(&single_bad, &solver, &BnbOptions::default()) {
            Err(_) => true, // system infeasible — detected
            Ok(report_bad) => {
                let gap = follower_optimality_gap(
                    &scenario.tn,
                    &scenario.cfg,
                    &prog,
                    &report_bad.x,
                    &solver,
                    &SolveSettings::default(),
                )
                .unwrap();
                gap.abs() > 1e-4
            }
        };
        assert!(
            detected,
            "undersized multiplier bound must be caught by infeasibility or the projection gap"
        );
    }

    #[test]
    fn parallel_and_sequential_agree_on_the_objective() {
        let (_, _, single) = assemble_micro(2, true);
        let solver = ClarabelSolver::new();
        let seq = solve_bnb(
            &single,
            &solver,
            &BnbOptions { deterministic: true, ..BnbOptions::default() },
        )
        .unwrap();
        let par = solve_bnb(
            &single,
            &solver,
            &BnbOptions {
                deterministic: false,
                exec: ExecMode::Parallel,
                ..BnbOptions::default()
            },
        )
        .unwrap();
        assert!(
            (seq.objective - par.objective).abs() <= 1e-6,
            "seq {} vs par {}",
            seq.objective,
            par.objective
        );
    }

    #[test]
    fn solution_text_round_trips_variable_names() {
        let mut m = ConicModel::new();
        let x = m.add_var(Key::TnPg { bus: 7, t: 3 }, 0.0, 10.0);
        let b = m.add_binary(Key::CompBinary { row: 4 });
        let text = solution_text(&m, &[2.5, 1.0]);
        assert_eq!(text, format!("{} 2.5\n{} 1\n", m.vars[x].key, m.vars[b].key));
    }

    /// The bundled 30-bus / 33-bus instance leaves over a thousand binaries
    /// free even after presolve, so one-at-a-time branching cannot reach a
    /// leaf in any sane budget. The follower-resolve repair must therefore
    /// close the instance at the root (the continuous relaxation is tight
    /// for this model class), and the incumbent must hold up under both
    /// independent audits.
    #[test]
    fn bundled_network_instance_closes_at_the_root_by_repair() {
        let mut bundle = crate::ingest::reference_bundle();
        bundle.horizon = 2;
        let scenario = crate::ingest::build_scenario(
            &bundle,
            include_str!("../fixtures/ieee30.case"),
            include_str!("../fixtures/feeder33.case"),
        )
        .unwrap();
        let solver = ClarabelSolver::new();
        let settings = SolveSettings::default();
        let pinned = build_tn_program(&scenario.tn, &scenario.cfg, Some(&BoundaryFixing::new()));
        let free = build_tn_program(&scenario.tn, &scenario.cfg, None);
        let a = solve_tn_direct(&pinned, &solver, &settings).unwrap();
        let b = solve_tn_direct(&free, &solver, &settings).unwrap();
        let policy =
            BigMPolicy::from_dual_bound(dual_bound_from_solves([&a.solution, &b.solution]));
        let (scenario, prog, single) = assemble_scenario(scenario, Some(policy));

        let report = solve_bnb(
            &single,
            &solver,
            &BnbOptions { node_limit: 50, ..BnbOptions::default() },
        )
        .unwrap();
        assert_eq!(report.status, BnbStatus::Optimal);
        assert!(report.gap <= 1e-5, "gap {}", report.gap);
        assert!(report.nodes <= 3, "needed {} nodes", report.nodes);

        let overrides: Vec<(VarId, f64, f64)> = single
            .model
            .binary_ids()
            .into_iter()
            .map(|v| (v, report.x[v].round(), report.x[v].round()))
            .collect();
        let replay = eval::evaluate(&single.model, &report.x, &overrides);
        assert!(replay.worst_violation() <= 1e-6, "replay {}", replay.worst_violation());
        let gap = follower_optimality_gap(
            &scenario.tn,
            &scenario.cfg,
            &prog,
            &report.x,
            &solver,
            &settings,
        )
        .unwrap();
        assert!(gap.abs() <= 1e-6, "embedded follower off its optimum by {gap}");
    }
}
