//! Domain types for networks, devices, prices, and scenarios, plus the
//! validation pass shared by every model builder.
//!
//! All types here are plain immutable data: physical descriptions (buses,
//! lines, device specs) and economic/scheduling parameters
//! ([`ScenarioConfig`]). They carry no solver state and are safe to share
//! across threads. Model builders assume a scenario that passed
//! [`validate_scenario`]; every precondition they rely on is checked there,
//! so a passing report guarantees the builders cannot hit an index or sign
//! error downstream.
//!
//! Unit conventions, used consistently everywhere:
//!
//! * active power in MW, reactive power in MVAr, energy in MWh;
//! * line impedances in per-unit on the network's own base;
//! * voltages stored **squared** (p.u.²) to match the branch-flow variables;
//! * squared branch current in p.u.²;
//! * prices in $/MWh, generation cost curves in $/MW², $/MW, $.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Key/value text formats (TOML) require string map keys; route
/// `BTreeMap<u32, V>` fields through stringified keys so scenarios
/// round-trip losslessly.
mod u32_key_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<V, S>(map: &BTreeMap<u32, V>, ser: S) -> Result<S::Ok, S::Error>
    where
        V: Serialize,
        S: Serializer,
    {
        ser.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, V, D>(de: D) -> Result<BTreeMap<u32, V>, D::Error>
    where
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        let raw = BTreeMap::<String, V>::deserialize(de)?;
        raw.into_iter()
            .map(|(k, v)| k.parse::<u32>().map(|k| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}

/// Quadratic generation cost curve `a·p² + b·p + c` ($/h at power p MW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenCost {
    /// Quadratic coefficient, $/MW²; must be ≥ 0 for a convex dispatch.
    pub a: f64,
    /// Linear coefficient, $/MW.
    pub b: f64,
    /// Constant coefficient, $ (paid whenever the unit exists).
    pub c: f64,
}

impl GenCost {
    /// Zero-cost curve (used for buses without generation).
    pub const ZERO: GenCost = GenCost {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    /// Cost at output `p` MW.
    pub fn at(&self, p: f64) -> f64 {
        self.a * p * p + self.b * p + self.c
    }

    /// Marginal cost d/dp at output `p` MW.
    pub fn marginal_at(&self, p: f64) -> f64 {
        2.0 * self.a * p + self.b
    }
}

/// A transmission bus: demand, thermal generation, and utility PV data.
///
/// Per-period quantities (`demand_profile`, `pg_max`) must have exactly the
/// scenario horizon's length. Buses without a generator use `pg_max` all
/// zeros; buses without PV use `pv_capacity_ratio = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TnBus {
    /// External bus id (case-file numbering, not contiguous).
    pub id: u32,
    /// Active power demand per period, MW.
    pub demand_profile: Vec<f64>,
    /// Thermal generation cost curve.
    pub gen_cost: GenCost,
    /// Thermal generation upper limit per period, MW.
    pub pg_max: Vec<f64>,
    /// Marginal cost of utility PV at this bus, $/MWh.
    pub pv_marginal_cost: f64,
    /// Share of the system PV availability profile installed here, ∈ [0, 1].
    pub pv_capacity_ratio: f64,
    /// Cap on power purchased from the attached ADN, MW (boundary buses).
    pub kt_bg_limit: f64,
}

/// A transmission line (undirected corridor with one signed flow variable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TnLine {
    /// Sending-end bus id (orientation of the signed flow).
    pub from_bus: u32,
    /// Receiving-end bus id.
    pub to_bus: u32,
    /// Series reactance, p.u.; must be > 0.
    pub reactance: f64,
    /// Thermal flow limit, MW; must be > 0.
    pub flow_limit: f64,
}

/// The transmission network: buses, lines, and the designated bus sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionNetwork {
    /// Buses in case-file order.
    pub buses: Vec<TnBus>,
    /// Lines in case-file order.
    pub lines: Vec<TnLine>,
    /// Buses where distribution networks may attach, in declaration order.
    pub boundary_bus_ids: Vec<u32>,
    /// Angle-reference buses (θ fixed to zero); must be non-empty.
    pub reference_bus_ids: Vec<u32>,
}

impl TransmissionNetwork {
    /// Look up a bus by external id.
    pub fn bus(&self, id: u32) -> Option<&TnBus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Whether `id` is a declared boundary bus.
    pub fn is_boundary(&self, id: u32) -> bool {
        self.boundary_bus_ids.contains(&id)
    }

    /// Total installed thermal capacity, MW (max over periods per bus).
    pub fn thermal_capacity(&self) -> f64 {
        self.buses
            .iter()
            .map(|b| b.pg_max.iter().copied().fold(0.0, f64::max))
            .sum()
    }

    /// System peak demand, MW (max over periods of summed bus demand).
    pub fn peak_demand(&self) -> f64 {
        let t_len = self.buses.iter().map(|b| b.demand_profile.len()).max();
        let Some(t_len) = t_len else { return 0.0 };
        (0..t_len)
            .map(|t| {
                self.buses
                    .iter()
                    .map(|b| b.demand_profile.get(t).copied().unwrap_or(0.0))
                    .sum()
            })
            .fold(0.0, f64::max)
    }
}

/// Battery energy storage specification at a distribution bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BessSpec {
    /// Installation flag: when `false` the device exists in the model but
    /// its charge/discharge/mode variables are forced to zero.
    pub installed: bool,
    /// Usable energy capacity, MWh.
    pub capacity_mwh: f64,
    /// Rated charge/discharge power, MW.
    pub rated_power_mw: f64,
    /// Minimum state of charge, fraction of capacity ∈ [0, 1].
    pub soc_min: f64,
    /// Maximum state of charge, fraction of capacity ∈ [0, 1].
    pub soc_max: f64,
    /// Charging efficiency ∈ (0, 1].
    pub eff_charge: f64,
    /// Discharging efficiency ∈ (0, 1].
    pub eff_discharge: f64,
    /// State of charge entering period 1, MWh.
    pub soc_initial_mwh: f64,
}

impl BessSpec {
    /// Lower SoC bound in MWh.
    pub fn soc_lo_mwh(&self) -> f64 {
        self.soc_min * self.capacity_mwh
    }

    /// Upper SoC bound in MWh.
    pub fn soc_hi_mwh(&self) -> f64 {
        self.soc_max * self.capacity_mwh
    }
}

/// A distribution bus: demand, reactive support, voltage window, and DERs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnBus {
    /// Bus id within the feeder (case-file numbering).
    pub id: u32,
    /// Active demand per period, MW.
    pub demand: Vec<f64>,
    /// Reactive demand per period, MVAr.
    pub reactive_demand: Vec<f64>,
    /// Reactive generation lower limit, MVAr.
    pub qg_min: f64,
    /// Reactive generation upper limit, MVAr.
    pub qg_max: f64,
    /// Squared-voltage lower bound, p.u.².
    pub v_min_sq: f64,
    /// Squared-voltage upper bound, p.u.².
    pub v_max_sq: f64,
    /// Share of the distribution PV availability profile installed here.
    pub pv_capacity_ratio: f64,
    /// Battery at this bus, if any.
    pub battery: Option<BessSpec>,
}

/// A directed distribution line (parent → child in the feeder tree).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DnLine {
    /// Sending-end (parent) bus id.
    pub from_bus: u32,
    /// Receiving-end (child) bus id.
    pub to_bus: u32,
    /// Series resistance, p.u.
    pub resistance: f64,
    /// Series reactance, p.u.
    pub reactance: f64,
    /// Squared-current thermal limit, p.u.²; must be > 0.
    pub current_sq_limit: f64,
}

/// Caps on the three grid-exchange blocks at a feeder head, MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeCaps {
    /// Max power sold to the transmission grid.
    pub sell_grid: f64,
    /// Max power bought from the cheap (PV-backed) pool.
    pub buy_cheap: f64,
    /// Max power bought from the expensive (thermal-backed) pool.
    pub buy_exp: f64,
}

/// An active distribution network: a radial feeder rooted at its single
/// boundary bus, with trading agents at a designated subset of buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionNetwork {
    /// Transmission boundary bus this feeder attaches to.
    pub attachment_bus: u32,
    /// Human-readable label (e.g. `"dn3"`), used in reports.
    pub label: String,
    /// Buses in case-file order; `base_kv`/`s_base_mva` set the p.u. system.
    pub buses: Vec<DnBus>,
    /// Directed lines, oriented away from the root.
    pub lines: Vec<DnLine>,
    /// Buses hosting trading agents (demand + DER + market access).
    pub agent_bus_ids: Vec<u32>,
    /// Boundary buses (feeder heads); exactly one is supported.
    pub boundary_bus_ids: Vec<u32>,
    /// Exchange caps keyed by boundary bus id.
    #[serde(with = "u32_key_map")]
    pub caps: BTreeMap<u32, ExchangeCaps>,
    /// Power base for the p.u. system, MVA.
    pub s_base_mva: f64,
}

impl DistributionNetwork {
    /// Look up a bus by id.
    pub fn bus(&self, id: u32) -> Option<&DnBus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// The feeder head (single boundary bus); panics on invalid networks,
    /// which validation rejects beforehand.
    pub fn head_bus(&self) -> u32 {
        self.boundary_bus_ids[0]
    }

    /// Peak aggregate demand over the horizon, MW.
    pub fn peak_demand(&self) -> f64 {
        let t_len = self.buses.iter().map(|b| b.demand.len()).max();
        let Some(t_len) = t_len else { return 0.0 };
        (0..t_len)
            .map(|t| {
                self.buses
                    .iter()
                    .map(|b| b.demand.get(t).copied().unwrap_or(0.0))
                    .sum()
            })
            .fold(0.0, f64::max)
    }

    /// Sum of PV capacity ratios (MW installed = this × profile peak MW).
    pub fn pv_ratio_total(&self) -> f64 {
        self.buses.iter().map(|b| b.pv_capacity_ratio).sum()
    }

    /// Total installed battery capacity, MWh.
    pub fn bess_capacity_mwh(&self) -> f64 {
        self.buses
            .iter()
            .filter_map(|b| b.battery.as_ref())
            .filter(|s| s.installed)
            .map(|s| s.capacity_mwh)
            .sum()
    }

    /// Total installed battery rated power, MW.
    pub fn bess_power_mw(&self) -> f64 {
        self.buses
            .iter()
            .filter_map(|b| b.battery.as_ref())
            .filter(|s| s.installed)
            .map(|s| s.rated_power_mw)
            .sum()
    }
}

/// Which side commits first in the coordination sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionSequence {
    /// Distribution operators lead; transmission responds (the full
    /// single-level model).
    DsoFirst,
    /// Transmission dispatches aggregated feeders first; feeders then follow
    /// the pinned exchanges.
    TsoFirst,
}

impl fmt::Display for DecisionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionSequence::DsoFirst => write!(f, "dso-first"),
            DecisionSequence::TsoFirst => write!(f, "tso-first"),
        }
    }
}

impl std::str::FromStr for DecisionSequence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dso-first" => Ok(DecisionSequence::DsoFirst),
            "tso-first" => Ok(DecisionSequence::TsoFirst),
            other => Err(format!(
                "unknown decision sequence `{other}` (expected dso-first or tso-first)"
            )),
        }
    }
}

/// Solver tolerances surfaced in scenario configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverTolerances {
    /// Max accepted constraint violation at reported solutions.
    pub feasibility: f64,
    /// Relative branch-and-bound optimality gap at termination.
    pub optimality_gap: f64,
    /// Cone residual above which the relaxation is flagged as not tight.
    pub cone_residual: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            feasibility: 1e-7,
            optimality_gap: 1e-5,
            cone_residual: 1e-5,
        }
    }
}

/// Horizon, prices, availability profiles, and solver-facing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of periods.
    pub horizon: usize,
    /// Period length, hours.
    pub step_hours: f64,
    /// Price of the cheap (PV-backed) import block per period, $/MWh.
    pub price_buy_cheap: Vec<f64>,
    /// Price of the expensive (thermal-backed) import block, $/MWh.
    pub price_buy_exp: Vec<f64>,
    /// Compensation for power sold to the grid, $/MWh.
    pub price_sell_grid: Vec<f64>,
    /// Transmission PV availability per period, MW at ratio 1.0.
    pub pv_avail_tn: Vec<f64>,
    /// Distribution PV availability per period, MW at ratio 1.0.
    pub pv_avail_dn: Vec<f64>,
    /// Big-M for complementarity switches in the transmission first-order
    /// block; `0.0` selects the certified per-row automatic value.
    pub big_m_tso: f64,
    /// Big-M for buyer/seller exclusivity gates; `0.0` selects the
    /// per-feeder automatic value.
    pub big_m_p2p: f64,
    /// Solver tolerances.
    pub tolerances: SolverTolerances,
    /// Who commits first.
    pub decision_sequence: DecisionSequence,
    /// Require end-of-horizon battery state ≥ the initial state.
    pub cyclic_soc: bool,
}

impl ScenarioConfig {
    /// An empty configuration with horizon `t` and flat zero prices/profiles
    /// (useful as a starting point in tests).
    pub fn flat(t: usize) -> Self {
        ScenarioConfig {
            horizon: t,
            step_hours: 1.0,
            price_buy_cheap: vec![0.0; t],
            price_buy_exp: vec![0.0; t],
            price_sell_grid: vec![0.0; t],
            pv_avail_tn: vec![0.0; t],
            pv_avail_dn: vec![0.0; t],
            big_m_tso: 0.0,
            big_m_p2p: 0.0,
            tolerances: SolverTolerances::default(),
            decision_sequence: DecisionSequence::DsoFirst,
            cyclic_soc: false,
        }
    }
}

/// A complete scenario: one transmission network, the attached feeders, and
/// the shared configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// The transmission network.
    pub tn: TransmissionNetwork,
    /// Attached distribution networks; position in this list is the ADN
    /// index used in variable keys and reports.
    pub adns: Vec<DistributionNetwork>,
    /// Shared configuration.
    pub cfg: ScenarioConfig,
}

impl Scenario {
    /// Validate the whole scenario; see [`validate_scenario`].
    pub fn validate(&self) -> ValidationReport {
        validate_scenario(&self.tn, &self.adns, &self.cfg)
    }
}

/// One violated invariant: where it was found and what is wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted path into the scenario, e.g. `adn[2].buses[5].battery`.
    pub path: String,
    /// Human-readable description of the violated invariant.
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Outcome of scenario validation: empty means pass.
///
/// Violations are data, not errors: callers decide whether to proceed.
/// Reports list violations in a deterministic order (scenario traversal
/// order), so validating twice yields identical reports.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    /// All violated invariants found.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// Whether the scenario satisfies every invariant.
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pass() {
            return write!(f, "scenario valid");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn check_profile(
    report: &mut ValidationReport,
    path: &str,
    name: &str,
    values: &[f64],
    horizon: usize,
) {
    if values.len() != horizon {
        report.push(
            format!("{path}.{name}"),
            format!("profile length {} ≠ horizon {}", values.len(), horizon),
        );
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        report.push(format!("{path}.{name}"), format!("non-finite entry {v}"));
    }
}

fn validate_tn(tn: &TransmissionNetwork, horizon: usize, report: &mut ValidationReport) {
    let ids: BTreeSet<u32> = tn.buses.iter().map(|b| b.id).collect();
    if ids.len() != tn.buses.len() {
        report.push("tn.buses", "duplicate bus ids");
    }
    if tn.buses.is_empty() {
        report.push("tn.buses", "empty bus set");
        return;
    }

    for (i, b) in tn.buses.iter().enumerate() {
        let path = format!("tn.buses[{i}]");
        check_profile(report, &path, "demand_profile", &b.demand_profile, horizon);
        check_profile(report, &path, "pg_max", &b.pg_max, horizon);
        if b.gen_cost.a < 0.0 {
            report.push(
                format!("{path}.gen_cost.a"),
                "negative quadratic cost breaks convexity",
            );
        }
        if !(0.0..=1.0).contains(&b.pv_capacity_ratio) {
            report.push(
                format!("{path}.pv_capacity_ratio"),
                format!("ratio {} outside [0, 1]", b.pv_capacity_ratio),
            );
        }
        if b.kt_bg_limit < 0.0 {
            report.push(format!("{path}.kt_bg_limit"), "negative purchase cap");
        }
        if b.demand_profile.iter().any(|&d| d < 0.0) {
            report.push(format!("{path}.demand_profile"), "negative demand");
        }
        if b.pg_max.iter().any(|&p| p < 0.0) {
            report.push(format!("{path}.pg_max"), "negative generation limit");
        }
    }

    for (i, l) in tn.lines.iter().enumerate() {
        let path = format!("tn.lines[{i}]");
        if !ids.contains(&l.from_bus) || !ids.contains(&l.to_bus) {
            report.push(&path, format!("endpoint {}–{} not a bus", l.from_bus, l.to_bus));
        }
        if l.reactance <= 0.0 {
            report.push(format!("{path}.reactance"), "must be > 0");
        }
        if l.flow_limit <= 0.0 {
            report.push(format!("{path}.flow_limit"), "must be > 0");
        }
    }

    // Connectivity over the undirected graph.
    let index: BTreeMap<u32, usize> = tn.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let mut adj = vec![Vec::new(); tn.buses.len()];
    for l in &tn.lines {
        if let (Some(&a), Some(&b)) = (index.get(&l.from_bus), index.get(&l.to_bus)) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; tn.buses.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        report.push("tn.lines", "transmission graph is not connected");
    }

    let boundary_set: BTreeSet<u32> = tn.boundary_bus_ids.iter().copied().collect();
    if boundary_set.len() != tn.boundary_bus_ids.len() {
        report.push("tn.boundary_bus_ids", "duplicate boundary ids");
    }
    for id in &tn.boundary_bus_ids {
        if !ids.contains(id) {
            report.push("tn.boundary_bus_ids", format!("bus {id} does not exist"));
        }
    }
    if tn.reference_bus_ids.is_empty() {
        report.push("tn.reference_bus_ids", "reference set is empty");
    }
    for id in &tn.reference_bus_ids {
        if !ids.contains(id) {
            report.push("tn.reference_bus_ids", format!("bus {id} does not exist"));
        }
    }

    // The transmission builder encodes boundary buses with exchange terms
    // only; reject scenarios that place demand or generation there.
    for (i, b) in tn.buses.iter().enumerate() {
        if boundary_set.contains(&b.id) {
            let busy = b.demand_profile.iter().any(|&d| d != 0.0)
                || b.pg_max.iter().any(|&p| p != 0.0)
                || b.pv_capacity_ratio != 0.0;
            if busy {
                report.push(
                    format!("tn.buses[{i}]"),
                    format!(
                        "boundary bus {} carries local demand/generation; move it or \
                         drop the bus from the boundary set",
                        b.id
                    ),
                );
            }
        }
    }
}

fn validate_dn(dn: &DistributionNetwork, idx: usize, horizon: usize, report: &mut ValidationReport) {
    let path0 = format!("adn[{idx}]");
    let ids: BTreeSet<u32> = dn.buses.iter().map(|b| b.id).collect();
    if ids.len() != dn.buses.len() {
        report.push(format!("{path0}.buses"), "duplicate bus ids");
    }
    if dn.s_base_mva <= 0.0 {
        report.push(format!("{path0}.s_base_mva"), "power base must be > 0");
    }

    for (i, b) in dn.buses.iter().enumerate() {
        let path = format!("{path0}.buses[{i}]");
        check_profile(report, &path, "demand", &b.demand, horizon);
        check_profile(report, &path, "reactive_demand", &b.reactive_demand, horizon);
        if b.qg_min > b.qg_max {
            report.push(format!("{path}.qg_min"), "lower reactive limit above upper");
        }
        if b.v_min_sq > b.v_max_sq || b.v_min_sq < 0.0 {
            report.push(format!("{path}.v_min_sq"), "invalid voltage window");
        }
        if !(0.0..=1.0).contains(&b.pv_capacity_ratio) {
            report.push(
                format!("{path}.pv_capacity_ratio"),
                format!("ratio {} outside [0, 1]", b.pv_capacity_ratio),
            );
        }
        if let Some(s) = &b.battery {
            let bpath = format!("{path}.battery");
            if !(0.0..=1.0).contains(&s.soc_min)
                || !(0.0..=1.0).contains(&s.soc_max)
                || s.soc_min > s.soc_max
            {
                report.push(&bpath, "state-of-charge window outside 0 ≤ min ≤ max ≤ 1");
            }
            if s.soc_initial_mwh < s.soc_lo_mwh() - 1e-12
                || s.soc_initial_mwh > s.soc_hi_mwh() + 1e-12
            {
                report.push(
                    format!("{bpath}.soc_initial_mwh"),
                    format!(
                        "initial state {} outside [{}, {}] MWh",
                        s.soc_initial_mwh,
                        s.soc_lo_mwh(),
                        s.soc_hi_mwh()
                    ),
                );
            }
            if !(s.eff_charge > 0.0 && s.eff_charge <= 1.0)
                || !(s.eff_discharge > 0.0 && s.eff_discharge <= 1.0)
            {
                report.push(&bpath, "efficiencies must lie in (0, 1]");
            }
            if s.capacity_mwh < 0.0 || s.rated_power_mw < 0.0 {
                report.push(&bpath, "negative capacity or rated power");
            }
        }
    }

    for (i, l) in dn.lines.iter().enumerate() {
        let path = format!("{path0}.lines[{i}]");
        if !ids.contains(&l.from_bus) || !ids.contains(&l.to_bus) {
            report.push(&path, format!("endpoint {}–{} not a bus", l.from_bus, l.to_bus));
        }
        if l.resistance < 0.0 || l.reactance < 0.0 {
            report.push(&path, "negative impedance");
        }
        if l.resistance == 0.0 && l.reactance == 0.0 {
            report.push(&path, "resistance and reactance both zero");
        }
        if l.current_sq_limit <= 0.0 {
            report.push(format!("{path}.current_sq_limit"), "must be > 0");
        }
    }

    // Sets: agents and boundary disjoint, both subsets of bus ids.
    let agents: BTreeSet<u32> = dn.agent_bus_ids.iter().copied().collect();
    let boundary: BTreeSet<u32> = dn.boundary_bus_ids.iter().copied().collect();
    for id in agents.intersection(&boundary) {
        report.push(
            format!("{path0}.agent_bus_ids"),
            format!("bus {id} is both agent and boundary"),
        );
    }
    for id in agents.union(&boundary) {
        if !ids.contains(id) {
            report.push(path0.to_string(), format!("designated bus {id} does not exist"));
        }
    }
    if dn.boundary_bus_ids.len() != 1 {
        report.push(
            format!("{path0}.boundary_bus_ids"),
            format!(
                "expected exactly one feeder head, found {}",
                dn.boundary_bus_ids.len()
            ),
        );
        return; // the radiality check below needs a root
    }
    for id in dn.caps.keys() {
        if !boundary.contains(id) {
            report.push(
                format!("{path0}.caps"),
                format!("caps keyed by non-boundary bus {id}"),
            );
        }
    }
    for (id, c) in &dn.caps {
        if c.sell_grid < 0.0 || c.buy_cheap < 0.0 || c.buy_exp < 0.0 {
            report.push(format!("{path0}.caps[{id}]"), "negative exchange cap");
        }
    }
    if let Some(root) = dn.boundary_bus_ids.first() {
        if !dn.caps.contains_key(root) {
            report.push(
                format!("{path0}.caps"),
                format!("no exchange caps for feeder head {root}"),
            );
        }
    }

    // Radiality: directed tree rooted at the feeder head, edges oriented
    // away from the root, every bus reachable.
    let root = dn.boundary_bus_ids[0];
    if !ids.contains(&root) {
        return;
    }
    let mut indegree: BTreeMap<u32, usize> = ids.iter().map(|&id| (id, 0)).collect();
    let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for l in &dn.lines {
        if ids.contains(&l.from_bus) && ids.contains(&l.to_bus) {
            *indegree.entry(l.to_bus).or_default() += 1;
            children.entry(l.from_bus).or_default().push(l.to_bus);
        }
    }
    let mut radial = dn.lines.len() + 1 == dn.buses.len() && indegree[&root] == 0;
    for (&id, &deg) in &indegree {
        if id != root && deg != 1 {
            radial = false;
        }
    }
    if radial {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        let mut stack = vec![root];
        seen.insert(root);
        while let Some(u) = stack.pop() {
            for &v in children.get(&u).into_iter().flatten() {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        radial = seen.len() == dn.buses.len();
    }
    if !radial {
        report.push(
            format!("{path0}.lines"),
            "non-radial topology: lines must form a tree rooted at the feeder \
             head, oriented away from it",
        );
    }
}

fn validate_cfg(cfg: &ScenarioConfig, report: &mut ValidationReport) {
    if cfg.horizon < 1 {
        report.push("cfg.horizon", "horizon must be ≥ 1");
    }
    if cfg.step_hours <= 0.0 {
        report.push("cfg.step_hours", "period length must be > 0");
    }
    let t = cfg.horizon;
    check_profile(report, "cfg", "price_buy_cheap", &cfg.price_buy_cheap, t);
    check_profile(report, "cfg", "price_buy_exp", &cfg.price_buy_exp, t);
    check_profile(report, "cfg", "price_sell_grid", &cfg.price_sell_grid, t);
    check_profile(report, "cfg", "pv_avail_tn", &cfg.pv_avail_tn, t);
    check_profile(report, "cfg", "pv_avail_dn", &cfg.pv_avail_dn, t);
    let n = t
        .min(cfg.price_buy_cheap.len())
        .min(cfg.price_buy_exp.len())
        .min(cfg.price_sell_grid.len());
    for i in 0..n {
        if !(cfg.price_sell_grid[i] <= cfg.price_buy_cheap[i]
            && cfg.price_buy_cheap[i] <= cfg.price_buy_exp[i])
        {
            report.push(
                format!("cfg.prices[t={i}]"),
                format!(
                    "price ordering violated: sell {} ≤ cheap {} ≤ expensive {} required",
                    cfg.price_sell_grid[i], cfg.price_buy_cheap[i], cfg.price_buy_exp[i]
                ),
            );
        }
    }
    if cfg.big_m_tso < 0.0 {
        report.push("cfg.big_m_tso", "must be ≥ 0 (0 = automatic)");
    }
    if cfg.big_m_p2p < 0.0 {
        report.push("cfg.big_m_p2p", "must be ≥ 0 (0 = automatic)");
    }
    if cfg.pv_avail_tn.iter().any(|&v| v < 0.0) || cfg.pv_avail_dn.iter().any(|&v| v < 0.0) {
        report.push("cfg.pv_avail", "negative availability");
    }
}

/// Check every structural and numeric invariant of a scenario.
///
/// Returns all violations found (empty = pass), each tagged with a dotted
/// path into the offending field. Validation is deterministic and pure;
/// a passing scenario never trips a model-builder precondition.
pub fn validate_scenario(
    tn: &TransmissionNetwork,
    adns: &[DistributionNetwork],
    cfg: &ScenarioConfig,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_cfg(cfg, &mut report);
    validate_tn(tn, cfg.horizon, &mut report);
    for (i, dn) in adns.iter().enumerate() {
        if !tn.boundary_bus_ids.contains(&dn.attachment_bus) {
            report.push(
                format!("adn[{i}].attachment_bus"),
                format!(
                    "unattached ADN: bus {} is not a transmission boundary bus",
                    dn.attachment_bus
                ),
            );
        }
        validate_dn(dn, i, cfg.horizon, &mut report);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_tn(t: usize) -> TransmissionNetwork {
        TransmissionNetwork {
            buses: vec![
                TnBus {
                    id: 1,
                    demand_profile: vec![0.0; t],
                    gen_cost: GenCost { a: 0.01, b: 10.0, c: 0.0 },
                    pg_max: vec![100.0; t],
                    pv_marginal_cost: 0.0,
                    pv_capacity_ratio: 0.0,
                    kt_bg_limit: 0.0,
                },
                TnBus {
                    id: 2,
                    demand_profile: vec![30.0; t],
                    gen_cost: GenCost::ZERO,
                    pg_max: vec![0.0; t],
                    pv_marginal_cost: 0.0,
                    pv_capacity_ratio: 0.0,
                    kt_bg_limit: 0.0,
                },
                TnBus {
                    id: 3,
                    demand_profile: vec![0.0; t],
                    gen_cost: GenCost::ZERO,
                    pg_max: vec![0.0; t],
                    pv_marginal_cost: 0.0,
                    pv_capacity_ratio: 0.0,
                    kt_bg_limit: 20.0,
                },
            ],
            lines: vec![
                TnLine { from_bus: 1, to_bus: 2, reactance: 0.1, flow_limit: 80.0 },
                TnLine { from_bus: 2, to_bus: 3, reactance: 0.1, flow_limit: 80.0 },
            ],
            boundary_bus_ids: vec![3],
            reference_bus_ids: vec![1],
        }
    }

    fn mini_dn(t: usize, attach: u32) -> DistributionNetwork {
        let mut caps = BTreeMap::new();
        caps.insert(0, ExchangeCaps { sell_grid: 5.0, buy_cheap: 5.0, buy_exp: 5.0 });
        DistributionNetwork {
            attachment_bus: attach,
            label: "dn-test".into(),
            buses: vec![
                DnBus {
                    id: 0,
                    demand: vec![0.0; t],
                    reactive_demand: vec![0.0; t],
                    qg_min: -5.0,
                    qg_max: 5.0,
                    v_min_sq: 1.0,
                    v_max_sq: 1.0,
                    pv_capacity_ratio: 0.0,
                    battery: None,
                },
                DnBus {
                    id: 1,
                    demand: vec![1.0; t],
                    reactive_demand: vec![0.3; t],
                    qg_min: 0.0,
                    qg_max: 0.0,
                    v_min_sq: 0.81,
                    v_max_sq: 1.21,
                    pv_capacity_ratio: 0.1,
                    battery: Some(BessSpec {
                        installed: true,
                        capacity_mwh: 2.0,
                        rated_power_mw: 0.5,
                        soc_min: 0.1,
                        soc_max: 0.9,
                        eff_charge: 0.95,
                        eff_discharge: 0.9,
                        soc_initial_mwh: 0.2,
                    }),
                },
            ],
            lines: vec![DnLine {
                from_bus: 0,
                to_bus: 1,
                resistance: 0.01,
                reactance: 0.005,
                current_sq_limit: 1.0,
            }],
            agent_bus_ids: vec![1],
            boundary_bus_ids: vec![0],
            caps,
            s_base_mva: 10.0,
        }
    }

    fn mini_cfg(t: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::flat(t);
        cfg.price_buy_cheap = vec![30.0; t];
        cfg.price_buy_exp = vec![50.0; t];
        cfg.price_sell_grid = vec![24.0; t];
        cfg
    }

    #[test]
    fn valid_scenario_passes() {
        let report = validate_scenario(&mini_tn(4), &[mini_dn(4, 3)], &mini_cfg(4));
        assert!(report.pass(), "{report}");
    }

    #[test]
    fn unattached_adn_is_flagged() {
        let report = validate_scenario(&mini_tn(4), &[mini_dn(4, 2)], &mini_cfg(4));
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("unattached ADN")));
    }

    #[test]
    fn cycle_is_non_radial() {
        let mut dn = mini_dn(4, 3);
        dn.lines.push(DnLine {
            from_bus: 1,
            to_bus: 0,
            resistance: 0.01,
            reactance: 0.005,
            current_sq_limit: 1.0,
        });
        let report = validate_scenario(&mini_tn(4), &[dn], &mini_cfg(4));
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("non-radial")));
    }

    #[test]
    fn price_ordering_is_enforced() {
        let mut cfg = mini_cfg(4);
        cfg.price_sell_grid[2] = 60.0; // above the expensive import price
        let report = validate_scenario(&mini_tn(4), &[], &cfg);
        assert!(report
            .violations
            .iter()
            .any(|v| v.path == "cfg.prices[t=2]"));
    }

    #[test]
    fn battery_initial_state_window() {
        let mut dn = mini_dn(4, 3);
        dn.buses[1].battery.as_mut().unwrap().soc_initial_mwh = 5.0;
        let report = validate_scenario(&mini_tn(4), &[dn], &mini_cfg(4));
        assert!(report
            .violations
            .iter()
            .any(|v| v.path.contains("soc_initial_mwh")));
    }

    #[test]
    fn disconnected_tn_is_flagged() {
        let mut tn = mini_tn(4);
        tn.lines.pop(); // strands bus 3
        let report = validate_scenario(&tn, &[], &mini_cfg(4));
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("not connected")));
    }

    #[test]
    fn busy_boundary_bus_is_rejected() {
        let mut tn = mini_tn(4);
        tn.buses[2].demand_profile = vec![1.0; 4];
        let report = validate_scenario(&tn, &[], &mini_cfg(4));
        assert!(report
            .violations
            .iter()
            .any(|v| v.message.contains("boundary bus 3")));
    }

    #[test]
    fn validation_is_deterministic() {
        let mut dn = mini_dn(4, 2); // wrong attachment on purpose
        dn.buses[1].battery.as_mut().unwrap().eff_charge = 1.5;
        let a = validate_scenario(&mini_tn(4), &[dn.clone()], &mini_cfg(4));
        let b = validate_scenario(&mini_tn(4), &[dn], &mini_cfg(4));
        assert_eq!(a, b);
        assert!(!a.pass());
    }

    #[test]
    fn peak_helpers() {
        let tn = mini_tn(4);
        assert_eq!(tn.peak_demand(), 30.0);
        assert_eq!(tn.thermal_capacity(), 100.0);
        let dn = mini_dn(4, 3);
        assert_eq!(dn.peak_demand(), 1.0);
        assert_eq!(dn.bess_capacity_mwh(), 2.0);
        assert_eq!(dn.head_bus(), 0);
    }
}
