//! Stable identifiers for model variables and constraint rows.
//!
//! Every variable and row in a [`crate::model::ConicModel`] carries a [`Key`]
//! naming what it represents: which network element, which period, which
//! constraint family. Keys serve three purposes:
//!
//! * diagnostics — feasibility and audit reports point at offending rows by
//!   key rather than by bare index;
//! * mechanical duality — the first-order-condition deriver mirrors row keys
//!   into dual-variable keys and variable keys into stationarity-row keys;
//! * deterministic reporting — keys order and format identically across runs.
//!
//! Index conventions: `bus` is the external bus id from the case file, `adn`
//! is the 0-based position of the distribution network in the scenario's ADN
//! list (several ADNs may share one transmission attachment point, so the
//! attachment bus id is not a unique ADN identity), `line` is the 0-based
//! line index within its network, and `t` is the 0-based period index.

use std::fmt;

/// Exchange block classes at a boundary bus, named from the transmission
/// side: `Buy` is power the transmission operator purchases from the ADN,
/// `SellCheap`/`SellExp` are the PV-backed and thermal-backed sale blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExchangeClass {
    /// Transmission-side purchase (the ADN exports).
    Buy,
    /// PV-backed sale to the ADN (the ADN's cheap import block).
    SellCheap,
    /// Thermal-backed sale to the ADN (the ADN's expensive import block).
    SellExp,
}

impl fmt::Display for ExchangeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExchangeClass::Buy => write!(f, "buy"),
            ExchangeClass::SellCheap => write!(f, "sell_cheap"),
            ExchangeClass::SellExp => write!(f, "sell_exp"),
        }
    }
}

/// Identifier for a model variable or constraint row.
///
/// Variants are grouped by model layer; see the module docs for index
/// conventions. The `Display` form is the canonical spelling used in reports
/// and logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    // ------------------------------------------------------------------
    // Transmission variables
    // ------------------------------------------------------------------
    /// Thermal generator output [MW].
    TnPg {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Utility PV output [MW].
    TnPv {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Power purchased from the ADN at a boundary bus [MW].
    TnPkBuy {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// PV-backed power sold to the ADN at a boundary bus [MW].
    TnPkSellCheap {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Thermal-backed power sold to the ADN at a boundary bus [MW].
    TnPkSellExp {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Bus voltage angle [rad].
    TnTheta {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Signed active power flow on a line, oriented from the line's first
    /// endpoint to its second [MW].
    TnFlow {
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },

    // ------------------------------------------------------------------
    // Transmission equality rows
    // ------------------------------------------------------------------
    /// Active power balance at a non-boundary bus.
    TnBalanceInterior {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Active power balance at a boundary bus (exchange terms only).
    TnBalanceBoundary {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Flow definition `x·p - θ_from + θ_to = 0`.
    TnFlowDef {
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },
    /// Reference bus angle pinned to zero.
    TnRefAngle {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Boundary exchange variable pinned to the leader's value.
    TnBoundaryPin {
        /// Exchange block class.
        class: ExchangeClass,
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },

    // ------------------------------------------------------------------
    // Transmission inequality rows
    // ------------------------------------------------------------------
    /// Flow upper limit `p ≤ s_max`.
    TnFlowUb {
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },
    /// Flow lower limit `-p ≤ s_max`.
    TnFlowLb {
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },
    /// Thermal output cap.
    TnPgUb {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// PV output cap.
    TnPvUb {
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Pooled cap: total PV-backed sales ≤ total PV output.
    TnPoolCheap {
        /// Period.
        t: u32,
    },
    /// Pooled cap: total thermal-backed sales ≤ total thermal output.
    TnPoolExp {
        /// Period.
        t: u32,
    },
    /// Per-bus cap on purchases from the ADN.
    TnBuyCap {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Nonnegativity of a power variable, kept as a tagged row so it carries
    /// a multiplier in the first-order-condition system.
    TnVarLb {
        /// Variable id within the same program.
        var: u32,
    },

    // ------------------------------------------------------------------
    // Distribution (ADN) variables
    // ------------------------------------------------------------------
    /// Sending-end active flow on a feeder line [MW].
    DnFlowP {
        /// Attachment (boundary bus) id.
        adn: u32,
        /// Line index within the feeder.
        line: u32,
        /// Period.
        t: u32,
    },
    /// Sending-end reactive flow on a feeder line [MVAr].
    DnFlowQ {
        /// Attachment id.
        adn: u32,
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },
    /// Squared current magnitude on a feeder line [MW²/pu²-scale].
    DnCurrentSq {
        /// Attachment id.
        adn: u32,
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },
    /// Squared voltage magnitude at a feeder bus [pu²].
    DnVoltSq {
        /// Attachment id.
        adn: u32,
        /// Bus id within the feeder.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Reactive support injection at a feeder bus [MVAr].
    DnQGen {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Rooftop PV output at an agent bus [MW].
    DnPv {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Battery charging power [MW].
    DnCharge {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Battery discharging power [MW].
    DnDischarge {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Battery state of charge at the end of a period [MWh].
    DnSoc {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Agent net injection Δp = pv − load − charge + discharge [MW].
    DnNetInj {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Nonnegative surplus part of the agent net injection [MW].
    DnSurplus {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Nonnegative deficit part of the agent net injection [MW].
    DnDeficit {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Power sold into the local peer-to-peer market [MW].
    DnSellMarket {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Power bought from the local peer-to-peer market [MW].
    DnBuyMarket {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Agent power sold upward through the feeder head [MW].
    DnSellGrid {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Agent power bought from the upstream grid [MW].
    DnBuyGrid {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// ADN export to the transmission grid [MW] (leader variable).
    DnPkExport {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// ADN cheap-block import [MW] (leader variable).
    DnPkImportCheap {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// ADN expensive-block import [MW] (leader variable).
    DnPkImportExp {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// Battery mode binary: 1 = charging allowed, 0 = discharging allowed.
    DnBessMode {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Trade role binary: 1 = net seller, 0 = net buyer.
    DnTradeRole {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },

    // ------------------------------------------------------------------
    // Distribution rows
    // ------------------------------------------------------------------
    /// Active branch-flow balance at a feeder bus.
    DnActiveBalance {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Reactive branch-flow balance at a feeder bus.
    DnReactiveBalance {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Definition of the agent net injection.
    DnNetInjDef {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Split of the net injection into surplus and deficit parts.
    DnNetSplit {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Split of the surplus into upstream and local sale channels.
    DnSurplusChannels {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Split of the deficit into upstream and local purchase channels.
    DnDeficitChannels {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Net injection at the feeder head from boundary exchanges.
    DnBoundaryInjDef {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// Voltage drop along a feeder line.
    DnVoltDrop {
        /// Attachment id.
        adn: u32,
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },
    /// Initial state-of-charge condition (end of first period).
    DnSocInit {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
    },
    /// State-of-charge recursion step producing the state at `t`.
    DnSocStep {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period whose end state the row defines (1-based within horizon).
        t: u32,
    },
    /// Optional cyclic condition: final state ≥ initial state.
    DnSocCyclic {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
    },
    /// Local market clearing: Σ sell_market = Σ buy_market.
    DnMarketClear {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// Export clearing: Σ sell_grid = pk_export.
    DnExportClear {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// Import clearing: Σ buy_grid = pk_import_cheap + pk_import_exp.
    DnImportClear {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// PV availability cap at an agent bus.
    DnPvCap {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Charging power gated by the battery mode binary.
    DnChargeGate {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Discharging power gated by the battery mode binary.
    DnDischargeGate {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Surplus gated by the trade role binary.
    DnSurplusGate {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Deficit gated by the complement of the trade role binary.
    DnDeficitGate {
        /// Attachment id.
        adn: u32,
        /// Bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Cap on the ADN export block.
    DnExportCap {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// Cap on the ADN cheap import block.
    DnImportCheapCap {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// Cap on the ADN expensive import block.
    DnImportExpCap {
        /// Attachment id.
        adn: u32,
        /// Period.
        t: u32,
    },
    /// Second-order cone `ℓ·v_sending ≥ p² + q²` for a feeder line.
    DnConeFlow {
        /// Attachment id.
        adn: u32,
        /// Line index.
        line: u32,
        /// Period.
        t: u32,
    },

    // ------------------------------------------------------------------
    // First-order-condition layer (single-level model)
    // ------------------------------------------------------------------
    /// Multiplier of a transmission equality row (free).
    DualEq {
        /// Equality row id within the transmission program.
        row: u32,
    },
    /// Multiplier of a transmission inequality row (nonnegative).
    DualIneq {
        /// Inequality row id within the transmission program.
        row: u32,
    },
    /// Stationarity row for a transmission variable.
    Stationarity {
        /// Variable id within the transmission program.
        var: u32,
    },
    /// Complementarity switch binary for a transmission inequality row.
    CompBinary {
        /// Inequality row id within the transmission program.
        row: u32,
    },
    /// Big-M row bounding the slack of an inequality when its switch is off.
    CompSlack {
        /// Inequality row id within the transmission program.
        row: u32,
    },
    /// Big-M row bounding the multiplier when its switch is on.
    CompDual {
        /// Inequality row id within the transmission program.
        row: u32,
    },

    // ------------------------------------------------------------------
    // Follower-first stage-1 extensions (lumped ADN at a boundary bus)
    // ------------------------------------------------------------------
    /// Lumped ADN PV output at a boundary bus [MW].
    LumpPv {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped ADN battery charging [MW].
    LumpCharge {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped ADN battery discharging [MW].
    LumpDischarge {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped ADN battery state of charge [MWh].
    LumpSoc {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped ADN battery mode binary.
    LumpBessMode {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped ADN node balance linking DERs to the exchange blocks.
    LumpBalance {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped PV availability cap.
    LumpPvCap {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped charging gate.
    LumpChargeGate {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped discharging gate.
    LumpDischargeGate {
        /// Boundary bus id.
        bus: u32,
        /// Period.
        t: u32,
    },
    /// Lumped initial state-of-charge condition.
    LumpSocInit {
        /// Boundary bus id.
        bus: u32,
    },
    /// Lumped state-of-charge recursion step.
    LumpSocStep {
        /// Boundary bus id.
        bus: u32,
        /// Period whose end state the row defines.
        t: u32,
    },
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Key::*;
        match *self {
            TnPg { bus, t } => write!(f, "tn.pg[b{bus},t{t}]"),
            TnPv { bus, t } => write!(f, "tn.pv[b{bus},t{t}]"),
            TnPkBuy { bus, t } => write!(f, "tn.pk_buy[b{bus},t{t}]"),
            TnPkSellCheap { bus, t } => write!(f, "tn.pk_sell_cheap[b{bus},t{t}]"),
            TnPkSellExp { bus, t } => write!(f, "tn.pk_sell_exp[b{bus},t{t}]"),
            TnTheta { bus, t } => write!(f, "tn.theta[b{bus},t{t}]"),
            TnFlow { line, t } => write!(f, "tn.flow[l{line},t{t}]"),
            TnBalanceInterior { bus, t } => write!(f, "tn.balance[b{bus},t{t}]"),
            TnBalanceBoundary { bus, t } => write!(f, "tn.balance_boundary[b{bus},t{t}]"),
            TnFlowDef { line, t } => write!(f, "tn.flow_def[l{line},t{t}]"),
            TnRefAngle { bus, t } => write!(f, "tn.ref_angle[b{bus},t{t}]"),
            TnBoundaryPin { class, bus, t } => write!(f, "tn.pin_{class}[b{bus},t{t}]"),
            TnFlowUb { line, t } => write!(f, "tn.flow_ub[l{line},t{t}]"),
            TnFlowLb { line, t } => write!(f, "tn.flow_lb[l{line},t{t}]"),
            TnPgUb { bus, t } => write!(f, "tn.pg_ub[b{bus},t{t}]"),
            TnPvUb { bus, t } => write!(f, "tn.pv_ub[b{bus},t{t}]"),
            TnPoolCheap { t } => write!(f, "tn.pool_cheap[t{t}]"),
            TnPoolExp { t } => write!(f, "tn.pool_exp[t{t}]"),
            TnBuyCap { bus, t } => write!(f, "tn.buy_cap[b{bus},t{t}]"),
            TnVarLb { var } => write!(f, "tn.var_lb[v{var}]"),
            DnFlowP { adn, line, t } => write!(f, "dn{adn}.p[l{line},t{t}]"),
            DnFlowQ { adn, line, t } => write!(f, "dn{adn}.q[l{line},t{t}]"),
            DnCurrentSq { adn, line, t } => write!(f, "dn{adn}.isq[l{line},t{t}]"),
            DnVoltSq { adn, bus, t } => write!(f, "dn{adn}.vsq[b{bus},t{t}]"),
            DnQGen { adn, bus, t } => write!(f, "dn{adn}.qg[b{bus},t{t}]"),
            DnPv { adn, bus, t } => write!(f, "dn{adn}.pv[b{bus},t{t}]"),
            DnCharge { adn, bus, t } => write!(f, "dn{adn}.ch[b{bus},t{t}]"),
            DnDischarge { adn, bus, t } => write!(f, "dn{adn}.ds[b{bus},t{t}]"),
            DnSoc { adn, bus, t } => write!(f, "dn{adn}.soc[b{bus},t{t}]"),
            DnNetInj { adn, bus, t } => write!(f, "dn{adn}.dp[b{bus},t{t}]"),
            DnSurplus { adn, bus, t } => write!(f, "dn{adn}.dp_pos[b{bus},t{t}]"),
            DnDeficit { adn, bus, t } => write!(f, "dn{adn}.dp_neg[b{bus},t{t}]"),
            DnSellMarket { adn, bus, t } => write!(f, "dn{adn}.sell_mkt[b{bus},t{t}]"),
            DnBuyMarket { adn, bus, t } => write!(f, "dn{adn}.buy_mkt[b{bus},t{t}]"),
            DnSellGrid { adn, bus, t } => write!(f, "dn{adn}.sell_grid[b{bus},t{t}]"),
            DnBuyGrid { adn, bus, t } => write!(f, "dn{adn}.buy_grid[b{bus},t{t}]"),
            DnPkExport { adn, t } => write!(f, "dn{adn}.pk_export[t{t}]"),
            DnPkImportCheap { adn, t } => write!(f, "dn{adn}.pk_import_cheap[t{t}]"),
            DnPkImportExp { adn, t } => write!(f, "dn{adn}.pk_import_exp[t{t}]"),
            DnBessMode { adn, bus, t } => write!(f, "dn{adn}.w[b{bus},t{t}]"),
            DnTradeRole { adn, bus, t } => write!(f, "dn{adn}.y[b{bus},t{t}]"),
            DnActiveBalance { adn, bus, t } => write!(f, "dn{adn}.bal_p[b{bus},t{t}]"),
            DnReactiveBalance { adn, bus, t } => write!(f, "dn{adn}.bal_q[b{bus},t{t}]"),
            DnNetInjDef { adn, bus, t } => write!(f, "dn{adn}.dp_def[b{bus},t{t}]"),
            DnNetSplit { adn, bus, t } => write!(f, "dn{adn}.dp_split[b{bus},t{t}]"),
            DnSurplusChannels { adn, bus, t } => {
                write!(f, "dn{adn}.dp_pos_channels[b{bus},t{t}]")
            }
            DnDeficitChannels { adn, bus, t } => {
                write!(f, "dn{adn}.dp_neg_channels[b{bus},t{t}]")
            }
            DnBoundaryInjDef { adn, t } => write!(f, "dn{adn}.head_inj[t{t}]"),
            DnVoltDrop { adn, line, t } => write!(f, "dn{adn}.vdrop[l{line},t{t}]"),
            DnSocInit { adn, bus } => write!(f, "dn{adn}.soc_init[b{bus}]"),
            DnSocStep { adn, bus, t } => write!(f, "dn{adn}.soc_step[b{bus},t{t}]"),
            DnSocCyclic { adn, bus } => write!(f, "dn{adn}.soc_cyclic[b{bus}]"),
            DnMarketClear { adn, t } => write!(f, "dn{adn}.market_clear[t{t}]"),
            DnExportClear { adn, t } => write!(f, "dn{adn}.export_clear[t{t}]"),
            DnImportClear { adn, t } => write!(f, "dn{adn}.import_clear[t{t}]"),
            DnPvCap { adn, bus, t } => write!(f, "dn{adn}.pv_cap[b{bus},t{t}]"),
            DnChargeGate { adn, bus, t } => write!(f, "dn{adn}.ch_gate[b{bus},t{t}]"),
            DnDischargeGate { adn, bus, t } => write!(f, "dn{adn}.ds_gate[b{bus},t{t}]"),
            DnSurplusGate { adn, bus, t } => write!(f, "dn{adn}.dp_pos_gate[b{bus},t{t}]"),
            DnDeficitGate { adn, bus, t } => write!(f, "dn{adn}.dp_neg_gate[b{bus},t{t}]"),
            DnExportCap { adn, t } => write!(f, "dn{adn}.export_cap[t{t}]"),
            DnImportCheapCap { adn, t } => write!(f, "dn{adn}.import_cheap_cap[t{t}]"),
            DnImportExpCap { adn, t } => write!(f, "dn{adn}.import_exp_cap[t{t}]"),
            DnConeFlow { adn, line, t } => write!(f, "dn{adn}.cone[l{line},t{t}]"),
            DualEq { row } => write!(f, "dual.eq[r{row}]"),
            DualIneq { row } => write!(f, "dual.ineq[r{row}]"),
            Stationarity { var } => write!(f, "kkt.stationarity[v{var}]"),
            CompBinary { row } => write!(f, "kkt.alpha[r{row}]"),
            CompSlack { row } => write!(f, "kkt.comp_slack[r{row}]"),
            CompDual { row } => write!(f, "kkt.comp_dual[r{row}]"),
            LumpPv { bus, t } => write!(f, "lump{bus}.pv[t{t}]"),
            LumpCharge { bus, t } => write!(f, "lump{bus}.ch[t{t}]"),
            LumpDischarge { bus, t } => write!(f, "lump{bus}.ds[t{t}]"),
            LumpSoc { bus, t } => write!(f, "lump{bus}.soc[t{t}]"),
            LumpBessMode { bus, t } => write!(f, "lump{bus}.w[t{t}]"),
            LumpBalance { bus, t } => write!(f, "lump{bus}.balance[t{t}]"),
            LumpPvCap { bus, t } => write!(f, "lump{bus}.pv_cap[t{t}]"),
            LumpChargeGate { bus, t } => write!(f, "lump{bus}.ch_gate[t{t}]"),
            LumpDischargeGate { bus, t } => write!(f, "lump{bus}.ds_gate[t{t}]"),
            LumpSocInit { bus } => write!(f, "lump{bus}.soc_init"),
            LumpSocStep { bus, t } => write!(f, "lump{bus}.soc_step[t{t}]"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_forms_are_stable() {
        assert_eq!(Key::TnPg { bus: 5, t: 3 }.to_string(), "tn.pg[b5,t3]");
        assert_eq!(
            Key::TnBoundaryPin {
                class: ExchangeClass::SellCheap,
                bus: 12,
                t: 0
            }
            .to_string(),
            "tn.pin_sell_cheap[b12,t0]"
        );
        assert_eq!(
            Key::DnConeFlow {
                adn: 7,
                line: 31,
                t: 23
            }
            .to_string(),
            "dn7.cone[l31,t23]"
        );
        assert_eq!(Key::Stationarity { var: 9 }.to_string(), "kkt.stationarity[v9]");
    }

    #[test]
    fn keys_order_deterministically() {
        let mut keys = [
            Key::TnPv { bus: 1, t: 0 },
            Key::TnPg { bus: 2, t: 0 },
            Key::TnPg { bus: 1, t: 1 },
            Key::TnPg { bus: 1, t: 0 },
        ];
        keys.sort();
        assert_eq!(keys[0], Key::TnPg { bus: 1, t: 0 });
        assert_eq!(keys[1], Key::TnPg { bus: 1, t: 1 });
        assert_eq!(keys[2], Key::TnPg { bus: 2, t: 0 });
        assert_eq!(keys[3], Key::TnPv { bus: 1, t: 0 });
    }
}
