//! Case loading: parse network tables, synthesize per-period profiles,
//! scale the feeder template to per-attachment targets, bootstrap price
//! signals from a reference transmission dispatch, and assemble a validated
//! [`Scenario`].
//!
//! The pipeline behind [`load_case`]:
//!
//! 1. Parse the transmission and feeder case files ([`caseformat`]).
//! 2. Synthesize the demand/PV profile family ([`profiles`]) and assign
//!    demand curves cyclically: a network's demand buses, ordered by
//!    ascending id, take curves `0, 1, …` modulo the family size.
//! 3. Build the transmission network. Thermal units listed in
//!    [`CaseBundle::pv_buses`] become utility PV plants of the same rated
//!    capacity; loads at exchange (`bnd`) buses are zeroed (the attached
//!    feeders replace them); remaining loads are profiled and, when
//!    [`CaseBundle::tn_peak_mw`] is set, uniformly rescaled so the
//!    transmission aggregate peak hits that target. Branch reactances are
//!    divided by the system base so flows are in MW and angles in radians.
//! 4. Build one feeder per [`Attachment`] by scaling the template
//!    ([`scale_adn`]): demands to the aggregate peak target, PV capacity
//!    and battery energy spread over every other agent bus.
//! 5. Derive exchange caps: a feeder may import up to 1.5× its peak in
//!    either price block and export up to its installed PV; each boundary
//!    bus may buy up to 1.5× the total peak attached there.
//! 6. Bootstrap the three price signals from a zero-exchange reference
//!    dispatch: the expensive block tracks the per-period maximum nodal
//!    price, the cheap block is the PV marginal cost plus a strictly
//!    increasing 1e-3 $/MWh·period tie-break, and the feed-in rate is 80%
//!    of the cheap block.
//! 7. Validate everything and return the scenario.

pub mod caseformat;
pub mod profiles;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{
    BessSpec, DecisionSequence, DistributionNetwork, DnBus, DnLine, ExchangeCaps, GenCost,
    Scenario, ScenarioConfig, SolverTolerances, TnBus, TnLine, TransmissionNetwork,
    ValidationReport,
};
use crate::solver::{ClarabelSolver, SolveSettings};
use crate::tn;

pub use caseformat::{CaseError, ParseError, SchemaError};
pub use profiles::{synthesize_profiles, ProfileSet, ProfileSpec, PROFILE_VERSION};

/// Import caps default to this multiple of the feeder's peak load; the same
/// factor caps what a boundary bus may buy from all feeders attached there.
pub const CAP_PEAK_FACTOR: f64 = 1.5;
/// Per-period increment of the cheap-block price, $/MWh. Strictly orders
/// otherwise-equal purchase periods so storage schedules are unique.
pub const CHEAP_PRICE_TILT: f64 = 1e-3;
/// Feed-in rate as a fraction of the cheap-block price.
pub const SELL_PRICE_FACTOR: f64 = 0.8;

/// One feeder instance: where it attaches and its scaling targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    /// Transmission boundary bus to attach to.
    pub bus: u32,
    /// Aggregate peak demand after scaling, MW.
    pub peak_mw: f64,
    /// Installed PV capacity, MW.
    pub pv_mw: f64,
    /// Installed battery energy, MWh.
    pub bess_mwh: f64,
}

fn d_horizon() -> usize {
    24
}
fn d_step() -> f64 {
    1.0
}
fn d_pv_cost() -> f64 {
    0.5
}
fn d_sequence() -> DecisionSequence {
    DecisionSequence::DsoFirst
}

/// Recipe for building a scenario from case files; serializable as TOML
/// (attachments as `[[attach]]` tables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseBundle {
    /// Transmission case file.
    pub tn_file: String,
    /// Feeder template case file.
    pub adn_template: String,
    /// Feeder instances; list order is the ADN ordinal used in reports.
    #[serde(default)]
    pub attach: Vec<Attachment>,
    /// Profile family parameters.
    #[serde(default)]
    pub profiles: ProfileSpec,
    /// Number of periods.
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    /// Period length, hours.
    #[serde(default = "d_step")]
    pub step_hours: f64,
    /// Thermal units at these transmission buses become PV plants of the
    /// same rated capacity.
    #[serde(default)]
    pub pv_buses: Vec<u32>,
    /// Marginal cost of utility PV, $/MWh; also the cheap-block base price.
    #[serde(default = "d_pv_cost")]
    pub pv_marginal_cost: f64,
    /// Rescale interior transmission load so the aggregate peak equals
    /// this, MW.
    #[serde(default)]
    pub tn_peak_mw: Option<f64>,
    /// Require end-of-horizon battery state ≥ the initial state.
    #[serde(default)]
    pub cyclic_soc: bool,
    /// Who commits first.
    #[serde(default = "d_sequence")]
    pub decision_sequence: DecisionSequence,
}

/// Device targets that the placement rule cannot realize.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct AllocationError(pub String);

/// Everything that can go wrong turning files into a scenario.
#[derive(Debug, Error)]
pub enum IngestError {
    /// Malformed case text.
    #[error("{file}: {err}")]
    Parse {
        /// Offending file.
        file: String,
        /// Location and cause.
        err: ParseError,
    },
    /// Structurally incomplete case text.
    #[error("{file}: {err}")]
    Schema {
        /// Offending file.
        file: String,
        /// What is missing.
        err: SchemaError,
    },
    /// Device placement cannot hit a target.
    #[error("allocation: {0}")]
    Allocation(#[from] AllocationError),
    /// The assembled scenario violates a domain invariant.
    #[error("scenario failed validation:\n{0}")]
    Validation(ValidationReport),
    /// The reference dispatch behind the price defaults failed.
    #[error("price bootstrap: {0}")]
    Bootstrap(String),
    /// Bundle-level inconsistency (bad targets, unusable fields).
    #[error("bundle: {0}")]
    Bundle(String),
    /// Filesystem failure.
    #[error("{file}: {err}")]
    Io {
        /// Offending file.
        file: String,
        /// Underlying error.
        err: std::io::Error,
    },
}

fn case_err(file: &str, err: CaseError) -> IngestError {
    match err {
        CaseError::Parse(err) => IngestError::Parse { file: file.to_string(), err },
        CaseError::Schema(err) => IngestError::Schema { file: file.to_string(), err },
    }
}

// ---------------------------------------------------------------------------
// Bundle and scenario I/O
// ---------------------------------------------------------------------------

/// Read a bundle from TOML, resolving relative case-file paths against the
/// bundle's own directory.
pub fn load_bundle(path: &Path) -> Result<CaseBundle, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|err| IngestError::Io {
        file: path.display().to_string(),
        err,
    })?;
    let mut bundle: CaseBundle =
        toml::from_str(&text).map_err(|e| IngestError::Bundle(e.to_string()))?;
    if let Some(dir) = path.parent() {
        for file in [&mut bundle.tn_file, &mut bundle.adn_template] {
            if Path::new(file.as_str()).is_relative() {
                *file = dir.join(file.as_str()).display().to_string();
            }
        }
    }
    Ok(bundle)
}

/// Serialize a bundle as TOML.
pub fn bundle_to_toml(bundle: &CaseBundle) -> String {
    toml::to_string_pretty(bundle).expect("bundles always serialize")
}

/// Serialize a full scenario as TOML.
pub fn scenario_to_toml(scenario: &Scenario) -> String {
    toml::to_string_pretty(scenario).expect("scenarios always serialize")
}

/// Parse a scenario from TOML and validate it.
pub fn scenario_from_toml(text: &str) -> Result<Scenario, IngestError> {
    let scenario: Scenario =
        toml::from_str(text).map_err(|e| IngestError::Bundle(e.to_string()))?;
    let report = scenario.validate();
    if !report.pass() {
        return Err(IngestError::Validation(report));
    }
    Ok(scenario)
}

/// Load and assemble the scenario a bundle describes.
pub fn load_case(bundle: &CaseBundle) -> Result<Scenario, IngestError> {
    let read = |file: &str| {
        std::fs::read_to_string(file).map_err(|err| IngestError::Io { file: file.to_string(), err })
    };
    let tn_text = read(&bundle.tn_file)?;
    let dn_text = read(&bundle.adn_template)?;
    build_scenario(bundle, &tn_text, &dn_text)
}

// ---------------------------------------------------------------------------
// Scenario assembly
// ---------------------------------------------------------------------------

/// Assemble a scenario from already-read case texts (the pure core of
/// [`load_case`]).
pub fn build_scenario(
    bundle: &CaseBundle,
    tn_text: &str,
    dn_text: &str,
) -> Result<Scenario, IngestError> {
    if bundle.horizon == 0 {
        return Err(IngestError::Bundle("horizon must be at least 1".into()));
    }
    let raw_tn = caseformat::parse_tn_case(tn_text).map_err(|e| case_err(&bundle.tn_file, e))?;
    let raw_dn = caseformat::parse_dn_case(dn_text)
        .map_err(|e| case_err(&bundle.adn_template, e))?;
    let profs = synthesize_profiles(&bundle.profiles, bundle.horizon);

    let mut tn = build_tn(&raw_tn, bundle, &profs)?;
    let template = profiled_template(&raw_dn, bundle, &profs)?;

    let pv_base_dn = bundle
        .attach
        .iter()
        .map(|a| a.pv_mw)
        .fold(0.0, f64::max);

    let mut adns = Vec::with_capacity(bundle.attach.len());
    let mut peak_at_bus: BTreeMap<u32, f64> = BTreeMap::new();
    let mut seen_at_bus: BTreeMap<u32, usize> = BTreeMap::new();
    for a in &bundle.attach {
        if a.peak_mw.is_nan() || a.peak_mw <= 0.0 || a.pv_mw < 0.0 || a.bess_mwh < 0.0 {
            return Err(IngestError::Bundle(format!(
                "attachment at bus {}: peak must be positive and device targets nonnegative",
                a.bus
            )));
        }
        let mut dn = scale_adn(&template, a.peak_mw, a.pv_mw, a.bess_mwh, pv_base_dn)?;
        dn.attachment_bus = a.bus;
        let n = seen_at_bus.entry(a.bus).or_insert(0);
        *n += 1;
        dn.label = if *n == 1 {
            format!("dn{}", a.bus)
        } else {
            format!("dn{}.{}", a.bus, n)
        };
        let head = dn.head_bus();
        dn.caps.insert(
            head,
            ExchangeCaps {
                sell_grid: a.pv_mw,
                buy_cheap: CAP_PEAK_FACTOR * a.peak_mw,
                buy_exp: CAP_PEAK_FACTOR * a.peak_mw,
            },
        );
        *peak_at_bus.entry(a.bus).or_insert(0.0) += a.peak_mw;
        adns.push(dn);
    }
    for b in &mut tn.buses {
        if let Some(&peak) = peak_at_bus.get(&b.id) {
            b.kt_bg_limit = CAP_PEAK_FACTOR * peak;
        }
    }

    let pv_base_tn: f64 = tn
        .buses
        .iter()
        .map(|b| b.pv_capacity_ratio)
        .fold(0.0, f64::max);
    // Ratios are relative to the largest plant, so the availability profile
    // peaks at that plant's capacity.
    let pv_peak_tn = if pv_base_tn > 0.0 {
        bundle
            .pv_buses
            .iter()
            .filter_map(|id| tn.bus(*id))
            .map(|b| b.pv_capacity_ratio)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let _ = pv_peak_tn;

    let mut cfg = ScenarioConfig {
        horizon: bundle.horizon,
        step_hours: bundle.step_hours,
        price_buy_cheap: vec![0.0; bundle.horizon],
        price_buy_exp: vec![0.0; bundle.horizon],
        price_sell_grid: vec![0.0; bundle.horizon],
        pv_avail_tn: profs.pv.iter().map(|&v| v * tn_pv_peak(&raw_tn, bundle)).collect(),
        pv_avail_dn: profs.pv.iter().map(|&v| v * pv_base_dn).collect(),
        big_m_tso: 0.0,
        big_m_p2p: 0.0,
        tolerances: SolverTolerances::default(),
        decision_sequence: bundle.decision_sequence,
        cyclic_soc: bundle.cyclic_soc,
    };

    let (cheap, exp, sell) = bootstrap_prices(&tn, &cfg, bundle.pv_marginal_cost)?;
    cfg.price_buy_cheap = cheap;
    cfg.price_buy_exp = exp;
    cfg.price_sell_grid = sell;

    let scenario = Scenario { tn, adns, cfg };
    let report = scenario.validate();
    if !report.pass() {
        return Err(IngestError::Validation(report));
    }
    Ok(scenario)
}

/// Capacity of the largest converted PV plant (defines availability-profile
/// scale: a bus's installed MW = its ratio × this).
fn tn_pv_peak(raw: &caseformat::RawTnCase, bundle: &CaseBundle) -> f64 {
    bundle
        .pv_buses
        .iter()
        .filter_map(|id| raw.gens.iter().find(|g| g.bus == *id))
        .map(|g| g.pmax_mw)
        .fold(0.0, f64::max)
}

fn build_tn(
    raw: &caseformat::RawTnCase,
    bundle: &CaseBundle,
    profs: &ProfileSet,
) -> Result<TransmissionNetwork, IngestError> {
    let horizon = bundle.horizon;

    let mut gens: BTreeMap<u32, &caseformat::RawGen> =
        raw.gens.iter().map(|g| (g.bus, g)).collect();
    let mut pv_caps: BTreeMap<u32, f64> = BTreeMap::new();
    for &pb in &bundle.pv_buses {
        match gens.remove(&pb) {
            Some(g) => {
                pv_caps.insert(pb, g.pmax_mw);
            }
            None => {
                return Err(IngestError::Bundle(format!(
                    "pv conversion at bus {pb}: no thermal unit there"
                )))
            }
        }
    }
    let pv_base = pv_caps.values().copied().fold(0.0, f64::max);

    // Cyclic profile assignment over demand buses, ascending id. Exchange
    // buses are excluded: their load is replaced by the attached feeders.
    let mut demand_ids: Vec<u32> = raw
        .buses
        .iter()
        .filter(|b| b.kind != caseformat::TnBusKind::Bnd && b.pd_mw > 0.0)
        .map(|b| b.id)
        .collect();
    demand_ids.sort_unstable();
    let position: BTreeMap<u32, usize> =
        demand_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut buses = Vec::with_capacity(raw.buses.len());
    for rb in &raw.buses {
        let demand_profile: Vec<f64> = match position.get(&rb.id) {
            Some(&pos) => profs.assigned(pos).iter().map(|&v| v * rb.pd_mw).collect(),
            None => vec![0.0; horizon],
        };
        let (gen_cost, pg_max) = match gens.get(&rb.id) {
            Some(g) => {
                if g.cost_a < 0.0 || g.pmax_mw < 0.0 {
                    return Err(IngestError::Bundle(format!(
                        "generator at bus {}: negative capacity or quadratic cost",
                        rb.id
                    )));
                }
                (
                    GenCost { a: g.cost_a, b: g.cost_b, c: g.cost_c },
                    vec![g.pmax_mw; horizon],
                )
            }
            None => (GenCost::ZERO, vec![0.0; horizon]),
        };
        let pv_ratio = pv_caps.get(&rb.id).map_or(0.0, |&cap| cap / pv_base);
        buses.push(TnBus {
            id: rb.id,
            demand_profile,
            gen_cost,
            pg_max,
            pv_marginal_cost: if pv_ratio > 0.0 { bundle.pv_marginal_cost } else { 0.0 },
            pv_capacity_ratio: pv_ratio,
            kt_bg_limit: 0.0,
        });
    }

    // Lines: flows are in MW, so dividing the per-unit reactance by the
    // system base makes the flow-definition rows produce angles in radians.
    let lines: Vec<TnLine> = raw
        .branches
        .iter()
        .map(|br| TnLine {
            from_bus: br.from,
            to_bus: br.to,
            reactance: br.x_pu / raw.s_base_mva,
            flow_limit: br.rate_mw,
        })
        .collect();

    let boundary_bus_ids: Vec<u32> = raw
        .buses
        .iter()
        .filter(|b| b.kind == caseformat::TnBusKind::Bnd)
        .map(|b| b.id)
        .collect();
    let reference_bus_ids: Vec<u32> = raw
        .buses
        .iter()
        .filter(|b| b.kind == caseformat::TnBusKind::Ref)
        .map(|b| b.id)
        .collect();

    let mut tn = TransmissionNetwork { buses, lines, boundary_bus_ids, reference_bus_ids };

    if let Some(target) = bundle.tn_peak_mw {
        if target.is_nan() || target <= 0.0 {
            return Err(IngestError::Bundle("tn_peak_mw must be positive".into()));
        }
        let current = tn.peak_demand();
        if current <= 0.0 {
            return Err(IngestError::Bundle(
                "tn_peak_mw set but the transmission network carries no load".into(),
            ));
        }
        let s = target / current;
        for b in &mut tn.buses {
            for v in &mut b.demand_profile {
                *v *= s;
            }
        }
    }

    Ok(tn)
}

fn profiled_template(
    raw: &caseformat::RawDnCase,
    bundle: &CaseBundle,
    profs: &ProfileSet,
) -> Result<DistributionNetwork, IngestError> {
    let horizon = bundle.horizon;
    if raw.s_base_mva <= 0.0 || raw.v_base_kv <= 0.0 {
        return Err(IngestError::Schema {
            file: bundle.adn_template.clone(),
            err: SchemaError { message: "sbase row must hold positive bases".into() },
        });
    }
    let z_base = raw.v_base_kv * raw.v_base_kv / raw.s_base_mva;

    for b in &raw.buses {
        if b.kind == caseformat::DnBusKind::Head && (b.pd_kw != 0.0 || b.qd_kvar != 0.0) {
            return Err(IngestError::Schema {
                file: bundle.adn_template.clone(),
                err: SchemaError {
                    message: format!(
                        "feeder head bus {} carries load; loads belong on agent buses",
                        b.id
                    ),
                },
            });
        }
    }

    let mut demand_ids: Vec<u32> = raw
        .buses
        .iter()
        .filter(|b| b.pd_kw > 0.0)
        .map(|b| b.id)
        .collect();
    demand_ids.sort_unstable();
    let position: BTreeMap<u32, usize> =
        demand_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut buses = Vec::with_capacity(raw.buses.len());
    for rb in &raw.buses {
        let shape: Option<&[f64]> = position.get(&rb.id).map(|&p| profs.assigned(p));
        let scaled = |base_kw: f64| -> Vec<f64> {
            match shape {
                Some(curve) => curve.iter().map(|&v| v * base_kw / 1000.0).collect(),
                None => vec![0.0; horizon],
            }
        };
        buses.push(DnBus {
            id: rb.id,
            demand: scaled(rb.pd_kw),
            reactive_demand: scaled(rb.qd_kvar),
            qg_min: rb.qg_min_mvar,
            qg_max: rb.qg_max_mvar,
            v_min_sq: rb.vmin_pu * rb.vmin_pu,
            v_max_sq: rb.vmax_pu * rb.vmax_pu,
            pv_capacity_ratio: 0.0,
            battery: None,
        });
    }

    let lines: Vec<DnLine> = raw
        .branches
        .iter()
        .map(|br| DnLine {
            from_bus: br.from,
            to_bus: br.to,
            resistance: br.r_ohm / z_base,
            reactance: br.x_ohm / z_base,
            current_sq_limit: br.rate_isq_pu,
        })
        .collect();

    let agent_bus_ids: Vec<u32> = raw
        .buses
        .iter()
        .filter(|b| b.kind == caseformat::DnBusKind::Agent)
        .map(|b| b.id)
        .collect();
    let boundary_bus_ids: Vec<u32> = raw
        .buses
        .iter()
        .filter(|b| b.kind == caseformat::DnBusKind::Head)
        .map(|b| b.id)
        .collect();

    Ok(DistributionNetwork {
        attachment_bus: 0,
        label: "template".into(),
        buses,
        lines,
        agent_bus_ids,
        boundary_bus_ids,
        caps: BTreeMap::new(),
        s_base_mva: raw.s_base_mva,
    })
}

// ---------------------------------------------------------------------------
// Feeder scaling
// ---------------------------------------------------------------------------

/// Spread `target` equally over `hosts`, the last host absorbing the
/// floating-point remainder so the total is exact.
fn allocate(hosts: &[u32], target: f64, what: &str) -> Result<Vec<(u32, f64)>, AllocationError> {
    if hosts.is_empty() {
        return Err(AllocationError(format!(
            "no host buses available for the {what} target {target}"
        )));
    }
    let n = hosts.len();
    let share = target / n as f64;
    let mut out: Vec<(u32, f64)> = hosts[..n - 1].iter().map(|&b| (b, share)).collect();
    out.push((hosts[n - 1], target - share * (n - 1) as f64));
    Ok(out)
}

/// Scale a feeder template to attachment targets: demands so the aggregate
/// peak equals `peak_mw`, then PV capacity (`pv_mw`, as ratios of
/// `pv_base_mw`, the MW represented by ratio 1.0) and battery energy
/// (`bess_mwh`) spread over every other agent bus in ascending id order.
/// Existing device placements in the template are discarded.
pub fn scale_adn(
    template: &DistributionNetwork,
    peak_mw: f64,
    pv_mw: f64,
    bess_mwh: f64,
    pv_base_mw: f64,
) -> Result<DistributionNetwork, AllocationError> {
    if peak_mw.is_nan() || peak_mw <= 0.0 {
        return Err(AllocationError("peak target must be positive".into()));
    }
    if pv_mw < 0.0 || bess_mwh < 0.0 {
        return Err(AllocationError("device targets must be nonnegative".into()));
    }
    let mut dn = template.clone();
    let current = dn.peak_demand();
    if current <= 0.0 {
        return Err(AllocationError(
            "template carries no demand to scale".into(),
        ));
    }
    let s = peak_mw / current;
    for b in &mut dn.buses {
        for v in &mut b.demand {
            *v *= s;
        }
        for v in &mut b.reactive_demand {
            *v *= s;
        }
        b.pv_capacity_ratio = 0.0;
        b.battery = None;
    }

    let mut sorted_agents = dn.agent_bus_ids.clone();
    sorted_agents.sort_unstable();
    let hosts: Vec<u32> = sorted_agents.into_iter().step_by(2).collect();

    if pv_mw > 0.0 {
        if pv_base_mw <= 0.0 {
            return Err(AllocationError(
                "PV target set but the availability profile base is zero".into(),
            ));
        }
        let mut achieved = 0.0;
        for (bus, alloc) in allocate(&hosts, pv_mw, "PV")? {
            let ratio = alloc / pv_base_mw;
            if !(0.0..=1.0 + 1e-12).contains(&ratio) {
                return Err(AllocationError(format!(
                    "PV share {alloc} MW at bus {bus} exceeds the profile base {pv_base_mw} MW"
                )));
            }
            let b = dn.buses.iter_mut().find(|b| b.id == bus).expect("host exists");
            b.pv_capacity_ratio = ratio.min(1.0);
            achieved += b.pv_capacity_ratio * pv_base_mw;
        }
        if (achieved - pv_mw).abs() > 1e-9 {
            return Err(AllocationError(format!(
                "PV placement reached {achieved} MW, target {pv_mw} MW"
            )));
        }
    }

    if bess_mwh > 0.0 {
        let mut achieved = 0.0;
        for (bus, cap) in allocate(&hosts, bess_mwh, "battery")? {
            let b = dn.buses.iter_mut().find(|b| b.id == bus).expect("host exists");
            b.battery = Some(BessSpec {
                installed: true,
                capacity_mwh: cap,
                rated_power_mw: 0.5 * cap,
                soc_min: 0.1,
                soc_max: 0.9,
                eff_charge: 0.95,
                eff_discharge: 0.95,
                soc_initial_mwh: 0.1 * cap,
            });
            achieved += cap;
        }
        if (achieved - bess_mwh).abs() > 1e-9 {
            return Err(AllocationError(format!(
                "battery placement reached {achieved} MWh, target {bess_mwh} MWh"
            )));
        }
    }

    Ok(dn)
}

// ---------------------------------------------------------------------------
// Price bootstrap
// ---------------------------------------------------------------------------

/// Bootstrapped price signals `(cheap import, expensive import, grid sale)`.
type PriceSignals = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Derive the three price signals from a zero-exchange reference dispatch.
fn bootstrap_prices(
    tn_net: &TransmissionNetwork,
    cfg: &ScenarioConfig,
    pv_marginal_cost: f64,
) -> Result<PriceSignals, IngestError> {
    let fixing = tn::BoundaryFixing::new();
    let prog = tn::build_tn_program(tn_net, cfg, Some(&fixing));
    let report = tn::solve_tn_direct(&prog, &ClarabelSolver, &SolveSettings::default())
        .map_err(|e| IngestError::Bootstrap(format!("reference dispatch failed: {e}")))?;

    let mut cheap = Vec::with_capacity(cfg.horizon);
    let mut exp = Vec::with_capacity(cfg.horizon);
    let mut sell = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.horizon {
        let c = pv_marginal_cost + CHEAP_PRICE_TILT * t as f64;
        let mut node_max = f64::NEG_INFINITY;
        for b in &tn_net.buses {
            if let Some(d) = prog.marginal_cost_at(&report.solution, b.id, t as u32) {
                node_max = node_max.max(d);
            }
        }
        if !node_max.is_finite() {
            return Err(IngestError::Bootstrap(format!(
                "no nodal price recoverable at period {t}"
            )));
        }
        // The expensive block can never undercut the cheap one.
        exp.push(node_max.max(c));
        cheap.push(c);
        sell.push(SELL_PRICE_FACTOR * c);
    }
    Ok((cheap, exp, sell))
}

// ---------------------------------------------------------------------------
// Bundled reference fixture
// ---------------------------------------------------------------------------

/// The reference study bundle: the 30-bus transmission system with PV
/// plants at buses 11 and 13, interior load rescaled to a 213.46 MW peak,
/// and five feeders at buses 3, 4, 7, 12 and 18 (peak/PV/BESS targets
/// 2.28/1.02/0.816, 3.72/2/2, 3.53/4.39/4.39, 3.42/2.8/2.74 and
/// 3.01/1.04/1.04), over 24 hourly periods.
pub fn reference_bundle() -> CaseBundle {
    CaseBundle {
        tn_file: "fixtures/ieee30.case".into(),
        adn_template: "fixtures/feeder33.case".into(),
        attach: vec![
            Attachment { bus: 3, peak_mw: 2.28, pv_mw: 1.02, bess_mwh: 0.816 },
            Attachment { bus: 4, peak_mw: 3.72, pv_mw: 2.0, bess_mwh: 2.0 },
            Attachment { bus: 7, peak_mw: 3.53, pv_mw: 4.39, bess_mwh: 4.39 },
            Attachment { bus: 12, peak_mw: 3.42, pv_mw: 2.8, bess_mwh: 2.74 },
            Attachment { bus: 18, peak_mw: 3.01, pv_mw: 1.04, bess_mwh: 1.04 },
        ],
        profiles: ProfileSpec::default(),
        horizon: 24,
        step_hours: 1.0,
        pv_buses: vec![11, 13],
        pv_marginal_cost: 0.5,
        tn_peak_mw: Some(213.46),
        cyclic_soc: false,
        decision_sequence: DecisionSequence::DsoFirst,
    }
}

/// Build the reference scenario from the embedded fixture files.
pub fn reference_fixture() -> Scenario {
    build_scenario(
        &reference_bundle(),
        include_str!("../../fixtures/ieee30.case"),
        include_str!("../../fixtures/feeder33.case"),
    )
    .expect("bundled fixture must assemble")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adn;
    use crate::keys::Key;
    use crate::solver::ConicSubproblemSolver;

    const TN_FIXTURE: &str = include_str!("../../fixtures/ieee30.case");
    const DN_FIXTURE: &str = include_str!("../../fixtures/feeder33.case");

    #[test]
    fn fixture_matches_reference_counts() {
        let s = reference_fixture();
        assert!(s.validate().pass());

        assert_eq!(s.tn.buses.len(), 30);
        assert_eq!(s.tn.lines.len(), 41);
        assert!((s.tn.thermal_capacity() - 365.0).abs() < 1e-9);

        let installed_pv: f64 = s.tn.buses.iter().map(|b| b.pv_capacity_ratio * 40.0).sum();
        assert!((installed_pv - 70.0).abs() < 1e-9, "pv {installed_pv}");
        assert_eq!(s.tn.bus(11).unwrap().pv_capacity_ratio, 0.75);
        assert_eq!(s.tn.bus(13).unwrap().pv_capacity_ratio, 1.0);
        assert_eq!(s.tn.bus(11).unwrap().pg_max, vec![0.0; 24]);

        let labels: Vec<&str> = s.adns.iter().map(|d| d.label.as_str()).collect();
        assert_eq!(labels, vec!["dn3", "dn4", "dn7", "dn12", "dn18"]);
    }

    #[test]
    fn fixture_peaks_hit_the_reference_split() {
        let s = reference_fixture();
        let adn_peak: f64 = s.adns.iter().map(|d| d.peak_demand()).sum();
        assert!((adn_peak - 15.96).abs() < 1e-6, "adn peak {adn_peak}");

        let tn_peak = s.tn.peak_demand();
        assert!((tn_peak - 213.46).abs() < 1e-6, "tn peak {tn_peak}");

        let system = tn_peak + adn_peak;
        assert!((system - 229.42).abs() < 0.01, "system peak {system}");
        let share = 100.0 * adn_peak / system;
        assert!((share - 6.96).abs() < 0.01, "share {share}%");
    }

    #[test]
    fn fixture_program_has_the_enumerated_row_census() {
        let s = reference_fixture();
        let prog = tn::build_tn_program(&s.tn, &s.cfg, None);
        let flow_defs = prog
            .model
            .eq_rows
            .iter()
            .filter(|r| matches!(r.key, Key::TnFlowDef { .. }))
            .count();
        assert_eq!(flow_defs, 41 * 24);
    }

    #[test]
    fn boundary_loads_are_replaced_by_feeders() {
        let s = reference_fixture();
        for id in [3u32, 4, 7, 12, 18] {
            let b = s.tn.bus(id).unwrap();
            assert!(b.demand_profile.iter().all(|&v| v == 0.0), "bus {id}");
            assert!(b.pg_max.iter().all(|&v| v == 0.0), "bus {id}");
        }
        assert!((s.tn.bus(3).unwrap().kt_bg_limit - 1.5 * 2.28).abs() < 1e-12);
        assert!((s.tn.bus(18).unwrap().kt_bg_limit - 1.5 * 3.01).abs() < 1e-12);

        let dn3 = &s.adns[0];
        let caps = &dn3.caps[&dn3.head_bus()];
        assert!((caps.sell_grid - 1.02).abs() < 1e-12);
        assert!((caps.buy_cheap - 1.5 * 2.28).abs() < 1e-12);
    }

    #[test]
    fn device_targets_land_where_documented() {
        let s = reference_fixture();
        // dn7: PV 4.39 MW and BESS 4.39 MWh — 124% of its 3.53 MW peak.
        let dn7 = &s.adns[2];
        let pv_total: f64 = dn7.buses.iter().map(|b| b.pv_capacity_ratio * 4.39).sum();
        assert!((pv_total - 4.39).abs() < 1e-9, "pv {pv_total}");
        assert!((dn7.bess_capacity_mwh() - 4.39).abs() < 1e-9);
        assert!((100.0 * pv_total / 3.53 - 124.0).abs() < 1.0);

        // dn3: PV 45% and BESS 36% of its 2.28 MW peak.
        let dn3 = &s.adns[0];
        let pv3: f64 = dn3.buses.iter().map(|b| b.pv_capacity_ratio * 4.39).sum();
        assert!((100.0 * pv3 / 2.28 - 45.0).abs() < 1.0);
        assert!((100.0 * dn3.bess_capacity_mwh() / 2.28 - 36.0).abs() < 1.0);

        // Devices sit on every other agent bus; batteries are half-power.
        for dn in &s.adns {
            for b in &dn.buses {
                let hosted = b.id % 2 == 0 && b.id >= 2;
                assert_eq!(b.pv_capacity_ratio > 0.0, hosted, "dn {} bus {}", dn.label, b.id);
                assert_eq!(b.battery.is_some(), hosted, "dn {} bus {}", dn.label, b.id);
                if let Some(spec) = &b.battery {
                    assert!((spec.rated_power_mw - 0.5 * spec.capacity_mwh).abs() < 1e-12);
                    assert_eq!(spec.soc_initial_mwh, spec.soc_lo_mwh());
                }
            }
        }
    }

    #[test]
    fn empty_attachments_yield_a_transmission_only_scenario() {
        let mut bundle = reference_bundle();
        bundle.attach.clear();
        let s = build_scenario(&bundle, TN_FIXTURE, DN_FIXTURE).unwrap();
        assert!(s.adns.is_empty());
        assert!(s.validate().pass());
        assert!(s.tn.buses.iter().all(|b| b.kt_bg_limit == 0.0));
        assert!(s.cfg.pv_avail_dn.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bootstrapped_prices_are_ordered_and_tilted() {
        let s = reference_fixture();
        for t in 0..24 {
            assert!(
                s.cfg.price_sell_grid[t] <= s.cfg.price_buy_cheap[t]
                    && s.cfg.price_buy_cheap[t] <= s.cfg.price_buy_exp[t],
                "ordering at t={t}"
            );
            let expected_cheap = 0.5 + 1e-3 * t as f64;
            assert!((s.cfg.price_buy_cheap[t] - expected_cheap).abs() < 1e-12);
            assert!((s.cfg.price_sell_grid[t] - 0.8 * expected_cheap).abs() < 1e-12);
        }
        // The expensive block tracks system marginal cost: scarcer evenings
        // price above quiet early-morning hours.
        assert!(s.cfg.price_buy_exp[19] > s.cfg.price_buy_exp[3]);
        // Thermal units set the price whenever the sun is down…
        for t in (0..6).chain(18..24) {
            assert!(s.cfg.price_buy_exp[t] > 1.0, "night price at t={t}");
        }
        // …but at noon utility PV covers the valley demand outright and the
        // two purchase blocks collapse to the PV cost.
        assert_eq!(s.cfg.price_buy_exp[12], s.cfg.price_buy_cheap[12]);
    }

    #[test]
    fn scaling_errors_are_reported() {
        let profs = synthesize_profiles(&ProfileSpec::default(), 4);
        let raw = caseformat::parse_dn_case(DN_FIXTURE).unwrap();
        let mut bundle = reference_bundle();
        bundle.horizon = 4;
        let template = profiled_template(&raw, &bundle, &profs).unwrap();

        // No agents → nowhere to put devices.
        let mut bare = template.clone();
        bare.agent_bus_ids.clear();
        assert!(scale_adn(&bare, 1.0, 1.0, 0.0, 4.39).is_err());

        // PV target without an availability base.
        assert!(scale_adn(&template, 1.0, 1.0, 0.0, 0.0).is_err());

        // Zero targets clear all devices.
        let dn = scale_adn(&template, 2.0, 0.0, 0.0, 4.39).unwrap();
        assert!(dn.buses.iter().all(|b| b.pv_capacity_ratio == 0.0));
        assert!(dn.buses.iter().all(|b| b.battery.is_none()));
        assert!((dn.peak_demand() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let s = reference_fixture();
        let text = scenario_to_toml(&s);
        let back = scenario_from_toml(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn bundle_round_trips_through_toml_with_relative_paths() {
        let bundle = reference_bundle();
        let text = bundle_to_toml(&bundle);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.toml");
        std::fs::write(&path, &text).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded.attach, bundle.attach);
        assert!(Path::new(&loaded.tn_file).is_absolute());
        assert!(loaded.tn_file.ends_with("fixtures/ieee30.case"));
    }

    /// Backward/forward sweep power flow on the feeder tree — an
    /// independent oracle for the loaded impedances and the conic model.
    /// All quantities per-unit on the feeder base.
    fn sweep_oracle(dn: &DistributionNetwork, t: usize) -> (Vec<f64>, f64) {
        let sb = dn.s_base_mva;
        let idx: BTreeMap<u32, usize> =
            dn.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let p_load: Vec<f64> = dn.buses.iter().map(|b| b.demand[t] / sb).collect();
        let q_load: Vec<f64> = dn.buses.iter().map(|b| b.reactive_demand[t] / sb).collect();

        // Lines ordered root-outward is how the fixture lists them; process
        // in reverse for the backward sweep.
        let mut v_sq = vec![1.0f64; dn.buses.len()];
        let mut l_sq = vec![0.0f64; dn.lines.len()];
        let (mut p, mut q) = (vec![0.0; dn.lines.len()], vec![0.0; dn.lines.len()]);
        for _ in 0..200 {
            for (li, line) in dn.lines.iter().enumerate().rev() {
                let to = idx[&line.to_bus];
                let mut pp = p_load[to];
                let mut qq = q_load[to];
                for (lj, child) in dn.lines.iter().enumerate() {
                    if child.from_bus == line.to_bus {
                        pp += p[lj];
                        qq += q[lj];
                    }
                }
                p[li] = pp + line.resistance * l_sq[li];
                q[li] = qq + line.reactance * l_sq[li];
            }
            let mut worst = 0.0f64;
            for (li, line) in dn.lines.iter().enumerate() {
                let from = idx[&line.from_bus];
                let to = idx[&line.to_bus];
                let new_l = (p[li] * p[li] + q[li] * q[li]) / v_sq[from];
                worst = worst.max((new_l - l_sq[li]).abs());
                l_sq[li] = new_l;
                v_sq[to] = v_sq[from]
                    - 2.0 * (line.resistance * p[li] + line.reactance * q[li])
                    + (line.resistance * line.resistance + line.reactance * line.reactance)
                        * l_sq[li];
            }
            if worst < 1e-13 {
                break;
            }
        }
        let losses_mw: f64 = dn
            .lines
            .iter()
            .zip(&l_sq)
            .map(|(line, l)| line.resistance * l * sb)
            .sum();
        (v_sq, losses_mw)
    }

    #[test]
    fn loaded_feeder_reproduces_the_sweep_power_flow() {
        // Static single-period template: the classic 3715 kW / 2300 kVAr
        // feeder, no devices, import only.
        let raw = caseformat::parse_dn_case(DN_FIXTURE).unwrap();
        let mut bundle = reference_bundle();
        bundle.horizon = 1;
        let profs = synthesize_profiles(&ProfileSpec::default(), 1);
        let mut dn = profiled_template(&raw, &bundle, &profs).unwrap();
        dn.attachment_bus = 3;
        dn.label = "dn-sweep".into();
        dn.caps.insert(
            dn.head_bus(),
            ExchangeCaps { sell_grid: 10.0, buy_cheap: 10.0, buy_exp: 10.0 },
        );

        let total_load: f64 = dn.buses.iter().map(|b| b.demand[0]).sum();
        assert!((total_load - 3.715).abs() < 1e-12);

        let (v_oracle, losses_oracle) = sweep_oracle(&dn, 0);
        // The classic feeder run: just over 200 kW of losses and a minimum
        // voltage a little above 0.91 p.u. at the far end.
        assert!((0.19..0.21).contains(&losses_oracle), "losses {losses_oracle}");
        let v_min = v_oracle.iter().copied().fold(2.0, f64::min).sqrt();
        assert!((0.905..0.92).contains(&v_min), "min voltage {v_min}");

        let mut cfg = ScenarioConfig::flat(1);
        cfg.price_buy_cheap = vec![1.0];
        cfg.price_buy_exp = vec![1.5];
        cfg.price_sell_grid = vec![0.8];
        let prog = adn::build_adn_program(0, &dn, &cfg);
        let sol = ClarabelSolver
            .solve(&prog.model, &[], &SolveSettings::default())
            .expect("feeder dispatch solves");

        // Voltages match the sweep everywhere.
        for b in &dn.buses {
            let v_model = sol.x[prog.index.volt_sq[&(b.id, 0)]];
            let v_ref = v_oracle[dn.buses.iter().position(|x| x.id == b.id).unwrap()];
            assert!((v_model - v_ref).abs() < 1e-5, "bus {}: {v_model} vs {v_ref}", b.id);
        }
        // Total import covers load plus the sweep's losses.
        let import = sol.x[prog.index.pk_import_cheap[&0]] + sol.x[prog.index.pk_import_exp[&0]];
        assert!(
            (import - (total_load + losses_oracle)).abs() < 1e-4,
            "import {import} vs {}",
            total_load + losses_oracle
        );
        // And the relaxation is tight.
        let cones = adn::cone_tightness(&prog.index, &sol.x, &dn, 1e-5);
        assert!(cones.max < 1e-5, "worst cone residual {}", cones.max);
    }
}
