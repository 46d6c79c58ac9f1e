//! Plain-text case files: the grammar and the two dialect parsers.
//!
//! A case file is a sequence of named sections. Each section starts with a
//! line holding just the section name, contains whitespace-separated table
//! rows, and ends with a line holding `end`. `#` starts a comment that runs
//! to the end of the line; blank lines are ignored:
//!
//! ```text
//! sbase
//! 100.0
//! end
//!
//! bus
//! # id  kind  pd_mw  qd_mvar
//! 1     ref   0.0    0.0
//! end
//! ```
//!
//! Two dialects share this shape.
//!
//! **Transmission** ([`parse_tn_case`]) — required sections:
//!
//! * `sbase` — one row: `s_base_mva`.
//! * `bus` — rows `id kind pd_mw qd_mvar`, kind ∈ `ref | bnd | pq`. Buses of
//!   kind `bnd` are exchange points: their native load is replaced by
//!   whatever feeder attaches there, so the loader zeroes it.
//! * `gen` — rows `bus pmax_mw cost_a cost_b cost_c` (cost in $/MW², $/MW, $).
//! * `branch` — rows `from to r_pu x_pu b_pu rate_mw`, MATPOWER column order.
//!
//! The DC model uses only `pd_mw`, `x_pu` and `rate_mw`; the other columns
//! are carried so tables can be transcribed verbatim from standard data sets.
//!
//! **Distribution** ([`parse_dn_case`]) — required sections:
//!
//! * `sbase` — one row: `s_base_mva v_base_kv`.
//! * `bus` — rows `id kind pd_kw qd_kvar vmin_pu vmax_pu qg_min_mvar
//!   qg_max_mvar`, kind ∈ `head | agent`. Voltage bounds are magnitudes
//!   (the loader squares them).
//! * `branch` — rows `from to r_ohm x_ohm rate_isq_pu`. Impedances are in
//!   ohms (the loader converts to per-unit on the declared base); the rating
//!   is a squared-current limit in per-unit.
//!
//! Parsers report malformed input as [`ParseError`] with the 1-based line
//! and column of the offending token, and structurally incomplete input
//! (missing sections, duplicate ids) as [`SchemaError`].

use std::fmt;

use thiserror::Error;

/// Malformed text: unparseable token, wrong arity, unknown section.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    /// 1-based line of the offending token.
    pub line: usize,
    /// 1-based column of the offending token.
    pub col: usize,
    /// What was wrong.
    pub message: String,
}

/// Well-formed text that does not describe a usable case: a required
/// section or field is missing, or a table contradicts itself.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct SchemaError {
    /// What is missing or inconsistent.
    pub message: String,
}

impl SchemaError {
    fn new(message: impl Into<String>) -> Self {
        SchemaError { message: message.into() }
    }
}

/// Role of a transmission bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnBusKind {
    /// Angle reference.
    Ref,
    /// Exchange point where feeders attach.
    Bnd,
    /// Ordinary load bus.
    Pq,
}

impl fmt::Display for TnBusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TnBusKind::Ref => write!(f, "ref"),
            TnBusKind::Bnd => write!(f, "bnd"),
            TnBusKind::Pq => write!(f, "pq"),
        }
    }
}

/// One `bus` row of a transmission case.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTnBus {
    /// Bus number.
    pub id: u32,
    /// Bus role.
    pub kind: TnBusKind,
    /// Active load, MW.
    pub pd_mw: f64,
    /// Reactive load, MVAr (carried for reference; the DC model drops it).
    pub qd_mvar: f64,
}

/// One `gen` row of a transmission case.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGen {
    /// Host bus.
    pub bus: u32,
    /// Rated capacity, MW.
    pub pmax_mw: f64,
    /// Quadratic cost coefficient, $/MW²h.
    pub cost_a: f64,
    /// Linear cost coefficient, $/MWh.
    pub cost_b: f64,
    /// Fixed cost, $/h.
    pub cost_c: f64,
}

/// One `branch` row of a transmission case.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTnBranch {
    /// Sending bus.
    pub from: u32,
    /// Receiving bus.
    pub to: u32,
    /// Series resistance, p.u.
    pub r_pu: f64,
    /// Series reactance, p.u.
    pub x_pu: f64,
    /// Total line charging susceptance, p.u.
    pub b_pu: f64,
    /// Thermal rating, MW.
    pub rate_mw: f64,
}

/// A parsed transmission case file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTnCase {
    /// System power base, MVA.
    pub s_base_mva: f64,
    /// `bus` section rows.
    pub buses: Vec<RawTnBus>,
    /// `gen` section rows.
    pub gens: Vec<RawGen>,
    /// `branch` section rows.
    pub branches: Vec<RawTnBranch>,
}

/// Role of a distribution bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnBusKind {
    /// Feeder head (substation).
    Head,
    /// Trading agent.
    Agent,
}

/// One `bus` row of a distribution case.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDnBus {
    /// Bus number.
    pub id: u32,
    /// Bus role.
    pub kind: DnBusKind,
    /// Active load, kW.
    pub pd_kw: f64,
    /// Reactive load, kVAr.
    pub qd_kvar: f64,
    /// Lower voltage-magnitude limit, p.u.
    pub vmin_pu: f64,
    /// Upper voltage-magnitude limit, p.u.
    pub vmax_pu: f64,
    /// Reactive support lower bound, MVAr.
    pub qg_min_mvar: f64,
    /// Reactive support upper bound, MVAr.
    pub qg_max_mvar: f64,
}

/// One `branch` row of a distribution case.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDnBranch {
    /// Upstream bus.
    pub from: u32,
    /// Downstream bus.
    pub to: u32,
    /// Series resistance, Ω.
    pub r_ohm: f64,
    /// Series reactance, Ω.
    pub x_ohm: f64,
    /// Squared-current rating, p.u.
    pub rate_isq_pu: f64,
}

/// A parsed distribution case file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDnCase {
    /// Feeder power base, MVA.
    pub s_base_mva: f64,
    /// Nominal line-to-line voltage, kV.
    pub v_base_kv: f64,
    /// `bus` section rows.
    pub buses: Vec<RawDnBus>,
    /// `branch` section rows.
    pub branches: Vec<RawDnBranch>,
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    s: &'a str,
    line: usize,
    col: usize,
}

impl Tok<'_> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, message: message.into() }
    }

    fn f64(&self) -> Result<f64, ParseError> {
        self.s
            .parse::<f64>()
            .map_err(|_| self.err(format!("invalid number `{}`", self.s)))
    }

    fn u32(&self) -> Result<u32, ParseError> {
        self.s
            .parse::<u32>()
            .map_err(|_| self.err(format!("invalid id `{}`", self.s)))
    }
}

/// Split into non-empty token lines, stripping comments and tracking the
/// 1-based line/column of every token.
fn tokenize(text: &str) -> Vec<Vec<Tok<'_>>> {
    let mut out = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = Vec::new();
        let mut rest = content;
        let mut offset = 0usize;
        while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
            let after = &rest[start..];
            let len = after
                .find(|c: char| c.is_whitespace())
                .unwrap_or(after.len());
            toks.push(Tok {
                s: &after[..len],
                line: li + 1,
                col: offset + start + 1,
            });
            offset += start + len;
            rest = &after[len..];
        }
        if !toks.is_empty() {
            out.push(toks);
        }
    }
    out
}

/// A named section: header token plus its table rows.
struct Section<'a> {
    name: Tok<'a>,
    rows: Vec<Vec<Tok<'a>>>,
}

fn split_sections<'a>(lines: Vec<Vec<Tok<'a>>>, known: &[&str]) -> Result<Vec<Section<'a>>, ParseError> {
    let mut sections: Vec<Section<'a>> = Vec::new();
    let mut current: Option<Section<'a>> = None;
    for line in lines {
        match &mut current {
            None => {
                let head = line[0];
                if line.len() != 1 {
                    return Err(line[1].err("section header must be alone on its line"));
                }
                if !known.contains(&head.s) {
                    return Err(head.err(format!(
                        "unknown section `{}` (expected one of: {})",
                        head.s,
                        known.join(", ")
                    )));
                }
                if sections.iter().any(|s| s.name.s == head.s) {
                    return Err(head.err(format!("duplicate section `{}`", head.s)));
                }
                current = Some(Section { name: head, rows: Vec::new() });
            }
            Some(sec) => {
                if line.len() == 1 && line[0].s == "end" {
                    sections.push(current.take().unwrap());
                } else {
                    sec.rows.push(line);
                }
            }
        }
    }
    if let Some(sec) = current {
        return Err(sec
            .name
            .err(format!("section `{}` is not terminated by `end`", sec.name.s)));
    }
    Ok(sections)
}

fn expect_arity<'a>(row: &[Tok<'a>], n: usize, shape: &str) -> Result<(), ParseError> {
    if row.len() != n {
        let at = if row.len() > n { row[n] } else { row[0] };
        return Err(at.err(format!(
            "expected {n} fields ({shape}), found {}",
            row.len()
        )));
    }
    Ok(())
}

fn find_section<'s, 'a>(
    sections: &'s [Section<'a>],
    name: &str,
) -> Result<&'s Section<'a>, SchemaError> {
    sections
        .iter()
        .find(|s| s.name.s == name)
        .ok_or_else(|| SchemaError::new(format!("missing required section `{name}`")))
}

fn check_unique_ids(ids: impl Iterator<Item = u32>, what: &str) -> Result<(), SchemaError> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(SchemaError::new(format!("duplicate {what} {id}")));
        }
    }
    Ok(())
}

/// Union of the two failure modes of a case parse.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaseError {
    /// Token-level failure with a source location.
    #[error(transparent)]
    Parse(#[from] ParseError),
    /// Structural failure (missing/contradictory tables).
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

// ---------------------------------------------------------------------------
// Transmission dialect
// ---------------------------------------------------------------------------

/// Parse a transmission case file.
pub fn parse_tn_case(text: &str) -> Result<RawTnCase, CaseError> {
    let sections = split_sections(tokenize(text), &["sbase", "bus", "gen", "branch"])?;

    let sbase = find_section(&sections, "sbase")?;
    if sbase.rows.len() != 1 {
        return Err(SchemaError::new("section `sbase` must hold exactly one row").into());
    }
    expect_arity(&sbase.rows[0], 1, "s_base_mva")?;
    let s_base_mva = sbase.rows[0][0].f64()?;

    let mut buses = Vec::new();
    for row in &find_section(&sections, "bus")?.rows {
        expect_arity(row, 4, "id kind pd_mw qd_mvar")?;
        let kind = match row[1].s {
            "ref" => TnBusKind::Ref,
            "bnd" => TnBusKind::Bnd,
            "pq" => TnBusKind::Pq,
            other => {
                return Err(row[1]
                    .err(format!("unknown bus kind `{other}` (expected ref, bnd or pq)"))
                    .into())
            }
        };
        buses.push(RawTnBus {
            id: row[0].u32()?,
            kind,
            pd_mw: row[2].f64()?,
            qd_mvar: row[3].f64()?,
        });
    }
    check_unique_ids(buses.iter().map(|b| b.id), "bus id")?;

    let mut gens = Vec::new();
    for row in &find_section(&sections, "gen")?.rows {
        expect_arity(row, 5, "bus pmax_mw cost_a cost_b cost_c")?;
        gens.push(RawGen {
            bus: row[0].u32()?,
            pmax_mw: row[1].f64()?,
            cost_a: row[2].f64()?,
            cost_b: row[3].f64()?,
            cost_c: row[4].f64()?,
        });
    }
    check_unique_ids(gens.iter().map(|g| g.bus), "generator bus")?;
    for g in &gens {
        if !buses.iter().any(|b| b.id == g.bus) {
            return Err(SchemaError::new(format!(
                "generator references unknown bus {}",
                g.bus
            ))
            .into());
        }
    }

    let mut branches = Vec::new();
    for row in &find_section(&sections, "branch")?.rows {
        expect_arity(row, 6, "from to r_pu x_pu b_pu rate_mw")?;
        branches.push(RawTnBranch {
            from: row[0].u32()?,
            to: row[1].u32()?,
            r_pu: row[2].f64()?,
            x_pu: row[3].f64()?,
            b_pu: row[4].f64()?,
            rate_mw: row[5].f64()?,
        });
    }

    Ok(RawTnCase { s_base_mva, buses, gens, branches })
}

// ---------------------------------------------------------------------------
// Distribution dialect
// ---------------------------------------------------------------------------

/// Parse a distribution case file.
pub fn parse_dn_case(text: &str) -> Result<RawDnCase, CaseError> {
    let sections = split_sections(tokenize(text), &["sbase", "bus", "branch"])?;

    let sbase = find_section(&sections, "sbase")?;
    if sbase.rows.len() != 1 {
        return Err(SchemaError::new("section `sbase` must hold exactly one row").into());
    }
    expect_arity(&sbase.rows[0], 2, "s_base_mva v_base_kv")?;
    let s_base_mva = sbase.rows[0][0].f64()?;
    let v_base_kv = sbase.rows[0][1].f64()?;

    let mut buses = Vec::new();
    for row in &find_section(&sections, "bus")?.rows {
        expect_arity(
            row,
            8,
            "id kind pd_kw qd_kvar vmin_pu vmax_pu qg_min_mvar qg_max_mvar",
        )?;
        let kind = match row[1].s {
            "head" => DnBusKind::Head,
            "agent" => DnBusKind::Agent,
            other => {
                return Err(row[1]
                    .err(format!("unknown bus kind `{other}` (expected head or agent)"))
                    .into())
            }
        };
        buses.push(RawDnBus {
            id: row[0].u32()?,
            kind,
            pd_kw: row[2].f64()?,
            qd_kvar: row[3].f64()?,
            vmin_pu: row[4].f64()?,
            vmax_pu: row[5].f64()?,
            qg_min_mvar: row[6].f64()?,
            qg_max_mvar: row[7].f64()?,
        });
    }
    check_unique_ids(buses.iter().map(|b| b.id), "bus id")?;

    let mut branches = Vec::new();
    for row in &find_section(&sections, "branch")?.rows {
        expect_arity(row, 5, "from to r_ohm x_ohm rate_isq_pu")?;
        branches.push(RawDnBranch {
            from: row[0].u32()?,
            to: row[1].u32()?,
            r_ohm: row[2].f64()?,
            x_ohm: row[3].f64()?,
            rate_isq_pu: row[4].f64()?,
        });
    }

    Ok(RawDnCase { s_base_mva, v_base_kv, buses, branches })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TN_FIXTURE: &str = include_str!("../../fixtures/ieee30.case");
    const DN_FIXTURE: &str = include_str!("../../fixtures/feeder33.case");

    #[test]
    fn transmission_fixture_parses_with_expected_shape() {
        let case = parse_tn_case(TN_FIXTURE).unwrap();
        assert_eq!(case.s_base_mva, 100.0);
        assert_eq!(case.buses.len(), 30);
        assert_eq!(case.branches.len(), 41);
        assert_eq!(case.gens.len(), 6);

        let total_pd: f64 = case.buses.iter().map(|b| b.pd_mw).sum();
        assert!((total_pd - 189.2).abs() < 1e-9, "total load {total_pd}");

        let bnd: Vec<u32> = case
            .buses
            .iter()
            .filter(|b| b.kind == TnBusKind::Bnd)
            .map(|b| b.id)
            .collect();
        assert_eq!(bnd, vec![3, 4, 7, 12, 18]);
        let bnd_pd: f64 = case
            .buses
            .iter()
            .filter(|b| b.kind == TnBusKind::Bnd)
            .map(|b| b.pd_mw)
            .sum();
        assert!((bnd_pd - 47.2).abs() < 1e-9);

        let total_pmax: f64 = case.gens.iter().map(|g| g.pmax_mw).sum();
        assert!((total_pmax - 435.0).abs() < 1e-9);
        assert_eq!(
            case.buses.iter().filter(|b| b.kind == TnBusKind::Ref).count(),
            1
        );
    }

    #[test]
    fn feeder_fixture_parses_with_expected_shape() {
        let case = parse_dn_case(DN_FIXTURE).unwrap();
        assert_eq!(case.s_base_mva, 10.0);
        assert_eq!(case.v_base_kv, 12.66);
        assert_eq!(case.buses.len(), 33);
        assert_eq!(case.branches.len(), 32);

        let total_p: f64 = case.buses.iter().map(|b| b.pd_kw).sum();
        let total_q: f64 = case.buses.iter().map(|b| b.qd_kvar).sum();
        assert!((total_p - 3715.0).abs() < 1e-9, "total p {total_p}");
        assert!((total_q - 2300.0).abs() < 1e-9, "total q {total_q}");
        assert_eq!(
            case.buses.iter().filter(|b| b.kind == DnBusKind::Head).count(),
            1
        );
        assert_eq!(case.buses[0].vmin_pu, 1.0);
        assert_eq!(case.buses[1].vmin_pu, 0.9);
    }

    #[test]
    fn parse_error_carries_line_and_column() {
        let text = "sbase\n100.0\nend\nbus\n1 ref O.0 0.0\nend\ngen\nend\nbranch\nend\n";
        let err = match parse_tn_case(text) {
            Err(CaseError::Parse(e)) => e,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(err.line, 5);
        assert_eq!(err.col, 7);
        assert!(err.message.contains("O.0"), "{}", err.message);
    }

    #[test]
    fn missing_section_is_a_schema_error() {
        let text = "sbase\n100.0\nend\nbus\n1 ref 0.0 0.0\nend\nbranch\nend\n";
        let err = match parse_tn_case(text) {
            Err(CaseError::Schema(e)) => e,
            other => panic!("expected schema error, got {other:?}"),
        };
        assert!(err.message.contains("`gen`"), "{}", err.message);
    }

    #[test]
    fn unterminated_and_unknown_sections_are_rejected() {
        let err = parse_tn_case("bus\n1 ref 0.0 0.0\n").unwrap_err();
        match err {
            CaseError::Parse(e) => assert!(e.message.contains("not terminated")),
            other => panic!("unexpected {other:?}"),
        }

        let err = parse_tn_case("bogus\nend\n").unwrap_err();
        match err {
            CaseError::Parse(e) => {
                assert_eq!(e.line, 1);
                assert!(e.message.contains("unknown section `bogus`"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn contradictory_tables_are_schema_errors() {
        let dup_bus = "sbase\n100.0\nend\nbus\n1 ref 0 0\n1 pq 0 0\nend\ngen\nend\nbranch\nend\n";
        assert!(matches!(parse_tn_case(dup_bus), Err(CaseError::Schema(_))));

        let ghost_gen =
            "sbase\n100.0\nend\nbus\n1 ref 0 0\nend\ngen\n9 10 0 1 0\nend\nbranch\nend\n";
        match parse_tn_case(ghost_gen) {
            Err(CaseError::Schema(e)) => assert!(e.message.contains("unknown bus 9")),
            other => panic!("unexpected {other:?}"),
        }

        let dup_gen = "sbase\n100.0\nend\nbus\n1 ref 0 0\nend\ngen\n1 10 0 1 0\n1 20 0 1 0\nend\nbranch\nend\n";
        match parse_tn_case(dup_gen) {
            Err(CaseError::Schema(e)) => assert!(e.message.contains("duplicate generator")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_points_at_the_row() {
        let text = "sbase\n100.0\nend\nbus\n1 ref 0.0\nend\ngen\nend\nbranch\nend\n";
        match parse_tn_case(text) {
            Err(CaseError::Parse(e)) => {
                assert_eq!(e.line, 5);
                assert!(e.message.contains("expected 4 fields"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
