//! Plain-text sparse export of a model, for cross-checking with external
//! tools.
//!
//! # Format
//!
//! Line-oriented, whitespace-separated, one record per line. Floats use
//! Rust's shortest round-trip formatting (`inf`/`-inf` for unbounded). Keys
//! contain no whitespace and always end the line. Record kinds, in file
//! order:
//!
//! ```text
//! model v1
//! obj_constant <c>
//! vars <n>
//! var <id> <lb> <ub> <binary 0|1> <quad> <lin> <key>      (n lines)
//! eqs <n>
//! eq <row> <rhs> <nterms> <key>                           (n lines…)
//! et <row> <var> <coef>                                   (…each followed by its terms)
//! ineqs <n>
//! ineq <row> <rhs> <nterms> <key>
//! it <row> <var> <coef>
//! cones <n>
//! cone <cone> <ntail> <key>
//! ch <cone> <const> <nterms>                              (head entry)
//! cht <cone> <var> <coef>
//! ct <cone> <k> <const> <nterms>                          (tail entry k)
//! ctt <cone> <k> <var> <coef>
//! end
//! ```
//!
//! Equality rows mean `terms·x = rhs`, inequality rows `terms·x ≤ rhs`,
//! cones `head ≥ ‖tail‖₂` with affine entries.

use std::fmt::Write as _;

use super::{AffExpr, ConicModel};

/// Render `model` in the documented sparse text format.
pub fn to_sparse_text(model: &ConicModel) -> String {
    let mut out = String::new();
    out.push_str("model v1\n");
    let _ = writeln!(out, "obj_constant {}", model.obj_constant);

    let _ = writeln!(out, "vars {}", model.vars.len());
    for (i, v) in model.vars.iter().enumerate() {
        let _ = writeln!(
            out,
            "var {} {} {} {} {} {} {}",
            i,
            v.lb,
            v.ub,
            u8::from(v.binary),
            v.quad,
            v.lin,
            v.key
        );
    }

    let _ = writeln!(out, "eqs {}", model.eq_rows.len());
    for (r, row) in model.eq_rows.iter().enumerate() {
        let _ = writeln!(out, "eq {} {} {} {}", r, row.rhs, row.terms.len(), row.key);
        for &(v, c) in &row.terms {
            let _ = writeln!(out, "et {r} {v} {c}");
        }
    }

    let _ = writeln!(out, "ineqs {}", model.ineq_rows.len());
    for (r, row) in model.ineq_rows.iter().enumerate() {
        let _ = writeln!(out, "ineq {} {} {} {}", r, row.rhs, row.terms.len(), row.key);
        for &(v, c) in &row.terms {
            let _ = writeln!(out, "it {r} {v} {c}");
        }
    }

    let _ = writeln!(out, "cones {}", model.cones.len());
    for (ci, cone) in model.cones.iter().enumerate() {
        let _ = writeln!(out, "cone {} {} {}", ci, cone.tail.len(), cone.key);
        write_entry(&mut out, "ch", &format!("{ci}"), &cone.head);
        for (k, entry) in cone.tail.iter().enumerate() {
            write_entry(&mut out, "ct", &format!("{ci} {k}"), entry);
        }
    }
    out.push_str("end\n");
    out
}

fn write_entry(out: &mut String, tag: &str, prefix: &str, e: &AffExpr) {
    let _ = writeln!(out, "{tag} {prefix} {} {}", e.constant, e.terms.len());
    for &(v, c) in &e.terms {
        let _ = writeln!(out, "{tag}t {prefix} {v} {c}");
    }
}
