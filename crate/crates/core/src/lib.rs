//! DSO-led transmission/distribution coordination toolkit.
//!
//! This crate models a day-ahead coordination problem between a transmission
//! system operator (TSO) and the distribution system operators (DSOs) attached
//! to it, with the DSOs acting as the leader:
//!
//! * the transmission side runs a DC optimal power flow with quadratic thermal
//!   costs, utility PV, and per-boundary-bus energy exchange blocks
//!   ([`tn`]);
//! * each active distribution network (ADN) runs a second-order-cone relaxed
//!   branch-flow dispatch with agent-level PV, batteries, and peer-to-peer
//!   trading ([`adn`]);
//! * the leader/follower structure is collapsed into a single mixed-integer
//!   second-order-cone program by replacing the transmission problem with its
//!   first-order optimality system, linearized through Big-M complementarity
//!   switches ([`kkt`]);
//! * the resulting MISOCP is solved with a branch-and-bound search over the
//!   battery-mode, trade-role, and complementarity binaries ([`bnb`]), backed
//!   by a pluggable conic subproblem solver ([`solver`]);
//! * reproducible experiment pipelines (leader-first vs follower-first
//!   comparison, PV competition, congestion relief, scaling) live in
//!   [`experiments`].
//!
//! Model ingredients (networks, profiles, scenario economics) are declared in
//! [`net`] and loaded from human-readable case files by [`ingest`], which also
//! ships a reference fixture: an IEEE 30-bus transmission grid with five
//! 33-bus feeders attached.
//!
//! # Execution modes
//!
//! Data-parallel paths (branch-and-bound node evaluation, brute-force
//! enumeration, batched experiment legs) are compiled in by the `parallel`
//! feature (default) and selected at runtime through [`par::ExecMode`].
//! Deterministic runs force the sequential mode; all container iteration is
//! order-stable, so repeated runs produce byte-identical reports.

#![warn(missing_docs)]
#![forbid(unsafe_code)]

pub mod keys;
pub mod net;
pub mod model;
pub mod par;
pub mod solver;
pub mod adn;
pub mod tn;
pub mod ingest;
pub mod kkt;
pub mod bnb;

pub use keys::Key;
pub use model::{ConicModel, VarId};
pub use par::ExecMode;
