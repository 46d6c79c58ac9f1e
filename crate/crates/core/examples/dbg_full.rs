//! Scratch probe: presolve power and search cost at fixture scale.
use std::time::Instant;

use tdcoord_core::bnb::*;
use tdcoord_core::kkt::*;
use tdcoord_core::par::ExecMode;
use tdcoord_core::solver::*;
use tdcoord_core::tn::*;

fn main() {
    let horizon: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(6);
    let mut bundle = tdcoord_core::ingest::reference_bundle();
    bundle.horizon = horizon;
    let tn_text = include_str!("../fixtures/ieee30.case");
    let dn_text = include_str!("../fixtures/feeder33.case");
    let scenario = tdcoord_core::ingest::build_scenario(&bundle, tn_text, dn_text).unwrap();

    let solver = ClarabelSolver::new();
    let t0 = Instant::now();
    let prog = build_tn_program(&scenario.tn, &scenario.cfg, Some(&BoundaryFixing::new()));
    let direct = solve_tn_direct(&prog, &solver, &SolveSettings::default()).unwrap();
    let free_prog = build_tn_program(&scenario.tn, &scenario.cfg, None);
    let free = solve_tn_direct(&free_prog, &solver, &SolveSettings::default()).unwrap();
    let dual_m = dual_bound_from_solves([&direct.solution, &free.solution]);
    let kkt = derive_kkt(&prog).unwrap();
    let lin = big_m_linearize(&prog, &kkt, &BigMPolicy::from_dual_bound(dual_m)).unwrap();
    let single = assemble_single_level(&prog, &scenario, &kkt, &lin).unwrap();
    println!(
        "T={horizon} assembly {:.2}s; {} vars, {} binaries, dual_m {:.1}",
        t0.elapsed().as_secs_f64(),
        single.model.vars.len(),
        single.model.binary_ids().len(),
        dual_m,
    );

    let t1 = Instant::now();
    let pre = presolve_fix(&single, 1e-7);
    println!(
        "presolve {:.2}s: fixed {} of {} (never {} always {} probed {})",
        t1.elapsed().as_secs_f64(),
        pre.overrides.len(),
        single.model.binary_ids().len(),
        pre.switches_never_binding,
        pre.switches_always_binding,
        pre.probed,
    );

    let t2 = Instant::now();
    let opts = BnbOptions {
        node_limit: 400,
        time_limit: 1200.0,
        deterministic: false,
        exec: ExecMode::Parallel,
        ..BnbOptions::default()
    };
    match solve_bnb(&single, &solver, &opts) {
        Ok(r) => println!(
            "bnb {:.2}s: status {:?} obj {:.6} bound {:.6} gap {:.3e} nodes {}",
            t2.elapsed().as_secs_f64(),
            r.status,
            r.objective,
            r.best_bound,
            r.gap,
            r.nodes
        ),
        Err(e) => println!("bnb {:.2}s: ERROR {e}", t2.elapsed().as_secs_f64()),
    }
}
