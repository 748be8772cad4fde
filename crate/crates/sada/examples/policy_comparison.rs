//! Head-to-head against the third-difference bypass policy at a matched
//! evaluation budget: the bypass threshold is bisected until both policies
//! spend the same number of denoiser-call equivalents, then terminal
//! fidelity is compared.

use sada::harness::{compare_policies, RunConfig, SeedSpec};

fn main() {
    let mut cfg = RunConfig::default();
    cfg.solver = sada::solver::SolverKind::EulerPfOde;
    cfg.seeds = SeedSpec((0..50).collect());
    cfg.out_dir = std::env::temp_dir().join("sada_policy_comparison");
    let summary = compare_policies(&cfg, 0.05).unwrap();

    println!("seeds                : {}", summary.seeds);
    println!(
        "controller           : {:.3}x speedup, mean rel-l2 {:.5}",
        summary.sada_nfe_speedup, summary.sada_mean_rel_l2
    );
    println!(
        "bypass (tau {:+.4})  : {:.3}x speedup, mean rel-l2 {:.5}",
        summary.eq5_tau, summary.eq5_nfe_speedup, summary.eq5_mean_rel_l2
    );
    println!(
        "budget mismatch      : {:.2}% (tolerance {:.0}%)",
        100.0 * summary.nfe_mismatch,
        100.0 * summary.matched_within
    );
    let ratio = summary.eq5_mean_rel_l2 / summary.sada_mean_rel_l2.max(f64::MIN_POSITIVE);
    println!("error ratio bypass/controller at matched budget: {ratio:.1}x");
}
