//! A paired accelerated run: the controller's per-step mode timeline, the
//! evaluation budget, and terminal fidelity against the same-seed baseline.

use sada::control::{sada_run, PolicyParams};
use sada::denoiser::{GaussianMixture, GmmOracle};
use sada::harness::rel_l2;
use sada::schedule::{NoiseSchedule, TimestepGrid};
use sada::solver::{run_baseline, SadaMode, SamplerConfig, SolverKind};

fn main() {
    let schedule = NoiseSchedule::default_vp();
    let gmm = GaussianMixture::seeded_testbed(4, vec![0.3, 0.7], 0.85, 1.0, 5).unwrap();
    let oracle = GmmOracle::epsilon_predictor(gmm, schedule.clone());
    let grid = TimestepGrid::for_schedule(50, &schedule).unwrap();

    for solver in [SolverKind::EulerPfOde, SolverKind::Dpmpp2m] {
        let cfg = SamplerConfig::new(solver, 50, 3);
        let baseline = run_baseline(&cfg, &oracle, &schedule, &grid).unwrap();
        let (accelerated, log) =
            sada_run(&cfg, &oracle, &schedule, &grid, &PolicyParams::default()).unwrap();

        let timeline: String = accelerated
            .trajectory
            .iter()
            .map(|r| match r.mode {
                SadaMode::Fresh => 'F',
                SadaMode::StepWise => 's',
                SadaMode::MultistepWise => 'm',
                SadaMode::TokenWise => 't',
            })
            .collect();
        println!("{solver}");
        println!("  mode timeline : {timeline}");
        if let Some(idx) = log.multistep_entered_at {
            println!("  multistep regime entered after step {idx}");
        }
        let rel = rel_l2(&accelerated.terminal, &baseline.terminal).unwrap();
        println!(
            "  evaluations   : {:.1} of {} ({:.2}x reduction)",
            accelerated.full_equivalents(),
            baseline.full_equivalents(),
            baseline.full_equivalents() / accelerated.full_equivalents()
        );
        println!("  terminal rel-l2 vs baseline: {rel:.5}");
        let stable = log.criterion.iter().filter(|c| c.stable).count();
        println!(
            "  criterion     : {stable}/{} evaluations judged stable",
            log.criterion.len()
        );
    }
}
