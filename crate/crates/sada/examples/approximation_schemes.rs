//! Paired comparison of the two skipped-state estimators: Adams–Moulton
//! from the gradient history versus third-order backward extrapolation of
//! the state history. Both run the same forced alternating skip schedule;
//! reconstruction error is measured against the same-seed baseline at every
//! skipped step.

use sada::control::ForcedStepwisePolicy;
use sada::denoiser::{GaussianMixture, GmmOracle};
use sada::harness::mse;
use sada::schedule::{NoiseSchedule, TimestepGrid};
use sada::solver::{run_baseline, run_sampler, SadaMode, SamplerConfig, SkipSource, SolverKind};

fn main() {
    let schedule = NoiseSchedule::default_vp();
    let gmm = GaussianMixture::seeded_testbed(4, vec![0.3, 0.7], 0.85, 1.0, 5).unwrap();
    let oracle = GmmOracle::epsilon_predictor(gmm, schedule.clone());
    let n = 50;
    let grid = TimestepGrid::for_schedule(n, &schedule).unwrap();
    let seeds = 50u64;

    let mut tables = [vec![Vec::new(); n], vec![Vec::new(); n]];
    for seed in 0..seeds {
        let cfg = SamplerConfig::new(SolverKind::EulerPfOde, n, seed);
        let baseline = run_baseline(&cfg, &oracle, &schedule, &grid).unwrap();
        for (slot, source) in
            [SkipSource::AdamsMoulton, SkipSource::BackwardExtrapolate].into_iter().enumerate()
        {
            let mut policy = ForcedStepwisePolicy::new(source);
            let run = run_sampler(&cfg, &oracle, &schedule, &grid, &mut policy).unwrap();
            for (i, (a, b)) in run.trajectory.iter().zip(&baseline.trajectory).enumerate() {
                if a.mode == SadaMode::StepWise {
                    tables[slot][i].push(mse(&a.x0_t, &b.x0_t).unwrap());
                }
            }
        }
    }

    println!("{:>5} {:>14} {:>14} {:>10}", "step", "am mse", "fd mse", "am/fd");
    let mut overall = [0.0_f64; 2];
    let mut counts = [0usize; 2];
    for i in 0..n {
        if tables[0][i].is_empty() {
            continue;
        }
        let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let am = mean(&tables[0][i]);
        let fd = mean(&tables[1][i]);
        overall[0] += tables[0][i].iter().sum::<f64>();
        overall[1] += tables[1][i].iter().sum::<f64>();
        counts[0] += tables[0][i].len();
        counts[1] += tables[1][i].len();
        if i % 8 == 3 || i == n - 1 {
            println!("{i:>5} {am:>14.4e} {fd:>14.4e} {:>10.3}", am / fd);
        }
    }
    let am_overall = overall[0] / counts[0] as f64;
    let fd_overall = overall[1] / counts[1] as f64;
    println!();
    println!("overall reconstruction MSE over {seeds} paired seeds:");
    println!("  adams-moulton        {am_overall:.4e}");
    println!("  backward extrapolate {fd_overall:.4e}");
    println!("  ratio                {:.3}", am_overall / fd_overall);
}
