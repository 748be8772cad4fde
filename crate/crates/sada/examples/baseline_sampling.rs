//! Unaccelerated reference runs under all three solvers, with the exact
//! single-Gaussian flow as ground truth where it exists.

use sada::denoiser::{GaussianMixture, GmmOracle};
use sada::schedule::{NoiseSchedule, TimestepGrid};
use sada::solver::{run_baseline, SamplerConfig, SolverKind};
use sada::Vector;

fn main() {
    // Gaussian-mixture testbed: the solvers just run; determinism and
    // evaluation counts are the interesting part.
    let schedule = NoiseSchedule::default_vp();
    let gmm = GaussianMixture::seeded_testbed(4, vec![0.3, 0.7], 0.85, 1.0, 5).unwrap();
    let oracle = GmmOracle::epsilon_predictor(gmm, schedule.clone());
    let grid = TimestepGrid::for_schedule(50, &schedule).unwrap();
    for solver in [SolverKind::EulerPfOde, SolverKind::Dpmpp2m] {
        let cfg = SamplerConfig::new(solver, 50, 0);
        let out = run_baseline(&cfg, &oracle, &schedule, &grid).unwrap();
        println!(
            "{solver}: {} full evaluations, terminal[0..2] = [{:+.4}, {:+.4}]",
            out.counter.full_evals, out.terminal[0], out.terminal[1]
        );
    }

    // Single Gaussian: the probability-flow trajectory is closed-form, so
    // the discretization error is measurable exactly.
    let gmm = GaussianMixture::new(vec![1.0], vec![Vector::new(vec![1.0, 1.0])], vec![0.5]).unwrap();
    let oracle = GmmOracle::epsilon_predictor(gmm, schedule.clone());
    for (solver, steps) in [
        (SolverKind::EulerPfOde, 50),
        (SolverKind::EulerPfOde, 400),
        (SolverKind::Dpmpp2m, 50),
        (SolverKind::Dpmpp2m, 400),
    ] {
        let grid = TimestepGrid::for_schedule(steps, &schedule).unwrap();
        let cfg = SamplerConfig::new(solver, steps, 7);
        let out = run_baseline(&cfg, &oracle, &schedule, &grid).unwrap();
        let stats = |t: f64| {
            let (a, sigma) = schedule.scaling(t).unwrap();
            (a, (a * a * 0.5 + sigma * sigma).sqrt())
        };
        let (a0, s0) = stats(grid.times()[0]);
        let (a1, s1) = stats(grid.times()[steps - 1]);
        let x0 = &out.trajectory[0].x_t;
        let expect = Vector::new(
            x0.as_slice().iter().map(|x| a1 * 1.0 + s1 / s0 * (x - a0 * 1.0)).collect(),
        );
        let got = &out.trajectory[steps - 1].x_t;
        let rel = got.sub(&expect).unwrap().norm() / expect.norm();
        println!("{solver} N={steps}: relative error vs exact flow {rel:.3e}");
    }

    // Flow matching with the analytic velocity field.
    let schedule = NoiseSchedule::flow_linear();
    let gmm = GaussianMixture::seeded_testbed(4, vec![0.3, 0.7], 0.85, 1.0, 5).unwrap();
    let oracle = GmmOracle::velocity_predictor(gmm, schedule.clone());
    let grid = TimestepGrid::for_schedule(50, &schedule).unwrap();
    let cfg = SamplerConfig::new(SolverKind::EulerFlow, 50, 0);
    let out = run_baseline(&cfg, &oracle, &schedule, &grid).unwrap();
    println!(
        "{}: {} full evaluations, terminal[0..2] = [{:+.4}, {:+.4}]",
        SolverKind::EulerFlow,
        out.counter.full_evals,
        out.terminal[0],
        out.terminal[1]
    );
}
