//! The exact Gaussian-mixture denoiser against its independent oracles:
//! finite-difference score probes, the conditional-expectation velocity
//! route, and the forward-noising mean identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sada::denoiser::GaussianMixture;
use sada::schedule::{expected_mean_check, NoiseSchedule};
use sada::Vector;

fn main() {
    let schedule = NoiseSchedule::default_vp();
    let gmm = GaussianMixture::seeded_testbed(4, vec![0.3, 0.7], 2.0, 0.25, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);

    // Noise prediction vs a centered finite difference of the log density.
    let mut worst = 0.0_f64;
    for probe in 0..100 {
        let t = 0.05 + 0.9 * (probe as f64 / 99.0);
        let x = Vector::new((0..4).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect());
        let eps = gmm.epsilon(&x, t, &schedule).unwrap();
        let sigma = schedule.sigma(t).unwrap();
        let step = 1e-5;
        let mut fd = Vec::with_capacity(4);
        for i in 0..4 {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += step;
            let mut xm = x.clone();
            xm.as_mut_slice()[i] -= step;
            let grad = (gmm.marginal_log_density(&xp, t, &schedule).unwrap()
                - gmm.marginal_log_density(&xm, t, &schedule).unwrap())
                / (2.0 * step);
            fd.push(-sigma * grad);
        }
        let fd = Vector::new(fd);
        worst = worst.max(eps.sub(&fd).unwrap().norm() / fd.norm());
    }
    println!("noise prediction vs finite-difference score: worst relative deviation {worst:.2e}");

    // Velocity: conditional-expectation route vs probability-flow route.
    let mut worst_v = 0.0_f64;
    for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for _ in 0..20 {
            let x =
                Vector::new((0..4).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect());
            let u_ce = gmm.velocity(&x, t, &schedule).unwrap();
            let eps = gmm.epsilon(&x, t, &schedule).unwrap();
            let u_pf = schedule.pf_ode_gradient(&x, &eps, t).unwrap();
            worst_v = worst_v.max(u_ce.sub(&u_pf).unwrap().norm() / u_pf.norm().max(1e-9));
        }
    }
    println!("velocity: conditional-expectation vs probability-flow route: {worst_v:.2e}");

    // Forward-noising mean identity at a grid of times.
    let mean = gmm.mean();
    for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let check = expected_mean_check(
            &schedule,
            t,
            100_000,
            &mean,
            |rng| gmm.sample(rng),
            &mut rng,
        )
        .unwrap();
        let worst_sigmas = (0..4)
            .map(|i| (check.empirical[i] - check.predicted[i]).abs() / check.stderr[i])
            .fold(0.0_f64, f64::max);
        println!(
            "mean check at t={t:.1}: predicted[0] {:+.4}, empirical[0] {:+.4}, worst |dev| {worst_sigmas:.2} stderr",
            check.predicted[0], check.empirical[0]
        );
    }
}
