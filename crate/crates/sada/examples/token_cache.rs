//! The token-cache protocol on the fixed-seed layered model: exactness in
//! the degenerate cases and the cost/error trade as more tokens are pruned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sada::control::{tokenwise_execute, tokenwise_plan};
use sada::denoiser::{EvalCounter, LayerCache, TokenCachePlan, TokenFeatureMap, TokenModel};
use sada::harness::rel_l2;

fn random_map(model: &TokenModel, rng: &mut ChaCha8Rng) -> TokenFeatureMap {
    let mut m = TokenFeatureMap::zeros(model.tokens(), model.channels());
    for i in 0..model.tokens() {
        for v in m.row_mut(i) {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
    }
    m
}

fn main() {
    let model = TokenModel::default_toy(0);
    let (n, c, l) = (model.tokens(), model.channels(), model.num_layers());
    println!("token model: {l} layers over {n} tokens x {c} channels");
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Refresh interval 1: every step is a full recomputation, so the
    // protocol output is bit-identical to the plain forward pass.
    let mut cache = LayerCache::new(l, n, c, 0, 1);
    let mut counter = EvalCounter::default();
    let mut shadow = 0u64;
    let x = random_map(&model, &mut rng);
    let plan = TokenCachePlan::new((0..n / 2).collect(), (n / 2..n).collect(), n).unwrap();
    let (out, cost) =
        tokenwise_execute(&x, &plan, &mut cache, &model, 0.9, 0, &mut counter, &mut shadow)
            .unwrap();
    let full = model.forward_full(&x, 0.9, &mut shadow);
    let identical = out
        .to_vector()
        .as_slice()
        .iter()
        .zip(full.to_vector().as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("interval 1: bit-identical to full forward = {identical}, step cost {cost}");

    // Drifting inputs, interval 3, masks from a synthetic per-token signal:
    // measure output error against the full forward at each step.
    println!();
    println!("{:>8} {:>12} {:>14}", "reduce", "mean cost", "mean rel err");
    let mut totals = EvalCounter::default();
    let mut total_shadow = 0u64;
    for reduce_count in [0usize, 13, 26, 38, 51] {
        let mut cache = LayerCache::new(l, n, c, 0, 3);
        let mut counter = EvalCounter::default();
        let mut shadow = 0u64;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = random_map(&model, &mut rng);
        let mut cost_sum = 0.0;
        let mut err_sum = 0.0;
        let steps = 10;
        for step in 0..steps {
            let t = 0.9 - 0.05 * step as f64;
            // Synthetic stability signal: most-negative entries are pruned.
            let signal: Vec<f64> = (0..n)
                .map(|i| if i < reduce_count { -1.0 } else { 1.0 })
                .collect();
            let plan = tokenwise_plan(&signal, (8, 8)).unwrap();
            let (out, cost) = tokenwise_execute(
                &x, &plan, &mut cache, &model, t, step, &mut counter, &mut shadow,
            )
            .unwrap();
            let mut ignored = 0u64;
            let full = model.forward_full(&x, t, &mut ignored);
            cost_sum += cost;
            err_sum += rel_l2(&out.to_vector(), &full.to_vector()).unwrap();
            // drift the input a little
            for i in 0..n {
                for v in x.row_mut(i) {
                    *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        println!(
            "{reduce_count:>8} {:>12.3} {:>14.4e}",
            cost_sum / steps as f64,
            err_sum / steps as f64
        );
        totals.full_evals += counter.full_evals;
        totals.token_evals += counter.token_evals;
        total_shadow += shadow;
    }
    println!();
    println!(
        "accounting across the sweep: {} full passes + {} partial token-rows = {} rows computed (shadow tally {})",
        totals.full_evals,
        totals.token_evals,
        totals.full_evals * (n * l) as u64 + totals.token_evals,
        total_shadow
    );
}
