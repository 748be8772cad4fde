//! Backward-extrapolation weights and their polynomial exactness.
//!
//! Prints the alternating-binomial weight table for orders 1..6 and checks
//! that the three-point rule reproduces quadratics exactly.

use sada::numerics::{backward_extrapolate, extrapolation_weights, RingBuffer3, Vector};

fn main() {
    println!("order | weights (newest state first)");
    for k in 1..=6 {
        let w = extrapolation_weights(k);
        let formatted: Vec<String> = w.iter().map(|v| format!("{v:+}")).collect();
        println!("  {k}   | [{}]", formatted.join(", "));
    }

    // x(t) = 3t² − 2t + 1 sampled at t, t+h, t+2h; the k = 3 rule lands on
    // the exact value at t − h.
    let poly = |t: f64| 3.0 * t * t - 2.0 * t + 1.0;
    let (t, h) = (0.8, 0.05);
    let mut hist = RingBuffer3::new();
    for k in (0..3).rev() {
        let tk = t + k as f64 * h;
        hist.push(tk, Vector::new(vec![poly(tk)])).unwrap();
    }
    let est = backward_extrapolate(&hist).unwrap();
    let truth = poly(t - h);
    println!();
    println!("quadratic reproduction at t−h = {:.2}:", t - h);
    println!("  extrapolated {:+.15}", est[0]);
    println!("  exact        {:+.15}", truth);
    println!("  residual     {:.3e}", (est[0] - truth).abs());
}
