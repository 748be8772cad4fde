//! Convergence-order studies for the three numerical schemes on the
//! analytic test battery (sine, exponential, polynomial).

use crate::error::Result;
use crate::numerics::{
    adams_moulton_estimate, backward_extrapolate, lagrange_interpolate, LagrangeBuffer,
    RingBuffer3, Vector,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceScheme {
    AdamsMoulton,
    /// Lagrange interpolation with `nodes` interpolation points.
    LagrangeK,
    BackwardExtrap,
}

impl std::fmt::Display for ConvergenceScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConvergenceScheme::AdamsMoulton => "adams-moulton",
            ConvergenceScheme::LagrangeK => "lagrange-k",
            ConvergenceScheme::BackwardExtrap => "backward-extrap",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub scheme: String,
    pub function: String,
    pub h: f64,
    pub error: f64,
    /// log2(error ratio) against the previous (coarser) resolution; zero on
    /// the first row of each series.
    pub observed_order: f64,
}

struct TestFn {
    name: &'static str,
    f: fn(f64) -> f64,
    df: fn(f64) -> f64,
}

const BATTERY: &[TestFn] = &[
    TestFn { name: "sin", f: |t| t.sin(), df: |t| t.cos() },
    TestFn { name: "exp", f: |t| (-t).exp(), df: |t| -(-t).exp() },
    TestFn { name: "poly2", f: |t| 1.0 + 2.0 * t - 3.0 * t * t, df: |t| 2.0 - 6.0 * t },
];

/// Worst one-step Adams–Moulton estimator error over base points in
/// `[0.3, 1.3]` at spacing `h`, using exact gradients.
fn adams_moulton_error(tf: &TestFn, h: f64) -> f64 {
    let mut worst = 0.0_f64;
    let mut t0 = 0.3;
    while t0 <= 1.3 {
        let mut grads = RingBuffer3::new();
        for k in (0..3).rev() {
            grads
                .push(t0 + k as f64 * h, Vector::new(vec![(tf.df)(t0 + k as f64 * h)]))
                .expect("decreasing pushes");
        }
        let est = adams_moulton_estimate(&Vector::new(vec![(tf.f)(t0)]), &grads, h)
            .expect("uniform grid");
        worst = worst.max((est[0] - (tf.f)(t0 - h)).abs());
        t0 += 0.05;
    }
    worst
}

/// Worst one-step backward-extrapolation error over the same sweep.
fn backward_extrap_error(tf: &TestFn, h: f64) -> f64 {
    let mut worst = 0.0_f64;
    let mut t0 = 0.3;
    while t0 <= 1.3 {
        let mut hist = RingBuffer3::new();
        for k in (0..3).rev() {
            hist.push(t0 + k as f64 * h, Vector::new(vec![(tf.f)(t0 + k as f64 * h)]))
                .expect("decreasing pushes");
        }
        let est = backward_extrapolate(&hist).expect("full history");
        worst = worst.max((est[0] - (tf.f)(t0 - h)).abs());
        t0 += 0.05;
    }
    worst
}

/// Worst interior interpolation error with `nodes` points at spacing `h`.
fn lagrange_error(tf: &TestFn, nodes: usize, h: f64) -> f64 {
    let mut worst = 0.0_f64;
    let mut t0 = 0.3;
    while t0 <= 1.3 {
        let mut buf = LagrangeBuffer::new(nodes);
        for k in 0..nodes {
            buf.push(t0 + k as f64 * h, Vector::new(vec![(tf.f)(t0 + k as f64 * h)]))
                .expect("distinct nodes");
        }
        let span = (nodes - 1) as f64 * h;
        for q in 1..40 {
            let t = t0 + span * q as f64 / 40.0;
            let v = lagrange_interpolate(&buf, t).expect("enough nodes");
            worst = worst.max((v[0] - (tf.f)(t)).abs());
        }
        t0 += 0.05;
    }
    worst
}

/// Least-squares slope of log(error) against log(h).
pub fn fit_log_slope(hs: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &pts {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Error table over the battery at the given resolutions. For `lagrange-k`
/// the `nodes` argument selects the interpolation stencil (ignored
/// otherwise).
pub fn convergence_study(
    scheme: ConvergenceScheme,
    resolutions: &[f64],
    nodes: usize,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for tf in BATTERY {
        let mut prev: Option<(f64, f64)> = None;
        for &h in resolutions {
            let error = match scheme {
                ConvergenceScheme::AdamsMoulton => adams_moulton_error(tf, h),
                ConvergenceScheme::BackwardExtrap => backward_extrap_error(tf, h),
                ConvergenceScheme::LagrangeK => lagrange_error(tf, nodes, h),
            };
            let observed_order = match prev {
                Some((ph, pe)) if error > 0.0 && pe > 0.0 => (pe / error).ln() / (ph / h).ln(),
                _ => 0.0,
            };
            let label = match scheme {
                ConvergenceScheme::LagrangeK => format!("{scheme}{nodes}"),
                _ => scheme.to_string(),
            };
            rows.push(ConvergenceRow {
                scheme: label,
                function: tf.name.to_string(),
                h,
                error,
                observed_order,
            });
            prev = Some((h, error));
        }
    }
    Ok(rows)
}

/// Fitted slope for one battery function within a study's rows.
pub fn slope_for(rows: &[ConvergenceRow], function: &str) -> f64 {
    let hs: Vec<f64> = rows.iter().filter(|r| r.function == function).map(|r| r.h).collect();
    let es: Vec<f64> =
        rows.iter().filter(|r| r.function == function).map(|r| r.error).collect();
    fit_log_slope(&hs, &es)
}

/// The default resolution ladder: four halvings from 1e-2.
pub const DEFAULT_RESOLUTIONS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
