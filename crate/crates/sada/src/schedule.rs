//! Noise schedules, timestep grids, and trajectory-gradient formulas.
//!
//! A schedule exposes the forward-path scaling pair `(a_t, σ_t)` with
//! `x_t = a_t·x₀ + σ_t·ε`. For the variance-preserving kinds
//! `a_t = √ᾱ_t` and `σ_t = √(1−ᾱ_t)`; the linear flow kind uses the
//! straight-path scaling `(1−t, t)`. On top of that sit the drift and
//! diffusion coefficients of the probability-flow ODE, the gradient
//! `y_t = dx/dt` for both conventions, and data prediction
//! `x₀ᵗ = (x_t − σ_t·ε)/a_t` together with its inversions.
//!
//! Schedule derivatives are taken by centered finite differences with step
//! `1e−5` on the continuous schedule, uniformly across schedule kinds.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Step used for centered finite-difference schedule derivatives.
pub const DERIVATIVE_STEP: f64 = 1e-5;

/// Sigma below this is treated as a boundary singularity.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Alpha-bar below this cannot back out a data prediction.
pub const ALPHA_BAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    VpLinear,
    VpCosine,
    FlowLinear,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScheduleKind::VpLinear => "vp-linear",
            ScheduleKind::VpCosine => "vp-cosine",
            ScheduleKind::FlowLinear => "flow-linear",
        };
        f.write_str(s)
    }
}

/// Continuous noise schedule over `t ∈ [0, 1]` (0 = data, 1 = noise).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    num_train_steps: u32,
    beta_start: f64,
    beta_end: f64,
}

impl NoiseSchedule {
    /// Linear-beta variance-preserving schedule. The continuous form is
    /// `log ᾱ(t) = −T·(β₀·t + (β₁−β₀)·t²/2)`, matching the discrete
    /// product `Π(1−β_i)` to well under 1% over the training range.
    pub fn vp_linear(num_train_steps: u32, beta_start: f64, beta_end: f64) -> Self {
        Self { kind: ScheduleKind::VpLinear, num_train_steps, beta_start, beta_end }
    }

    /// Squared-cosine schedule with the customary 0.008 offset.
    pub fn vp_cosine(num_train_steps: u32) -> Self {
        Self { kind: ScheduleKind::VpCosine, num_train_steps, beta_start: 0.0, beta_end: 0.0 }
    }

    /// Straight-path scaling `(a, σ) = (1−t, t)` for flow matching.
    pub fn flow_linear() -> Self {
        Self { kind: ScheduleKind::FlowLinear, num_train_steps: 1000, beta_start: 0.0, beta_end: 0.0 }
    }

    /// The conventional default: vp-linear, β ∈ (1e−4, 0.02), 1000 steps.
    pub fn default_vp() -> Self {
        Self::vp_linear(1000, 1e-4, 0.02)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn num_train_steps(&self) -> u32 {
        self.num_train_steps
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(Error::TimeOutOfRange(t));
        }
        Ok(())
    }

    /// Forward scaling `a(t)` with `x_t = a·x₀ + σ·ε` (unchecked domain).
    fn scale_raw(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::VpLinear => {
                let db = self.beta_end - self.beta_start;
                let integral = self.beta_start * t + 0.5 * db * t * t;
                (-0.5 * self.num_train_steps as f64 * integral).exp()
            }
            ScheduleKind::VpCosine => {
                let s = 0.008;
                let f = |u: f64| ((u + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos();
                (f(t) / f(0.0)).max(0.0)
            }
            ScheduleKind::FlowLinear => 1.0 - t,
        }
    }

    fn sigma_raw(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::FlowLinear => t,
            _ => {
                let a = self.scale_raw(t);
                (1.0 - a * a).max(0.0).sqrt()
            }
        }
    }

    /// `ᾱ(t) = a(t)²`.
    pub fn alpha_bar(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let a = self.scale_raw(t);
        Ok(a * a)
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.sigma_raw(t))
    }

    /// The pair `(a(t), σ(t))`.
    pub fn scaling(&self, t: f64) -> Result<(f64, f64)> {
        self.check_domain(t)?;
        Ok((self.scale_raw(t), self.sigma_raw(t)))
    }

    /// Drift coefficient `f(t) = d/dt log a(t)`, centered finite difference.
    pub fn drift_coefficient(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let h = DERIVATIVE_STEP.min(t.min(1.0 - t)).max(1e-9);
        let ap = self.scale_raw(t + h);
        let am = self.scale_raw(t - h);
        if ap <= 0.0 || am <= 0.0 {
            return Err(Error::AlphaBarUnderflow { t, alpha_bar: ap.min(am) * ap.min(am) });
        }
        Ok((ap.ln() - am.ln()) / (2.0 * h))
    }

    /// Squared diffusion coefficient `g²(t) = d(σ²)/dt − 2·f(t)·σ²`, the
    /// variance-preserving probability-flow form.
    pub fn diffusion_squared(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let f = self.drift_coefficient(t)?;
        let h = DERIVATIVE_STEP.min(t.min(1.0 - t)).max(1e-9);
        let sp = self.sigma_raw(t + h);
        let sm = self.sigma_raw(t - h);
        let sigma = self.sigma_raw(t);
        let sigma_dot = (sp - sm) / (2.0 * h);
        Ok(2.0 * sigma * sigma_dot - 2.0 * f * sigma * sigma)
    }

    /// Probability-flow gradient `y_t = f(t)·x_t + g²(t)/(2σ_t)·ε`.
    pub fn pf_ode_gradient(&self, x: &Vector, eps: &Vector, t: f64) -> Result<Vector> {
        let sigma = self.sigma(t)?;
        if sigma < SIGMA_FLOOR {
            return Err(Error::SigmaSingularity { t, sigma });
        }
        let f = self.drift_coefficient(t)?;
        let g2 = self.diffusion_squared(t)?;
        x.scale(f).axpy(g2 / (2.0 * sigma), eps)
    }

    /// Data prediction `x₀ᵗ = (x_t − σ_t·ε)/a_t`.
    pub fn data_prediction(&self, x: &Vector, eps: &Vector, t: f64) -> Result<Vector> {
        let (a, sigma) = self.scaling(t)?;
        if a * a <= ALPHA_BAR_FLOOR {
            return Err(Error::AlphaBarUnderflow { t, alpha_bar: a * a });
        }
        Ok(x.axpy(-sigma, eps)?.scale(1.0 / a))
    }

    /// Inversion of `data_prediction`: `ε = (x_t − a_t·x₀)/σ_t`.
    pub fn epsilon_from_data_prediction(&self, x: &Vector, x0: &Vector, t: f64) -> Result<Vector> {
        let (a, sigma) = self.scaling(t)?;
        if sigma < SIGMA_FLOOR {
            return Err(Error::SigmaSingularity { t, sigma });
        }
        Ok(x.axpy(-a, x0)?.scale(1.0 / sigma))
    }

    /// Forward noising `x_t = a_t·x₀ + σ_t·ε`.
    pub fn forward_noise(&self, x0: &Vector, eps: &Vector, t: f64) -> Result<Vector> {
        let (a, sigma) = self.scaling(t)?;
        x0.scale(a).axpy(sigma, eps)
    }

    /// Log signal-to-noise ratio `λ(t) = log(a/σ)`.
    pub fn log_snr(&self, t: f64) -> Result<f64> {
        let (a, sigma) = self.scaling(t)?;
        if a * a <= ALPHA_BAR_FLOOR {
            return Err(Error::AlphaBarUnderflow { t, alpha_bar: a * a });
        }
        if sigma < SIGMA_FLOOR {
            return Err(Error::SigmaSingularity { t, sigma });
        }
        Ok((a / sigma).ln())
    }

    /// Grid margin that drops the exact boundary steps.
    pub fn boundary_margin(&self) -> f64 {
        1.0 / self.num_train_steps as f64
    }
}

/// Flow-matching gradient: the model output already is `dx/dt`.
pub fn flow_gradient(u: &Vector) -> Vector {
    u.clone()
}

/// Data prediction along the straight flow path: `x₀ = x_t − t·u`.
pub fn flow_data_prediction(x: &Vector, u: &Vector, t: f64) -> Result<Vector> {
    x.axpy(-t, u)
}

/// Inversion of [`flow_data_prediction`]: `u = (x_t − x₀)/t`.
pub fn flow_velocity_from_data_prediction(x: &Vector, x0: &Vector, t: f64) -> Result<Vector> {
    if t.abs() < SIGMA_FLOOR {
        return Err(Error::SigmaSingularity { t, sigma: t });
    }
    Ok(x.sub(x0)?.scale(1.0 / t))
}

/// Strictly decreasing sampling times in `(0, 1)`, uniformly spaced, with
/// the exact boundary steps excluded.
#[derive(Debug, Clone)]
pub struct TimestepGrid {
    times: Vec<f64>,
}

impl TimestepGrid {
    pub fn uniform(count: usize, t_min: f64, t_max: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if count < 2 {
            problems.push(format!("grid needs >= 2 steps, got {count}"));
        }
        if !(t_min > 0.0 && t_max < 1.0 && t_min < t_max) {
            problems.push(format!(
                "grid bounds must satisfy 0 < t_min < t_max < 1, got ({t_min}, {t_max})"
            ));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        let n = count;
        let step = (t_max - t_min) / (n - 1) as f64;
        let times = (0..n).map(|i| t_max - i as f64 * step).collect();
        Ok(Self { times })
    }

    /// Uniform grid over the schedule's interior, one boundary margin in
    /// from each end.
    pub fn for_schedule(count: usize, schedule: &NoiseSchedule) -> Result<Self> {
        let m = schedule.boundary_margin();
        Self::uniform(count, m, 1.0 - m)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Positive spacing between consecutive times.
    pub fn spacing(&self) -> f64 {
        self.times[0] - self.times[1]
    }
}

/// Result of the forward-noising mean check: the Monte-Carlo mean of
/// `x_t = a·x₀ + σ·ε` against the prediction `a·E[x₀]`, with per-coordinate
/// standard errors for the caller's tolerance test.
#[derive(Debug, Clone)]
pub struct MeanCheck {
    pub empirical: Vector,
    pub predicted: Vector,
    pub stderr: Vector,
}

/// Draws `n_samples` forward-noised samples at time `t` from the data
/// distribution represented by `sample_x0` and compares their empirical mean
/// with `a(t)·E[x₀]`.
pub fn expected_mean_check<R: Rng>(
    schedule: &NoiseSchedule,
    t: f64,
    n_samples: usize,
    mean_x0: &Vector,
    mut sample_x0: impl FnMut(&mut R) -> Vector,
    rng: &mut R,
) -> Result<MeanCheck> {
    if n_samples < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: n_samples });
    }
    let (a, _sigma) = schedule.scaling(t)?;
    let dim = mean_x0.len();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..n_samples {
        let x0 = sample_x0(rng);
        if x0.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x0.len() });
        }
        let eps = Vector::new((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        let xt = schedule.forward_noise(&x0, &eps, t)?;
        for (i, v) in xt.as_slice().iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let n = n_samples as f64;
    let empirical = Vector::new(sum.iter().map(|s| s / n).collect());
    let stderr = Vector::new(
        sum_sq
            .iter()
            .zip(empirical.as_slice())
            .map(|(sq, m)| ((sq / n - m * m).max(0.0) / n).sqrt())
            .collect(),
    );
    Ok(MeanCheck { empirical, predicted: mean_x0.scale(a), stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vp_linear_endpoints() {
        let s = NoiseSchedule::default_vp();
        assert!((s.alpha_bar(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(s.sigma(0.0).unwrap() < 1e-6);
        assert!(s.alpha_bar(1.0).unwrap() < 1e-4);
        assert!((s.sigma(1.0).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn vp_cosine_endpoints() {
        let s = NoiseSchedule::vp_cosine(1000);
        assert!((s.alpha_bar(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(s.alpha_bar(1.0).unwrap() < 1e-3);
    }

    #[test]
    fn domain_errors() {
        let s = NoiseSchedule::default_vp();
        assert!(matches!(s.alpha_bar(-0.1), Err(Error::TimeOutOfRange(_))));
        assert!(matches!(s.sigma(1.5), Err(Error::TimeOutOfRange(_))));
    }

    /// Independent oracle: the explicit discrete product Π(1−β_i).
    fn alpha_bar_product(num_steps: u32, beta_start: f64, beta_end: f64, t: f64) -> f64 {
        let n = (t * num_steps as f64).round() as u32;
        let mut acc = 1.0;
        for i in 1..=n {
            let beta =
                beta_start + (i - 1) as f64 / (num_steps - 1) as f64 * (beta_end - beta_start);
            acc *= 1.0 - beta;
        }
        acc
    }

    #[test]
    fn vp_linear_matches_discrete_product() {
        let s = NoiseSchedule::default_vp();
        let product = alpha_bar_product(1000, 1e-4, 0.02, 0.5);
        let closed = s.alpha_bar(0.5).unwrap();
        let rel = (closed - product).abs() / product;
        assert!(rel < 0.01, "relative deviation {rel}");
    }

    #[test]
    fn monotone_over_grid() {
        for s in [
            NoiseSchedule::default_vp(),
            NoiseSchedule::vp_cosine(1000),
            NoiseSchedule::flow_linear(),
        ] {
            let grid = TimestepGrid::for_schedule(64, &s).unwrap();
            let mut prev_ab = f64::NEG_INFINITY;
            let mut prev_sig = f64::INFINITY;
            // Grid times decrease, so walk them reversed for increasing t.
            for t in grid.times().iter().rev() {
                let ab = s.alpha_bar(*t).unwrap();
                let sig = s.sigma(*t).unwrap();
                if prev_ab != f64::NEG_INFINITY {
                    assert!(ab < prev_ab, "alpha-bar must decrease in t");
                    assert!(sig > prev_sig, "sigma must increase in t");
                }
                prev_ab = ab;
                prev_sig = sig;
                assert!(*t > 0.0 && *t < 1.0);
            }
        }
    }

    /// vp-linear has closed-form derivatives; check both finite-difference
    /// routes against them at t = 0.5.
    #[test]
    fn drift_and_diffusion_match_closed_forms() {
        let s = NoiseSchedule::default_vp();
        let t = 0.5;
        let tt = 1000.0;
        let (b0, b1) = (1e-4, 0.02);
        let f_closed = -0.5 * tt * (b0 + (b1 - b0) * t);
        let f = s.drift_coefficient(t).unwrap();
        assert!((f - f_closed).abs() < 1e-6, "f {f} vs {f_closed}");

        let a2 = s.alpha_bar(t).unwrap();
        let sigma2 = 1.0 - a2;
        // d(σ²)/dt = −d(ᾱ)/dt = −2 f ᾱ, so g² = −2f ᾱ − 2f σ² = −2f.
        let g2_closed = -2.0 * f_closed * a2 - 2.0 * f_closed * sigma2;
        let g2 = s.diffusion_squared(t).unwrap();
        assert!((g2 - g2_closed).abs() < 1e-6, "g2 {g2} vs {g2_closed}");
    }

    #[test]
    fn pf_gradient_with_zero_noise_is_pure_drift() {
        let s = NoiseSchedule::default_vp();
        let x = Vector::new(vec![1.0, -2.0]);
        let y = s.pf_ode_gradient(&x, &Vector::zeros(2), 0.5).unwrap();
        let f = s.drift_coefficient(0.5).unwrap();
        for i in 0..2 {
            assert_eq!(y[i].to_bits(), (f * x[i]).to_bits());
        }
    }

    #[test]
    fn sigma_singularity_guard() {
        let s = NoiseSchedule::default_vp();
        let x = Vector::new(vec![1.0]);
        assert!(matches!(
            s.pf_ode_gradient(&x, &Vector::zeros(1), 0.0),
            Err(Error::SigmaSingularity { .. })
        ));
    }

    #[test]
    fn data_prediction_round_trip() {
        let s = NoiseSchedule::default_vp();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = 0.05 + 0.9 * rng.gen::<f64>();
            let x0 = Vector::new((0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            let eps = Vector::new((0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            let xt = s.forward_noise(&x0, &eps, t).unwrap();
            let rec = s.data_prediction(&xt, &eps, t).unwrap();
            for i in 0..4 {
                assert!((rec[i] - x0[i]).abs() <= 1e-12, "t={t} entry {i}");
            }
            let eps_rec = s.epsilon_from_data_prediction(&xt, &rec, t).unwrap();
            for i in 0..4 {
                assert!((eps_rec[i] - eps[i]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn data_prediction_underflow_guard() {
        // Cosine schedule hits ᾱ = 0 exactly at t = 1.
        let s = NoiseSchedule::vp_cosine(1000);
        let x = Vector::new(vec![1.0]);
        assert!(matches!(
            s.data_prediction(&x, &Vector::zeros(1), 1.0),
            Err(Error::AlphaBarUnderflow { .. })
        ));
    }

    #[test]
    fn flow_helpers_round_trip() {
        let u = Vector::new(vec![1.0, 2.0]);
        assert_eq!(flow_gradient(&u).as_slice(), &[1.0, 2.0]);
        let s = NoiseSchedule::flow_linear();
        let t = 0.4;
        let x0 = Vector::new(vec![0.5, -1.0]);
        let eps = Vector::new(vec![1.0, 1.0]);
        let xt = s.forward_noise(&x0, &eps, t).unwrap();
        // u = ε − x₀ on the straight path.
        let u = eps.sub(&x0).unwrap();
        let rec = flow_data_prediction(&xt, &u, t).unwrap();
        for i in 0..2 {
            assert!((rec[i] - x0[i]).abs() < 1e-12);
        }
        let u_rec = flow_velocity_from_data_prediction(&xt, &rec, t).unwrap();
        for i in 0..2 {
            assert!((u_rec[i] - u[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_excludes_boundaries_and_is_uniform() {
        let s = NoiseSchedule::default_vp();
        let g = TimestepGrid::for_schedule(50, &s).unwrap();
        assert_eq!(g.len(), 50);
        let times = g.times();
        assert!((times[0] - 0.999).abs() < 1e-12);
        assert!((times[49] - 0.001).abs() < 1e-12);
        let h = g.spacing();
        for w in times.windows(2) {
            assert!(((w[0] - w[1]) - h).abs() < 1e-12);
        }
        assert!(TimestepGrid::uniform(1, 0.1, 0.9).is_err());
        assert!(TimestepGrid::uniform(10, 0.0, 0.9).is_err());
    }

    #[test]
    fn mean_check_degenerate_distribution() {
        let s = NoiseSchedule::default_vp();
        // Locate t* with ᾱ(t*) = 0.25 by bisection, then the prediction for
        // a point mass at [1] is exactly [0.5].
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if s.alpha_bar(mid).unwrap() > 0.25 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t_star = 0.5 * (lo + hi);
        let mean = Vector::new(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let check = expected_mean_check(
            &s,
            t_star,
            20_000,
            &mean,
            |_| Vector::new(vec![1.0]),
            &mut rng,
        )
        .unwrap();
        assert!((check.predicted[0] - 0.5).abs() < 1e-6);
        let dev = (check.empirical[0] - check.predicted[0]).abs();
        assert!(dev <= 4.0 * check.stderr[0], "dev {dev} stderr {}", check.stderr[0]);
    }

    #[test]
    fn mean_check_requires_samples() {
        let s = NoiseSchedule::default_vp();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            expected_mean_check(&s, 0.5, 10, &Vector::zeros(1), |_| Vector::zeros(1), &mut rng),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
