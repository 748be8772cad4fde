//! Analytic Gaussian-mixture oracle.
//!
//! For data `x₀ ~ Σ_k w_k N(μ_k, v_k I)` the forward-noised marginal at time
//! `t` is again a mixture, `p_t = Σ_k w_k N(a_t μ_k, (a_t² v_k + σ_t²) I)`,
//! so the score — and with it the MSE-optimal noise and velocity predictions
//! — is closed-form. All mixture sums are log-sum-exp stabilized.

use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::schedule::{NoiseSchedule, DERIVATIVE_STEP, SIGMA_FLOOR};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vector>,
    variances: Vec<f64>,
}

impl GaussianMixture {
    /// Weights must sum to 1 within 1e−12; variances must be positive; all
    /// means must share a dimension.
    pub fn new(weights: Vec<f64>, means: Vec<Vector>, variances: Vec<f64>) -> Result<Self> {
        let mut problems = Vec::new();
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            problems.push(format!(
                "component counts disagree: {} weights, {} means, {} variances",
                weights.len(),
                means.len(),
                variances.len()
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            problems.push(format!("weights sum to {total}, expected 1"));
        }
        if weights.iter().any(|w| *w < 0.0) {
            problems.push("negative component weight".to_string());
        }
        if variances.iter().any(|v| !(*v > 0.0)) {
            problems.push("non-positive component variance".to_string());
        }
        if let Some(first) = means.first() {
            if means.iter().any(|m| m.len() != first.len()) {
                problems.push("component means differ in dimension".to_string());
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        Ok(Self { weights, means, variances })
    }

    /// Deterministic testbed: `components` unit directions drawn from the
    /// seed, scaled by `mean_scale`, with the given weights and a shared
    /// per-component variance.
    pub fn seeded_testbed(
        dim: usize,
        weights: Vec<f64>,
        mean_scale: f64,
        variance: f64,
        seed: u64,
    ) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = weights.len();
        let mut means = Vec::with_capacity(k);
        for _ in 0..k {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            means.push(Vector::new(g.iter().map(|v| mean_scale * v / norm).collect()));
        }
        let variances = vec![variance; k];
        Self::new(weights, means, variances)
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vector] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `E[x₀] = Σ_k w_k μ_k`.
    pub fn mean(&self) -> Vector {
        let mut acc = Vector::zeros(self.dim());
        for (w, m) in self.weights.iter().zip(&self.means) {
            acc = acc.axpy(*w, m).expect("dims validated");
        }
        acc
    }

    /// Draw a data sample.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vector {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u <= acc {
                idx = k;
                break;
            }
        }
        let sd = self.variances[idx].sqrt();
        let mean = &self.means[idx];
        Vector::new(
            (0..self.dim())
                .map(|i| mean[i] + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }

    /// Per-component log densities of the noised marginal at `(x, t)`.
    fn component_log_densities(
        &self,
        x: &Vector,
        t: f64,
        schedule: &NoiseSchedule,
    ) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let (a, sigma) = schedule.scaling(t)?;
        let d = self.dim() as f64;
        let mut logs = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let s2 = a * a * self.variances[k] + sigma * sigma;
            let mut dist2 = 0.0;
            for i in 0..self.dim() {
                let diff = x[i] - a * self.means[k][i];
                dist2 += diff * diff;
            }
            let log_n = -0.5 * d * (2.0 * std::f64::consts::PI * s2).ln() - dist2 / (2.0 * s2);
            logs.push(self.weights[k].ln() + log_n);
        }
        Ok(logs)
    }

    /// Log density of the noised marginal `log p_t(x)`.
    pub fn marginal_log_density(&self, x: &Vector, t: f64, schedule: &NoiseSchedule) -> Result<f64> {
        let logs = self.component_log_densities(x, t, schedule)?;
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        let sum: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        Ok(m + sum.ln())
    }

    /// Posterior component responsibilities at `(x, t)`.
    fn responsibilities(&self, x: &Vector, t: f64, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
        let logs = self.component_log_densities(x, t, schedule)?;
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        let unnorm: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        Ok(unnorm.iter().map(|u| u / total).collect())
    }

    /// Exact noise prediction `ε*(x, t) = −σ_t ∇ log p_t(x)`.
    pub fn epsilon(&self, x: &Vector, t: f64, schedule: &NoiseSchedule) -> Result<Vector> {
        let (a, sigma) = schedule.scaling(t)?;
        if sigma <= 0.0 {
            return Err(Error::SigmaSingularity { t, sigma });
        }
        let resp = self.responsibilities(x, t, schedule)?;
        let mut out = Vector::zeros(self.dim());
        for k in 0..self.components() {
            let s2 = a * a * self.variances[k] + sigma * sigma;
            let coeff = sigma * resp[k] / s2;
            // σ·r_k·(x − a μ_k)/s_k²
            let term = x.axpy(-a, &self.means[k])?;
            out = out.axpy(coeff, &term)?;
        }
        Ok(out)
    }

    /// Posterior mean of the clean sample, `E[x₀ | x_t = x]`.
    pub fn posterior_mean_x0(&self, x: &Vector, t: f64, schedule: &NoiseSchedule) -> Result<Vector> {
        let (a, sigma) = schedule.scaling(t)?;
        let resp = self.responsibilities(x, t, schedule)?;
        let mut out = Vector::zeros(self.dim());
        for k in 0..self.components() {
            let s2 = a * a * self.variances[k] + sigma * sigma;
            let gain = a * self.variances[k] / s2;
            // μ_k + gain·(x − a μ_k)
            let cond = self.means[k].axpy(gain, &x.axpy(-a, &self.means[k])?)?;
            out = out.axpy(resp[k], &cond)?;
        }
        Ok(out)
    }

    /// Exact marginal velocity `u*(x, t) = ȧ·E[x₀|x] + σ̇·E[ε|x]`, the
    /// conditional expectation of the path velocity. Scaling derivatives use
    /// the same centered finite differences as the schedule module.
    pub fn velocity(&self, x: &Vector, t: f64, schedule: &NoiseSchedule) -> Result<Vector> {
        let (a, sigma) = schedule.scaling(t)?;
        if sigma < SIGMA_FLOOR {
            return Err(Error::SigmaSingularity { t, sigma });
        }
        let h = DERIVATIVE_STEP.min(t.min(1.0 - t)).max(1e-9);
        let (ap, sp) = schedule.scaling(t + h)?;
        let (am, sm) = schedule.scaling(t - h)?;
        let a_dot = (ap - am) / (2.0 * h);
        let sigma_dot = (sp - sm) / (2.0 * h);
        let x0_mean = self.posterior_mean_x0(x, t, schedule)?;
        // E[ε|x] = (x − a·E[x₀|x])/σ
        let eps_mean = x.axpy(-a, &x0_mean)?.scale(1.0 / sigma);
        x0_mean.scale(a_dot).axpy(sigma_dot, &eps_mean)
    }
}
