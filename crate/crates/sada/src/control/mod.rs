//! The SADA controller: stability criterion, sparsity-mode dispatch, and the
//! approximation machinery behind each mode.
//!
//! After every computed step the controller compares the scheduler-updated
//! next state against the Adams–Moulton estimate built from the gradient
//! history; the sign of the elementwise product with the second gradient
//! difference decides whether the next step may be approximated. Stable
//! steps skip the model (step-wise), sustained stability unlocks
//! uniform-interval skipping with Lagrange-interpolated data predictions
//! (multistep-wise), and unstable steps on token-structured models fall back
//! to partial computation through the per-layer cache (token-wise).
//!
//! The third-difference bypass test of prior step-skipping work is included
//! as a comparison policy.

mod policy;

pub use policy::{
    eq5_run, sada_run, CriterionSample, Eq5Policy, ForcedStepwisePolicy, SadaPolicy, SadaRunLog,
};

use crate::denoiser::{
    cache_assisted_forward, EvalCounter, LayerCache, TokenCachePlan, TokenFeatureMap, TokenModel,
};
use crate::error::{Error, Result};
use crate::numerics::{
    adams_moulton_estimate, lagrange_interpolate, LagrangeBuffer, RingBuffer3, Vector,
};
use crate::schedule::NoiseSchedule;
use serde::{Deserialize, Serialize};

/// How the elementwise criterion signal is reduced to a step-level decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionReduction {
    /// Stable iff the mean of the elementwise product is negative.
    Mean,
    /// Stable iff more than half the entries are negative.
    StableFraction,
}

/// Per-token statistic used to build the token mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenStat {
    ChannelMean,
}

/// Forced controller behavior, for pass-through checks and ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceMode {
    #[default]
    None,
    /// Disable the controller entirely: every step is fresh.
    Fresh,
}

/// Controller knobs, echoed into every run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyParams {
    pub criterion_reduction: CriterionReduction,
    /// Consecutive stable criterion results required to enter the
    /// multistep regime (M).
    pub stable_steps_to_enter: usize,
    /// Multistep skip interval (r): every r-th grid index stays fresh.
    pub multistep_interval: usize,
    /// Node-buffer capacity for the interpolated reconstructions (k+1).
    pub lagrange_nodes: usize,
    /// First step index eligible for token-cache pruning (T*).
    pub token_cache_start: usize,
    /// Token cache refresh interval (i).
    pub token_cache_interval: usize,
    pub token_stat: TokenStat,
    pub force_mode: ForceMode,
    pub enable_multistep: bool,
    pub enable_tokenwise: bool,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            criterion_reduction: CriterionReduction::Mean,
            stable_steps_to_enter: 3,
            multistep_interval: 4,
            lagrange_nodes: 4,
            token_cache_start: 5,
            token_cache_interval: 3,
            token_stat: TokenStat::ChannelMean,
            force_mode: ForceMode::None,
            enable_multistep: true,
            enable_tokenwise: true,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.stable_steps_to_enter == 0 {
            problems.push("stable_steps_to_enter must be >= 1".to_string());
        }
        if self.multistep_interval < 2 {
            problems.push("multistep_interval must be >= 2".to_string());
        }
        if self.lagrange_nodes < 2 {
            problems.push("lagrange_nodes must be >= 2".to_string());
        }
        if self.token_cache_interval < 1 {
            problems.push("token_cache_interval must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

/// Outcome of one stability evaluation.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Elementwise `(x_{t−1} − x̂_{t−1}) ⊙ Δ²y_t`.
    pub signal: Vector,
    /// Mean of the signal.
    pub scalar_stat: f64,
    /// Share of entries strictly below zero.
    pub stable_fraction: f64,
    /// Step-level decision: `scalar_stat < 0` (strict; an identically zero
    /// signal is not anti-aligned and therefore unstable).
    pub is_stable: bool,
}

impl StabilityReport {
    /// Decision under the configured reduction.
    pub fn stable_under(&self, reduction: CriterionReduction) -> bool {
        match reduction {
            CriterionReduction::Mean => self.is_stable,
            CriterionReduction::StableFraction => self.stable_fraction > 0.5,
        }
    }
}

/// Stability criterion: the extrapolation error `x_{t−1} − x̂_{t−1}` must be
/// anti-aligned with the local gradient curvature `Δ²y_t`.
///
/// `x_next` is the realized next state, `x_hat` the Adams–Moulton estimate
/// from the same histories, and `grads` the gradient history (newest first)
/// whose second backward difference supplies the curvature.
pub fn evaluate_criterion(
    x_next: &Vector,
    x_hat: &Vector,
    grads: &RingBuffer3,
) -> Result<StabilityReport> {
    if grads.len() < 3 {
        return Err(Error::NotEnoughHistory { needed: 3, have: grads.len() });
    }
    let (_, y0) = grads.get(0).unwrap();
    let (_, y1) = grads.get(1).unwrap();
    let (_, y2) = grads.get(2).unwrap();
    let d2y = y0.axpy(-2.0, y1)?.add(y2)?;
    let signal = x_next.sub(x_hat)?.hadamard(&d2y)?;
    let scalar_stat = signal.mean();
    let negatives = signal.as_slice().iter().filter(|v| **v < 0.0).count();
    let stable_fraction = negatives as f64 / signal.len().max(1) as f64;
    Ok(StabilityReport { signal, scalar_stat, stable_fraction, is_stable: scalar_stat < 0.0 })
}

/// Third-difference bypass test used by prior step-skipping work, as a
/// comparison policy: with `Δ¹x_s = x_s − x_{s+1}`, the model is bypassed
/// when
///
/// `((‖Δ¹x_{t+2}‖ + ‖Δ¹x_t‖)/2 − ‖Δ¹x_{t+1}‖)/‖Δ¹x_{t+1}‖ ≤ τ`.
pub fn eq5_baseline_criterion(states: &RingBuffer3, x_next: &Vector, tau: f64) -> Result<bool> {
    if states.len() < 3 {
        return Err(Error::NotEnoughHistory { needed: 3, have: states.len() });
    }
    let (_, x1) = states.get(0).unwrap();
    let (_, x2) = states.get(1).unwrap();
    let (_, x3) = states.get(2).unwrap();
    let d_new = x_next.sub(x1)?.norm();
    let d_mid = x1.sub(x2)?.norm();
    let d_old = x2.sub(x3)?.norm();
    if d_mid == 0.0 {
        return Err(Error::DegenerateNorm("middle first difference has zero norm"));
    }
    Ok((0.5 * (d_old + d_new) - d_mid) / d_mid <= tau)
}

/// Step-wise approximation: Adams–Moulton state estimate, reused noise, and
/// the data prediction recomputed at the new time. No denoiser call.
pub fn stepwise_approximate(
    x_t: &Vector,
    grads: &RingBuffer3,
    eps_t: &Vector,
    dt: f64,
    t_next: f64,
    schedule: &NoiseSchedule,
) -> Result<(Vector, Vector, Vector)> {
    let x_hat = adams_moulton_estimate(x_t, grads, dt)?;
    let eps_hat = eps_t.clone();
    let x0_hat = schedule.data_prediction(&x_hat, &eps_hat, t_next)?;
    Ok((x_hat, eps_hat, x0_hat))
}

/// What the multistep bookkeeping did at a step.
#[derive(Debug, Clone, PartialEq)]
pub enum MultistepAction {
    /// The step's data prediction was stored as an interpolation node.
    CacheNode,
    /// Nothing to do at this step.
    Pass,
}

/// State of the multistep regime: entry gating plus the rolling node buffer.
#[derive(Debug, Clone)]
pub struct MultistepState {
    entered: bool,
    entered_at: Option<usize>,
    consecutive_stable: usize,
    interval: usize,
    buffer: LagrangeBuffer,
}

impl MultistepState {
    pub fn new(interval: usize, nodes: usize) -> Self {
        Self {
            entered: false,
            entered_at: None,
            consecutive_stable: 0,
            interval,
            buffer: LagrangeBuffer::new(nodes.max(2)),
        }
    }

    pub fn entered(&self) -> bool {
        self.entered
    }

    pub fn entered_at(&self) -> Option<usize> {
        self.entered_at
    }

    pub fn consecutive_stable(&self) -> usize {
        self.consecutive_stable
    }

    pub fn buffer(&self) -> &LagrangeBuffer {
        &self.buffer
    }

    /// Whether `index` is one of the fresh anchor steps of the regime.
    pub fn is_anchor(&self, index: usize) -> bool {
        index % self.interval == 0
    }

    /// Node bookkeeping: data predictions at anchor indices enter the
    /// rolling buffer (both before entry, to prefill it, and after entry,
    /// when the fresh anchors refresh it).
    pub fn observe_node(&mut self, index: usize, t: f64, x0: &Vector) -> Result<MultistepAction> {
        if self.is_anchor(index) {
            self.buffer.push(t, x0.clone())?;
            Ok(MultistepAction::CacheNode)
        } else {
            Ok(MultistepAction::Pass)
        }
    }

    /// Entry gating: a stable criterion result extends the streak, an
    /// unstable one resets it. Entry requires `threshold` consecutive
    /// stables, an allowance flag, and at least two buffered nodes.
    /// Returns whether the regime is (now) entered.
    pub fn record_stability(&mut self, stable: bool, threshold: usize, allowed: bool, index: usize) -> bool {
        if stable {
            self.consecutive_stable += 1;
        } else {
            self.consecutive_stable = 0;
        }
        if !self.entered
            && allowed
            && stable
            && self.consecutive_stable >= threshold
            && self.buffer.len() >= 2
        {
            self.entered = true;
            self.entered_at = Some(index);
        }
        self.entered
    }

    /// Interpolated data prediction for a skipped step inside the regime.
    pub fn interpolate(&self, t: f64) -> Result<Vector> {
        if self.buffer.len() < 2 {
            return Err(Error::CacheUnderfull(self.buffer.len()));
        }
        lagrange_interpolate(&self.buffer, t)
    }
}

/// Channel-mean reduction of a flattened `(tokens × channels)` signal to a
/// per-token statistic.
pub fn channel_mean_signal(signal: &Vector, tokens: usize, channels: usize) -> Result<Vec<f64>> {
    if signal.len() != tokens * channels {
        return Err(Error::DimensionMismatch { expected: tokens * channels, got: signal.len() });
    }
    let s = signal.as_slice();
    Ok((0..tokens)
        .map(|i| s[i * channels..(i + 1) * channels].iter().sum::<f64>() / channels as f64)
        .collect())
}

/// Build the token partition from a per-token stability signal over an
/// `H × W` token grid: stable tokens (signal < 0) are reduced, the rest are
/// fixed for fresh computation.
pub fn tokenwise_plan(token_signal: &[f64], grid_shape: (usize, usize)) -> Result<TokenCachePlan> {
    let n = grid_shape.0 * grid_shape.1;
    if token_signal.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: token_signal.len() });
    }
    let mut fix = Vec::new();
    let mut reduce = Vec::new();
    for (j, s) in token_signal.iter().enumerate() {
        if *s < 0.0 {
            reduce.push(j);
        } else {
            fix.push(j);
        }
    }
    TokenCachePlan::new(fix, reduce, n)
}

/// Execute one token-wise step of the cache protocol (init on interval
/// steps, prune/update/reconstruct otherwise). Returns the output map and
/// the step's cost fraction.
#[allow(clippy::too_many_arguments)]
pub fn tokenwise_execute(
    x: &TokenFeatureMap,
    plan: &TokenCachePlan,
    cache: &mut LayerCache,
    model: &TokenModel,
    t: f64,
    step: usize,
    counter: &mut EvalCounter,
    shadow: &mut u64,
) -> Result<(TokenFeatureMap, f64)> {
    cache_assisted_forward(x, t, step, model, plan, cache, counter, shadow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(values: &[(f64, Vec<f64>)]) -> RingBuffer3 {
        let mut b = RingBuffer3::new();
        for (t, v) in values.iter().rev() {
            b.push(*t, Vector::new(v.clone())).unwrap();
        }
        b
    }

    #[test]
    fn zero_error_is_not_stable() {
        let g = grads(&[(0.5, vec![1.0]), (0.6, vec![2.0]), (0.7, vec![4.0])]);
        let x = Vector::new(vec![3.0]);
        let report = evaluate_criterion(&x, &x, &g).unwrap();
        assert_eq!(report.scalar_stat, 0.0);
        assert!(!report.is_stable);
        assert_eq!(report.stable_fraction, 0.0);
    }

    #[test]
    fn sign_arithmetic() {
        // error = +0.1, Δ²y = −0.2 → signal −0.02 < 0 → stable.
        let g = grads(&[(0.5, vec![0.0]), (0.6, vec![0.1]), (0.7, vec![0.0])]);
        // Δ²y = 0 − 2·0.1 + 0 = −0.2
        let x_next = Vector::new(vec![0.1]);
        let x_hat = Vector::new(vec![0.0]);
        let report = evaluate_criterion(&x_next, &x_hat, &g).unwrap();
        assert!((report.signal[0] + 0.02).abs() < 1e-15);
        assert!(report.is_stable);
        assert_eq!(report.stable_fraction, 1.0);
    }

    #[test]
    fn criterion_requires_history() {
        let g = grads(&[(0.5, vec![0.0]), (0.6, vec![0.1])]);
        let x = Vector::new(vec![0.0]);
        assert!(matches!(
            evaluate_criterion(&x, &x, &g),
            Err(Error::NotEnoughHistory { .. })
        ));
    }

    #[test]
    fn smooth_trajectory_is_mostly_stable() {
        // x(t) = cos t sampled uniformly; compare the true next value with
        // the Adams–Moulton estimate. Interior steps are overwhelmingly
        // stable: the estimator error tracks −(13/12)h³y″ while Δ²y ≈ h²y″,
        // so the product is negative wherever y″ ≠ 0.
        let h = 0.01;
        let mut stable = 0usize;
        let mut total = 0usize;
        for k in 3..200 {
            let t = 2.0 - k as f64 * h;
            let x = |tt: f64| tt.cos();
            let y = |tt: f64| -tt.sin();
            let g = grads(&[
                (t, vec![y(t)]),
                (t + h, vec![y(t + h)]),
                (t + 2.0 * h, vec![y(t + 2.0 * h)]),
            ]);
            let x_hat = adams_moulton_estimate(&Vector::new(vec![x(t)]), &g, h).unwrap();
            let x_next = Vector::new(vec![x(t - h)]);
            let report = evaluate_criterion(&x_next, &x_hat, &g).unwrap();
            total += 1;
            if report.is_stable {
                stable += 1;
            }
        }
        let fraction = stable as f64 / total as f64;
        assert!(fraction >= 0.9, "stable fraction {fraction}");
    }

    #[test]
    fn eq5_trivials() {
        // Constant-difference trajectory → statistic 0 ≤ any τ ≥ 0.
        let s = grads(&[(0.5, vec![3.0]), (0.6, vec![2.0]), (0.7, vec![1.0])]);
        let x_next = Vector::new(vec![4.0]);
        assert!(eq5_baseline_criterion(&s, &x_next, 0.0).unwrap());
        // Very negative τ → never bypass.
        assert!(!eq5_baseline_criterion(&s, &x_next, -1e9).unwrap());
        // Degenerate middle difference.
        let s = grads(&[(0.5, vec![1.0]), (0.6, vec![1.0]), (0.7, vec![0.0])]);
        assert!(matches!(
            eq5_baseline_criterion(&s, &x_next, 0.0),
            Err(Error::DegenerateNorm(_))
        ));
    }

    #[test]
    fn stepwise_zero_velocity() {
        let schedule = NoiseSchedule::default_vp();
        let g = grads(&[(0.5, vec![0.0]), (0.52, vec![0.0]), (0.54, vec![0.0])]);
        let x = Vector::new(vec![1.0]);
        let eps = Vector::new(vec![0.3]);
        let (x_hat, eps_hat, x0_hat) =
            stepwise_approximate(&x, &g, &eps, 0.02, 0.48, &schedule).unwrap();
        assert_eq!(x_hat.as_slice(), x.as_slice());
        assert_eq!(eps_hat.as_slice(), eps.as_slice());
        let expect = schedule.data_prediction(&x, &eps, 0.48).unwrap();
        assert_eq!(x0_hat.as_slice(), expect.as_slice());
    }

    #[test]
    fn multistep_gate_resets_on_unstable() {
        let mut ms = MultistepState::new(4, 4);
        ms.observe_node(0, 0.9, &Vector::new(vec![1.0])).unwrap();
        ms.observe_node(4, 0.8, &Vector::new(vec![1.1])).unwrap();
        // Alternating stable/unstable never enters.
        for i in 0..10 {
            ms.record_stability(i % 2 == 0, 3, true, i);
        }
        assert!(!ms.entered());
        // Three consecutive stables enter.
        for i in 10..13 {
            ms.record_stability(true, 3, true, i);
        }
        assert!(ms.entered());
        assert_eq!(ms.entered_at(), Some(12));
    }

    #[test]
    fn multistep_interpolation_is_node_exact() {
        let mut ms = MultistepState::new(4, 4);
        ms.observe_node(0, 0.9, &Vector::new(vec![2.0])).unwrap();
        ms.observe_node(4, 0.8, &Vector::new(vec![3.0])).unwrap();
        ms.observe_node(8, 0.7, &Vector::new(vec![5.0])).unwrap();
        let v = ms.interpolate(0.8).unwrap();
        assert_eq!(v[0].to_bits(), 3.0_f64.to_bits());
        // Non-anchor indices leave the buffer untouched.
        assert_eq!(ms.observe_node(9, 0.69, &Vector::new(vec![9.0])).unwrap(), MultistepAction::Pass);
        assert_eq!(ms.buffer().len(), 3);
    }

    #[test]
    fn multistep_underfull_interpolation_errors() {
        let mut ms = MultistepState::new(4, 4);
        ms.observe_node(0, 0.9, &Vector::new(vec![2.0])).unwrap();
        assert!(matches!(ms.interpolate(0.85), Err(Error::CacheUnderfull(1))));
    }

    #[test]
    fn token_plan_from_signal() {
        // All-positive signal: nothing reduced.
        let plan = tokenwise_plan(&[1.0, 2.0, 0.0, 3.0], (2, 2)).unwrap();
        assert!(plan.is_noop());
        // All-negative: everything reduced.
        let plan = tokenwise_plan(&[-1.0; 4], (2, 2)).unwrap();
        assert!(plan.fix().is_empty());
        // Checkerboard on 8×8 splits exactly 32/32 with a bijective mapping.
        let signal: Vec<f64> =
            (0..64).map(|i| if (i / 8 + i % 8) % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let plan = tokenwise_plan(&signal, (8, 8)).unwrap();
        assert_eq!(plan.fix().len(), 32);
        assert_eq!(plan.reduce().len(), 32);
        for (j, &orig) in plan.fix().iter().enumerate() {
            assert_eq!(plan.compact_index(orig), Some(j));
        }
    }

    #[test]
    fn channel_mean_reduces_correctly() {
        let signal = Vector::new(vec![1.0, 3.0, -2.0, -4.0]);
        let means = channel_mean_signal(&signal, 2, 2).unwrap();
        assert_eq!(means, vec![2.0, -3.0]);
        assert!(channel_mean_signal(&signal, 3, 2).is_err());
    }
}
