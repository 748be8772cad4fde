//! Sampling policies: the SADA controller, the third-difference baseline,
//! and a forced-schedule policy for paired approximation studies.

use super::{
    channel_mean_signal, eq5_baseline_criterion, evaluate_criterion, tokenwise_plan, ForceMode,
    MultistepState, PolicyParams,
};
use crate::denoiser::DenoiserOracle;
use crate::error::Result;
use crate::schedule::{NoiseSchedule, TimestepGrid};
use crate::solver::{
    run_sampler, Decision, RunOutcome, SadaMode, SamplerConfig, SamplingPolicy, SkipSource,
    SolverStepRecord, StepContext,
};
use serde::Serialize;

/// Criterion scalars logged at one decision point.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionSample {
    /// Step index the decision applied to.
    pub index: usize,
    pub scalar_stat: f64,
    pub stable_fraction: f64,
    pub stable: bool,
}

/// The SADA controller as a sampling policy.
pub struct SadaPolicy {
    params: PolicyParams,
    n_steps: usize,
    /// `(H, W, C)` when the oracle is token-structured.
    token_shape: Option<(usize, usize, usize)>,
    multistep: MultistepState,
    last_was_computed: bool,
    criterion_log: Vec<CriterionSample>,
    min_steps_for_multistep: usize,
}

impl SadaPolicy {
    pub fn new(params: PolicyParams, n_steps: usize, oracle: &dyn DenoiserOracle) -> Result<Self> {
        params.validate()?;
        let token_shape = oracle.token_model().map(|m| {
            let side = (m.tokens() as f64).sqrt().round() as usize;
            if side * side == m.tokens() {
                (side, side, m.channels())
            } else {
                (1, m.tokens(), m.channels())
            }
        });
        let multistep =
            MultistepState::new(params.multistep_interval, params.lagrange_nodes);
        Ok(Self {
            params,
            n_steps,
            token_shape,
            multistep,
            last_was_computed: false,
            criterion_log: Vec::new(),
            // A 4-node buffer at spacing r cannot fill on very short grids.
            min_steps_for_multistep: 7,
        })
    }

    pub fn criterion_log(&self) -> &[CriterionSample] {
        &self.criterion_log
    }

    pub fn multistep_entered_at(&self) -> Option<usize> {
        self.multistep.entered_at()
    }

    fn multistep_allowed(&self) -> bool {
        self.params.enable_multistep && self.n_steps >= self.min_steps_for_multistep
    }
}

impl SamplingPolicy for SadaPolicy {
    fn observe(&mut self, record: &SolverStepRecord) -> Result<()> {
        self.last_was_computed =
            matches!(record.mode, SadaMode::Fresh | SadaMode::TokenWise);
        self.multistep.observe_node(record.index, record.t, &record.x0_t)?;
        Ok(())
    }

    fn decide(&mut self, ctx: &StepContext) -> Result<Decision> {
        if self.params.force_mode == ForceMode::Fresh {
            return Ok(Decision::Fresh);
        }
        // History fill: the first three steps are always fresh.
        if ctx.index < 3 {
            return Ok(Decision::Fresh);
        }
        // Inside the multistep regime the schedule is fixed: anchors stay
        // fresh and refresh the node buffer, everything else interpolates.
        if self.multistep.entered() {
            return if self.multistep.is_anchor(ctx.index) {
                Ok(Decision::Fresh)
            } else {
                Ok(Decision::MultistepWise { x0: self.multistep.interpolate(ctx.t)? })
            };
        }
        // A skipped step leaves no fresh comparison point; the step after it
        // must be computed.
        if !self.last_was_computed {
            return Ok(Decision::Fresh);
        }
        let Some(x_am) = ctx.x_am else {
            return Ok(Decision::Fresh);
        };
        let report = evaluate_criterion(ctx.x_sched, x_am, ctx.hist_y)?;
        let stable = report.stable_under(self.params.criterion_reduction);
        self.criterion_log.push(CriterionSample {
            index: ctx.index,
            scalar_stat: report.scalar_stat,
            stable_fraction: report.stable_fraction,
            stable,
        });
        let entered = self.multistep.record_stability(
            stable,
            self.params.stable_steps_to_enter,
            self.multistep_allowed(),
            ctx.index,
        );
        if stable {
            if entered {
                return if self.multistep.is_anchor(ctx.index) {
                    Ok(Decision::Fresh)
                } else {
                    Ok(Decision::MultistepWise { x0: self.multistep.interpolate(ctx.t)? })
                };
            }
            return Ok(Decision::Skip { source: SkipSource::AdamsMoulton });
        }
        // Unstable: fall back to token-wise pruning when the oracle has
        // token structure and the cache window has opened.
        if self.params.enable_tokenwise && ctx.token_ready {
            if let Some((h, w, c)) = self.token_shape {
                let token_signal = channel_mean_signal(&report.signal, h * w, c)?;
                let plan = tokenwise_plan(&token_signal, (h, w))?;
                if !plan.is_noop() {
                    return Ok(Decision::TokenWise { plan });
                }
            }
        }
        Ok(Decision::Fresh)
    }
}

/// Everything a SADA run logs beyond the trajectory itself.
#[derive(Debug, Clone, Serialize)]
pub struct SadaRunLog {
    pub criterion: Vec<CriterionSample>,
    pub multistep_entered_at: Option<usize>,
    /// Modeling assumptions active during the run.
    pub assumptions: Vec<String>,
}

/// Run the sampler under the SADA controller.
pub fn sada_run(
    config: &SamplerConfig,
    oracle: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    grid: &TimestepGrid,
    params: &PolicyParams,
) -> Result<(RunOutcome, SadaRunLog)> {
    let mut config = config.clone();
    config.token_cache_start = params.token_cache_start;
    config.token_cache_interval = params.token_cache_interval;
    let mut policy = SadaPolicy::new(params.clone(), config.steps, oracle)?;
    let outcome = run_sampler(&config, oracle, schedule, grid, &mut policy)?;
    let mut assumptions = Vec::new();
    if oracle.token_model().is_some() && params.enable_tokenwise {
        assumptions.push(
            "token-wise reconstructions feed the solver's data-prediction history".to_string(),
        );
    }
    let log = SadaRunLog {
        criterion: policy.criterion_log().to_vec(),
        multistep_entered_at: policy.multistep_entered_at(),
        assumptions,
    };
    Ok((outcome, log))
}

/// The third-difference bypass policy. Skipped states keep the scheduler
/// update and reuse the previous noise prediction; the test runs on state
/// differences alone, so bypasses may chain.
pub struct Eq5Policy {
    tau: f64,
}

impl Eq5Policy {
    pub fn new(tau: f64) -> Self {
        Self { tau }
    }
}

impl SamplingPolicy for Eq5Policy {
    fn decide(&mut self, ctx: &StepContext) -> Result<Decision> {
        if ctx.index < 3 || ctx.hist_x.len() < 3 {
            return Ok(Decision::Fresh);
        }
        if eq5_baseline_criterion(ctx.hist_x, ctx.x_sched, self.tau)? {
            Ok(Decision::Skip { source: SkipSource::SchedulerUpdate })
        } else {
            Ok(Decision::Fresh)
        }
    }
}

/// Run the sampler under the third-difference bypass policy.
pub fn eq5_run(
    config: &SamplerConfig,
    oracle: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    grid: &TimestepGrid,
    tau: f64,
) -> Result<RunOutcome> {
    let mut policy = Eq5Policy::new(tau);
    run_sampler(config, oracle, schedule, grid, &mut policy)
}

/// Forced schedule for paired approximation studies: after warmup, every
/// other step is skipped with the configured state source, independent of
/// any criterion. Skips never chain, so both variants of a paired study
/// visit identical step indices.
pub struct ForcedStepwisePolicy {
    source: SkipSource,
    last_was_skip: bool,
}

impl ForcedStepwisePolicy {
    pub fn new(source: SkipSource) -> Self {
        Self { source, last_was_skip: false }
    }
}

impl SamplingPolicy for ForcedStepwisePolicy {
    fn observe(&mut self, record: &SolverStepRecord) -> Result<()> {
        self.last_was_skip = record.mode == SadaMode::StepWise;
        Ok(())
    }

    fn decide(&mut self, ctx: &StepContext) -> Result<Decision> {
        if ctx.index < 3 || self.last_was_skip || ctx.x_am.is_none() {
            return Ok(Decision::Fresh);
        }
        Ok(Decision::Skip { source: self.source })
    }
}
